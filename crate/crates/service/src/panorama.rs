//! Wide images by repeated outpainting to the right.

use std::collections::BTreeMap;

use sse_core::maskgen::BinaryMask;
use sse_core::shapeworld::LabeledScene;

use crate::error::{Result, ServiceError};
use crate::store::LoadedModel;

/// A stitched canvas and its labels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    /// `H × width × 3` in [0, 1].
    pub image: Vec<f32>,
    pub semantic: Vec<u16>,
    pub instance: Vec<u16>,
    /// Canvas after each step, first entry the input.
    pub history: Vec<Vec<f32>>,
}

/// Width of the strip added per step.
pub fn strip_width(width: usize, fraction: f64) -> Result<usize> {
    let s = width as f64 * fraction;
    if !(fraction > 0.0 && fraction < 1.0) || s.fract() != 0.0 {
        return Err(ServiceError::field("step_fraction", format!("{fraction} × {width} is not a whole strip narrower than the image")));
    }
    Ok(s as usize)
}

/// Labels of a `visible`-column map extended by `strip` columns: the new
/// columns mirror the existing ones about the right border, then repeat the
/// last mirrored column once the existing columns run out.
pub fn extend_labels(labels: &[u16], visible: usize, height: usize, strip: usize) -> Vec<u16> {
    let w = visible + strip;
    let mut out = vec![0; w * height];
    for y in 0..height {
        let row = &labels[y * visible..(y + 1) * visible];
        out[y * w..y * w + visible].copy_from_slice(row);
        for j in 0..strip {
            out[y * w + visible + j] = row[visible - 1 - j.min(visible - 1)];
        }
    }
    out
}

fn columns<T: Copy>(data: &[T], width: usize, height: usize, channels: usize, from: usize, to: usize) -> Vec<T> {
    (0..height).flat_map(|y| data[(y * width + from) * channels..(y * width + to) * channels].iter().copied()).collect()
}

/// Rows of `old` (`old_w` wide) followed by columns `from..` of `new` (`new_w` wide).
fn append_columns<T: Copy>(old: &[T], old_w: usize, new: &[T], new_w: usize, from: usize, height: usize, ch: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(old.len() + (new_w - from) * height * ch);
    for y in 0..height {
        out.extend_from_slice(&old[y * old_w * ch..(y + 1) * old_w * ch]);
        out.extend_from_slice(&new[(y * new_w + from) * ch..(y + 1) * new_w * ch]);
    }
    out
}

/// Extend `scene` to `W·(1 + steps·fraction)` columns. Each step runs the
/// model on the rightmost `W − s` canvas columns plus an erased strip of
/// `s = W·fraction` columns and appends the generated strip; earlier canvas
/// pixels are never rewritten.
pub fn panorama(model: &LoadedModel, scene: &LabeledScene, steps: usize, fraction: f64) -> Result<Panorama> {
    let (w, h) = (scene.width, scene.height);
    let mut pano = Panorama {
        width: w,
        height: h,
        image: scene.image.clone(),
        semantic: scene.semantic.clone(),
        instance: scene.instance.clone(),
        history: vec![scene.image.clone()],
    };
    if steps == 0 {
        return Ok(pano);
    }
    let s = strip_width(w, fraction)?;
    let visible = w - s;
    for _ in 0..steps {
        let cw = pano.width;
        let sem = extend_labels(&columns(&pano.semantic, cw, h, 1, cw - visible, cw), visible, h, s);
        let inst = extend_labels(&columns(&pano.instance, cw, h, 1, cw - visible, cw), visible, h, s);
        let vis_img = columns(&pano.image, cw, h, 3, cw - visible, cw);
        let mut img = vec![0.0; w * h * 3];
        for y in 0..h {
            img[y * w * 3..(y * w + visible) * 3].copy_from_slice(&vis_img[y * visible * 3..(y + 1) * visible * 3]);
        }
        let window = LabeledScene::from_parts(w, h, img, sem.clone(), inst.clone(), scene.seed)?;
        let mask = BinaryMask::from_fn(w, h, |x, _| x >= visible);
        // Mirrored labels keep every region partly visible, so no references are needed.
        let out = model.model.infer(&window, &mask, &BTreeMap::new())?;

        pano.image = append_columns(&pano.image, cw, &out.image, w, visible, h, 3);
        pano.semantic = append_columns(&pano.semantic, cw, &sem, w, visible, h, 1);
        pano.instance = append_columns(&pano.instance, cw, &inst, w, visible, h, 1);
        pano.width = cw + s;
        pano.history.push(pano.image.clone());
    }
    Ok(pano)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_mirror_then_repeat() {
        let labels = [1, 2, 3, 4, 5, 6];
        assert_eq!(extend_labels(&labels, 3, 2, 2), vec![1, 2, 3, 3, 2, 4, 5, 6, 6, 5]);
        assert_eq!(extend_labels(&[7, 8], 2, 1, 4), vec![7, 8, 8, 7, 7, 7]);
    }

    #[test]
    fn strip_must_be_whole() {
        assert_eq!(strip_width(64, 0.25).unwrap(), 16);
        assert!(strip_width(64, 0.3).is_err());
        assert!(strip_width(64, 1.0).is_err());
    }
}
