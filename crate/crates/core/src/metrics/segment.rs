use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::maskgen::BinaryMask;
use crate::shapeworld::ClassCatalog;

/// Weight of the center pixel in the 3×3 median; the 8 neighbours count once.
pub const MEDIAN_CENTER_WEIGHT: usize = 7;

fn l1(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Center-weighted 3×3 vector median of an `H × W × 3` image, edge pixels
/// replicated: every pixel becomes the window color with the least weighted
/// L1 distance to the others, the center winning ties. On a piecewise
/// constant image a pixel only changes when none of its eight neighbours
/// shares its color, so single-pixel noise goes while corners stay.
pub fn median_smooth(image: &[f32], width: usize, height: usize) -> Result<Vec<f32>> {
    if image.len() != width * height * 3 {
        return Err(invalid("median smooth", format!("{} values for {width}×{height}×3", image.len())));
    }
    let mut out = vec![0.0; image.len()];
    let mut window: Vec<&[f32]> = Vec::with_capacity(9);
    for y in 0..height {
        for x in 0..width {
            window.clear();
            let at = |xx: usize, yy: usize| &image[(yy * width + xx) * 3..(yy * width + xx) * 3 + 3];
            window.push(at(x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx != 0 || dy != 0 {
                        let yy = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                        window.push(at(xx, yy));
                    }
                }
            }
            let cost = |c: &[f32]| -> f32 { MEDIAN_CENTER_WEIGHT as f32 * l1(c, window[0]) + window[1..].iter().map(|n| l1(c, n)).sum::<f32>() };
            let mut best = (cost(window[0]), 0);
            for (i, cand) in window.iter().enumerate().skip(1) {
                let c = cost(cand);
                if c < best.0 {
                    best = (c, i);
                }
            }
            out[(y * width + x) * 3..(y * width + x) * 3 + 3].copy_from_slice(window[best.1]);
        }
    }
    Ok(out)
}

/// Stand-in for a trained segmentation network on shapeworld images:
/// smoothing, then the nearest catalog color, ties to the lower class id.
pub fn oracle_segment(image: &[f32], width: usize, height: usize, catalog: &ClassCatalog) -> Result<Vec<u16>> {
    let smooth = median_smooth(image, width, height)?;
    Ok(smooth
        .chunks_exact(3)
        .map(|px| {
            let mut best = (f32::INFINITY, 0u16);
            for class in &catalog.classes {
                let d: f32 = px.iter().zip(&class.color).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 || (d == best.0 && class.id < best.1) {
                    best = (d, class.id);
                }
            }
            best.1
        })
        .collect())
}

/// Which pixels a segmentation score covers.
#[derive(Clone, Copy, Debug)]
pub enum Scope<'a> {
    Full,
    HolesOnly(&'a BinaryMask),
}

/// `K × K` pixel counts, rows ground truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub miou: f64,
    pub acc: f64,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &[u16], gt: &[u16], scope: Scope<'_>) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(invalid("confusion matrix", format!("maps of {} and {} pixels", pred.len(), gt.len())));
        }
        if let Scope::HolesOnly(m) = scope {
            if m.data.len() != gt.len() {
                return Err(invalid("confusion matrix", "mask and maps differ in size"));
            }
        }
        let k = self.classes;
        if let Some(bad) = pred.iter().chain(gt).find(|&&c| c as usize >= k) {
            return Err(invalid("confusion matrix", format!("class {bad} outside 0..{k}")));
        }
        for (p, (&a, &b)) in pred.iter().zip(gt).enumerate() {
            if let Scope::HolesOnly(m) = scope {
                if m.data[p] == 0 {
                    continue;
                }
            }
            self.counts[b as usize * k + a as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(invalid("confusion matrix", "class counts differ"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// IoU averaged over classes present in the ground truth, and pixel
    /// accuracy.
    pub fn scores(&self) -> Result<SegmentationScores> {
        let total = self.total();
        if total == 0 {
            return Err(invalid("segmentation scores", "no pixels in scope"));
        }
        let k = self.classes;
        let correct: u64 = (0..k).map(|c| self.get(c, c)).sum();
        let mut ious = Vec::new();
        for c in 0..k {
            let gt: u64 = (0..k).map(|p| self.get(c, p)).sum();
            if gt == 0 {
                continue;
            }
            let pred: u64 = (0..k).map(|g| self.get(g, c)).sum();
            let tp = self.get(c, c);
            ious.push(tp as f64 / (gt + pred - tp) as f64);
        }
        Ok(SegmentationScores { miou: ious.iter().sum::<f64>() / ious.len() as f64, acc: correct as f64 / total as f64 })
    }
}

pub fn miou_and_accuracy(pred: &[u16], gt: &[u16], classes: usize, scope: Scope<'_>) -> Result<SegmentationScores> {
    let mut cm = ConfusionMatrix::new(classes);
    cm.add(pred, gt, scope)?;
    cm.scores()
}
