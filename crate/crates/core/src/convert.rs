//! Conversions between scene data and model tensors.
//!
//! Model images are `N × 3 × H × W` in [-1, 1]; scene images are `H × W × 3`
//! in [0, 1].

use sse_tensor::{Scalar, Tensor};

use crate::error::{invalid, Result};
use crate::maskgen::BinaryMask;
use crate::shapeworld::LabeledScene;

/// One scene image as a `1 × 3 × H × W` tensor in [-1, 1].
pub fn image_tensor<T: Scalar>(width: usize, height: usize, image: &[f32]) -> Result<Tensor<T>> {
    let n = width * height;
    if image.len() != 3 * n {
        return Err(invalid("image tensor", format!("{} values for {width}×{height}×3", image.len())));
    }
    let mut data = vec![T::zero(); 3 * n];
    for p in 0..n {
        for c in 0..3 {
            data[c * n + p] = T::of(image[3 * p + c] as f64 * 2.0 - 1.0);
        }
    }
    Ok(Tensor::new(vec![1, 3, height, width], data)?)
}

/// Inverse of [`image_tensor`] for sample `index`, clamped to [0, 1].
pub fn tensor_image<T: Scalar>(t: &Tensor<T>, index: usize) -> Result<Vec<f32>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 || index >= n {
        return Err(invalid("tensor image", format!("sample {index} of {:?}", t.shape())));
    }
    let hw = h * w;
    let src = &t.data()[index * 3 * hw..(index + 1) * 3 * hw];
    let mut out = vec![0f32; 3 * hw];
    for p in 0..hw {
        for ch in 0..3 {
            out[3 * p + ch] = ((src[ch * hw + p].f64() + 1.0) * 0.5).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}

pub fn mask_tensor<T: Scalar>(mask: &BinaryMask) -> Tensor<T> {
    Tensor::from_fn(vec![1, 1, mask.height, mask.width], |p| T::of(mask.data[p] as f64))
}

/// `1 × K × H × W` one-hot of the semantic map.
pub fn onehot_tensor<T: Scalar>(scene: &LabeledScene, classes: usize) -> Result<Tensor<T>> {
    let n = scene.pixels();
    let mut data = vec![T::zero(); classes * n];
    for (p, &c) in scene.semantic.iter().enumerate() {
        if c as usize >= classes {
            return Err(invalid("one-hot", format!("class {c} at pixel {p} but only {classes} classes")));
        }
        data[c as usize * n + p] = T::one();
    }
    Ok(Tensor::new(vec![1, classes, scene.height, scene.width], data)?)
}

pub fn edge_tensor<T: Scalar>(scene: &LabeledScene) -> Tensor<T> {
    Tensor::from_fn(vec![1, 1, scene.height, scene.width], |p| T::of(scene.edges[p] as f64))
}

/// `image ⊙ (1 − M)` concatenated with `M`: the 4-channel erased input.
pub fn erased_input<T: Scalar>(image: &Tensor<T>, mask: &BinaryMask) -> Result<Tensor<T>> {
    let (n, c, h, w) = image.dims4()?;
    if n != 1 || c != 3 || (h, w) != (mask.height, mask.width) {
        return Err(invalid("erased input", format!("image {:?} with mask {}×{}", image.shape(), mask.width, mask.height)));
    }
    let hw = h * w;
    let mut data = image.data().to_vec();
    for ch in 0..3 {
        for p in 0..hw {
            if mask.data[p] == 1 {
                data[ch * hw + p] = T::zero();
            }
        }
    }
    data.extend(mask.data.iter().map(|&m| T::of(m as f64)));
    Ok(Tensor::new(vec![1, 4, h, w], data)?)
}
