use crate::error::{invalid, Result};
use crate::{Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    /// Nearest-neighbour ×2.
    Up,
    /// 2×2 average pooling.
    Down,
}

/// Nearest-neighbour ×2 upsampling of the last two axes of a rank-4 buffer.
pub fn upsample2_data<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * h2 * w2];
    for p in 0..planes {
        for i in 0..h2 {
            let src = &x[(p * h + i / 2) * w..(p * h + i / 2 + 1) * w];
            let dst = &mut out[(p * h2 + i) * w2..(p * h2 + i + 1) * w2];
            for (j, d) in dst.iter_mut().enumerate() {
                *d = src[j / 2];
            }
        }
    }
    out
}

/// 2×2 mean pooling; `h` and `w` must be even. Pairwise summation keeps
/// `avgpool2(upsample2(x)) == x` bit-exact.
pub fn avgpool2_data<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); planes * h2 * w2];
    for p in 0..planes {
        for i in 0..h2 {
            let r0 = &x[(p * h + 2 * i) * w..(p * h + 2 * i + 1) * w];
            let r1 = &x[(p * h + 2 * i + 1) * w..(p * h + 2 * i + 2) * w];
            for j in 0..w2 {
                out[(p * h2 + i) * w2 + j] = ((r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1])) * quarter;
            }
        }
    }
    out
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn resample2(self, direction: Resample) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let planes = n * c;
        match direction {
            Resample::Up => {
                let out = Tensor::new(vec![n, c, 2 * h, 2 * w], upsample2_data(x.data(), planes, h, w))?;
                self.graph().record("upsample2", &[self], out, move |g, _| {
                    // the adjoint of nearest upsampling is 4× the mean pool
                    let pooled = avgpool2_data(g.data(), planes, 2 * h, 2 * w);
                    let four = T::of(4.0);
                    Ok(vec![Some(Tensor::new(vec![n, c, h, w], pooled.into_iter().map(|v| v * four).collect())?)])
                })
            }
            Resample::Down => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(invalid("avgpool2", format!("spatial extent {h}×{w} is not even")));
                }
                let out = Tensor::new(vec![n, c, h / 2, w / 2], avgpool2_data(x.data(), planes, h, w))?;
                self.graph().record("avgpool2", &[self], out, move |g, _| {
                    let quarter = T::of(0.25);
                    let spread = upsample2_data(g.data(), planes, h / 2, w / 2);
                    Ok(vec![Some(Tensor::new(vec![n, c, h, w], spread.into_iter().map(|v| v * quarter).collect())?)])
                })
            }
        }
    }

    pub fn upsample2(self) -> Result<Var<'g, T>> {
        self.resample2(Resample::Up)
    }

    pub fn avgpool2(self) -> Result<Var<'g, T>> {
        self.resample2(Resample::Down)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn up_replicates() {
        let g = Graph::<f32>::new();
        let y = g.constant(Tensor::full(vec![1, 1, 1, 1], 5.0)).upsample2().unwrap().value();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0; 4]);
    }

    #[test]
    fn down_of_up_is_exact() {
        let g = Graph::<f32>::new();
        let x = Tensor::from_fn(vec![2, 3, 4, 5], |i| (i as f32 * 1.7).cos() * 3.0);
        let y = g.constant(x.clone()).upsample2().unwrap().avgpool2().unwrap().value();
        assert_eq!(y, x);
    }

    #[test]
    fn odd_extent_cannot_be_pooled() {
        let g = Graph::<f32>::new();
        assert!(g.constant(Tensor::zeros(vec![1, 1, 3, 4])).avgpool2().is_err());
    }
}
