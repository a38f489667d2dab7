use crate::error::{invalid, Result};
use crate::{Scalar, Tensor, Var};

/// Epsilon added to the variance before the square root.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

impl<'g, T: Scalar> Var<'g, T> {
    /// Per-sample, per-channel normalization over the spatial extent (no affine).
    pub fn instance_norm(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        if hw < 2 {
            return Err(invalid("instance_norm", format!("spatial size {h}×{w} has fewer than 2 elements")));
        }
        let mut out = vec![T::zero(); x.numel()];
        let mut inv_std = vec![0.0f64; n * c];
        for (plane_idx, (src, dst)) in x.data().chunks(hw).zip(out.chunks_mut(hw)).enumerate() {
            let mean = src.iter().map(|v| v.f64()).sum::<f64>() / hw as f64;
            let var = src.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / hw as f64;
            let istd = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
            inv_std[plane_idx] = istd;
            for (d, s) in dst.iter_mut().zip(src) {
                *d = T::of((s.f64() - mean) * istd);
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let xhat = out.clone();
        self.graph().record("instance_norm", &[self], out, move |g, _| {
            let mut dx = vec![T::zero(); xhat.numel()];
            for (p, ((gp, xp), dp)) in g.data().chunks(hw).zip(xhat.data().chunks(hw)).zip(dx.chunks_mut(hw)).enumerate() {
                let mean_g = gp.iter().map(|v| v.f64()).sum::<f64>() / hw as f64;
                let mean_gx = gp.iter().zip(xp).map(|(a, b)| a.f64() * b.f64()).sum::<f64>() / hw as f64;
                let istd = inv_std[p];
                for ((d, gv), xv) in dp.iter_mut().zip(gp).zip(xp) {
                    *d = T::of(istd * (gv.f64() - mean_g - xv.f64() * mean_gx));
                }
            }
            Ok(vec![Some(Tensor::new(xhat.shape().to_vec(), dx)?)])
        })
    }
}
