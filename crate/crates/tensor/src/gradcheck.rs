//! Central finite-difference gradient checks.
//!
//! The checked function is contracted with fixed pseudo-random weights so
//! that every output element contributes to the scalar being differentiated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::{Graph, Scalar, Tensor, Var};

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    /// Largest relative error among entries whose magnitude exceeds the floor.
    pub max_rel_err: f64,
    /// Largest absolute error among entries at or below the floor.
    pub max_small_abs_err: f64,
    pub probes: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err < rel_tol && self.max_small_abs_err < rel_tol.max(1e-4)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Entries with `max(|analytic|, |numeric|)` at or below this are compared absolutely.
    pub floor: f64,
    /// Per-input cap on probed elements (evenly spaced when exceeded).
    pub max_probes: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { step: 1e-3, floor: 1e-4, max_probes: 48, seed: 0x5eed }
    }
}

impl GradCheck {
    pub fn run<T, F>(&self, inputs: &[Tensor<T>], f: F) -> Result<GradCheckReport>
    where
        T: Scalar,
        F: for<'g> Fn(&'g Graph<T>, &[Var<'g, T>]) -> Result<Var<'g, T>>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let eval = |vals: &[Tensor<T>], weights: Option<&Tensor<T>>, track: bool| -> Result<(f64, Vec<Option<Tensor<T>>>, Tensor<T>)> {
            let g = Graph::new();
            let vars: Vec<Var<'_, T>> = vals.iter().map(|v| g.leaf(v.clone(), track)).collect();
            let out = f(&g, &vars)?;
            let out_val = out.value();
            let Some(w) = weights else {
                return Ok((0.0, Vec::new(), out_val));
            };
            let loss = out.mul(g.constant(w.clone()))?.sum()?;
            let value = loss.value().item()?.f64();
            if track {
                g.backward(loss)?;
            }
            Ok((value, vars.iter().map(|v| v.grad()).collect(), out_val))
        };

        let (_, _, probe_out) = eval(inputs, None, false)?;
        let weights = Tensor::from_fn(probe_out.shape().to_vec(), |_| T::of(rng.gen_range(-1.0..1.0)));
        let (_, analytic, _) = eval(inputs, Some(&weights), true)?;

        let mut report = GradCheckReport::default();
        for (i, input) in inputs.iter().enumerate() {
            let Some(grad) = analytic[i].as_ref() else { continue };
            let n = input.numel();
            let stride = n.div_ceil(self.max_probes).max(1);
            let offset = if stride > 1 { rng.gen_range(0..stride) } else { 0 };
            for j in (offset..n).step_by(stride) {
                let mut plus = inputs.to_vec();
                let mut minus = inputs.to_vec();
                plus[i].data_mut()[j] += T::of(self.step);
                minus[i].data_mut()[j] -= T::of(self.step);
                let (lp, _, _) = eval(&plus, Some(&weights), false)?;
                let (lm, _, _) = eval(&minus, Some(&weights), false)?;
                let numeric = (lp - lm) / (2.0 * self.step);
                let a = grad.data()[j].f64();
                let scale = a.abs().max(numeric.abs());
                let err = (a - numeric).abs();
                if scale > self.floor {
                    report.max_rel_err = report.max_rel_err.max(err / scale);
                } else {
                    report.max_small_abs_err = report.max_small_abs_err.max(err);
                }
                report.probes += 1;
            }
        }
        Ok(report)
    }
}
