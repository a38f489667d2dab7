use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean and covariance of a feature set, tagged with the extractor that
/// produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, unbiased.
    pub cov: Vec<f64>,
    pub n: usize,
    pub extractor_seed: u64,
}

impl FeatureStats {
    /// Two-pass estimate: the mean first, then centered products.
    pub fn from_features(features: &[Vec<f64>], extractor_seed: u64) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(invalid("feature stats", "no samples"));
        };
        let d = first.len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(invalid("feature stats", "feature vectors must share a nonzero length"));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("feature stats", "non-finite feature"));
        }
        let n = features.len();
        if n < d {
            log::warn!("feature stats from {n} samples in {d} dimensions; the covariance is rank deficient");
        }
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        let denom = (n.max(2) - 1) as f64;
        let mut centered = vec![0.0; d];
        for f in features {
            for i in 0..d {
                centered[i] = f[i] - mean[i];
            }
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        Ok(Self { mean, cov, n, extractor_seed })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.cov)
    }
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Square root of a symmetric PSD matrix; negative eigenvalues count as 0.
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetric(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)`.
///
/// The trace of `(Σa Σb)^½` is taken as the trace of `(√Σa Σb √Σa)^½`,
/// which has the same eigenvalues but is symmetric.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.extractor_seed != b.extractor_seed {
        return Err(invalid(
            "frechet distance",
            format!("features come from different extractors ({:#x} vs {:#x})", a.extractor_seed, b.extractor_seed),
        ));
    }
    if a.dim() != b.dim() {
        return Err(invalid("frechet distance", format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let diff = DVector::from_row_slice(&a.mean) - DVector::from_row_slice(&b.mean);
    let (sa, sb) = (a.cov_matrix(), b.cov_matrix());
    let root_a = psd_sqrt(sa.clone());
    let inner = symmetric(&root_a * &sb * &root_a);
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = diff.norm_squared() + sa.trace() + sb.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}
