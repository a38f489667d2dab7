use crate::error::{invalid, Result};
use crate::maskgen::BinaryMask;

/// Mean pairwise L1 distance inside the mask between `H × W × 3` outputs.
/// Outputs must agree exactly outside the mask.
pub fn diversity_score(outputs: &[&[f32]], mask: &BinaryMask) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(invalid("diversity", format!("need at least 2 outputs, got {}", outputs.len())));
    }
    let n = mask.data.len();
    if outputs.iter().any(|o| o.len() != 3 * n) {
        return Err(invalid("diversity", "outputs and mask differ in size"));
    }
    let holes = mask.erased_count();
    if holes == 0 {
        return Err(invalid("diversity", "the mask erases nothing"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..outputs.len() {
        for j in i + 1..outputs.len() {
            let (a, b) = (outputs[i], outputs[j]);
            let mut sum = 0.0f64;
            for p in 0..n {
                let (pa, pb) = (&a[3 * p..3 * p + 3], &b[3 * p..3 * p + 3]);
                if mask.data[p] == 0 {
                    if pa != pb {
                        return Err(invalid("diversity", format!("outputs {i} and {j} differ at visible pixel {p}")));
                    }
                    continue;
                }
                sum += pa.iter().zip(pb).map(|(x, y)| (x - y).abs() as f64).sum::<f64>();
            }
            total += sum / (3 * holes) as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
