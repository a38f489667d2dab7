//! Region-wise pooling over valid pixels and the inverse broadcast.

use sse_tensor::ops::{col2im_add, conv_out_extent, im2col_into};
use sse_tensor::{Scalar, Tensor, Var};

use super::region::{RegionCoverage, RegionLayout};
use crate::error::{invalid, Result};

/// Pooled per-region vectors. `styles` is `R × D` in layout order; regions
/// without valid pixels have zero rows.
#[derive(Clone, Debug)]
pub struct PooledStyles<'g, T: Scalar> {
    pub styles: Var<'g, T>,
    pub valid_counts: Vec<usize>,
    pub totals: Vec<usize>,
}

impl<T: Scalar> PooledStyles<'_, T> {
    /// Visible fraction of each region.
    pub fn valid_ratios(&self) -> Vec<f64> {
        self.valid_counts.iter().zip(&self.totals).map(|(&v, &t)| v as f64 / t as f64).collect()
    }
}

fn feature_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [d, h, w] | [1, d, h, w] => Ok((d, h, w)),
        _ => Err(invalid("region pool", format!("features must be D×H×W or 1×D×H×W, got {shape:?}"))),
    }
}

fn check_alignment(layout: &RegionLayout, valid: &[bool], h: usize, w: usize) -> Result<()> {
    if (layout.height, layout.width) != (h, w) {
        return Err(invalid("region pool", format!("features {h}×{w} but regions {}×{}", layout.height, layout.width)));
    }
    if valid.len() != h * w {
        return Err(invalid("region pool", format!("{} valid flags for {h}×{w}", valid.len())));
    }
    Ok(())
}

/// Mean of each region's feature columns over its valid pixels.
pub fn masked_region_pool<'g, T: Scalar>(features: Var<'g, T>, layout: &RegionLayout, valid: &[bool]) -> Result<PooledStyles<'g, T>> {
    let shape = features.shape();
    let (d, h, w) = feature_dims(&shape)?;
    check_alignment(layout, valid, h, w)?;
    let (r, n) = (layout.len(), h * w);
    let counts = layout.valid_counts(valid)?;
    let index = layout.index().to_vec();
    let valid = valid.to_vec();

    let f = features.value();
    let mut acc = vec![0f64; r * d];
    for c in 0..d {
        let plane = &f.data()[c * n..(c + 1) * n];
        for p in (0..n).filter(|&p| valid[p]) {
            acc[index[p] as usize * d + c] += plane[p].f64();
        }
    }
    let out: Vec<T> = acc.iter().enumerate().map(|(i, &s)| match counts[i / d] {
        0 => T::zero(),
        k => T::of(s / k as f64),
    }).collect();

    let inv: Vec<T> = counts.iter().map(|&k| if k == 0 { T::zero() } else { T::of(1.0 / k as f64) }).collect();
    let styles = features.graph().record("masked_region_pool", &[features], Tensor::new(vec![r, d], out)?, move |g, _| {
        let mut dx = vec![T::zero(); d * n];
        for c in 0..d {
            for p in (0..n).filter(|&p| valid[p]) {
                let ri = index[p] as usize;
                dx[c * n + p] = g.data()[ri * d + c] * inv[ri];
            }
        }
        Ok(vec![Some(Tensor::new(shape.clone(), dx)?)])
    })?;
    Ok(PooledStyles { styles, valid_counts: counts, totals: layout.pixel_counts() })
}

/// Same-padded stride-1 convolution followed by [`masked_region_pool`],
/// computed without materialising the convolution output: the unfolded input
/// columns are pooled per region and then projected by the kernel.
pub fn region_pool_conv<'g, T: Scalar>(
    input: Var<'g, T>,
    weight: Var<'g, T>,
    bias: Var<'g, T>,
    layout: &RegionLayout,
    valid: &[bool],
) -> Result<PooledStyles<'g, T>> {
    let shape = input.shape();
    let (cin, h, w) = feature_dims(&shape)?;
    check_alignment(layout, valid, h, w)?;
    let (wv, bv) = (weight.value(), bias.value());
    let (d, wc, k, k2) = wv.dims4()?;
    if wc != cin || k != k2 || k % 2 == 0 || bv.shape() != [d] {
        return Err(invalid("region pool conv", format!("kernel {:?} / bias {:?} do not fit {cin} input channels", wv.shape(), bv.shape())));
    }
    if conv_out_extent(h, k, 1, k / 2) != Some(h) {
        return Err(invalid("region pool conv", "kernel larger than input"));
    }
    let (r, n, ckk) = (layout.len(), h * w, cin * k * k);
    let counts = layout.valid_counts(valid)?;
    let index = layout.index().to_vec();
    let valid = valid.to_vec();

    let result_counts = counts.clone();
    let xv = input.value();
    let mut col = vec![T::zero(); ckk * n];
    im2col_into(xv.data(), cin, h, w, k, 1, k / 2, &mut col);
    let mut acc = vec![0f64; r * ckk];
    for j in 0..ckk {
        let row = &col[j * n..(j + 1) * n];
        for p in (0..n).filter(|&p| valid[p]) {
            acc[index[p] as usize * ckk + j] += row[p].f64();
        }
    }
    // pooled columns P (R × CKK); regions without valid pixels stay zero and get no bias
    let pooled: Vec<f64> = acc.iter().enumerate().map(|(i, &s)| match counts[i / ckk] {
        0 => 0.0,
        c => s / c as f64,
    }).collect();
    let mut out = vec![T::zero(); r * d];
    for ri in (0..r).filter(|&ri| counts[ri] > 0) {
        for o in 0..d {
            let wrow = &wv.data()[o * ckk..(o + 1) * ckk];
            let dot: f64 = pooled[ri * ckk..(ri + 1) * ckk].iter().zip(wrow).map(|(&a, &b)| a * b.f64()).sum();
            out[ri * d + o] = T::of(dot + bv.data()[o].f64());
        }
    }

    let styles = input.graph().record("region_pool_conv", &[input, weight, bias], Tensor::new(vec![r, d], out)?, move |g, needs| {
        let g = g.data();
        let live: Vec<usize> = (0..r).filter(|&ri| counts[ri] > 0).collect();
        let dw = needs[1].then(|| {
            let mut dw = vec![0f64; d * ckk];
            for &ri in &live {
                for o in 0..d {
                    let go = g[ri * d + o].f64();
                    dw[o * ckk..(o + 1) * ckk].iter_mut().zip(&pooled[ri * ckk..(ri + 1) * ckk]).for_each(|(a, &p)| *a += go * p);
                }
            }
            Tensor::new(wv.shape().to_vec(), dw.into_iter().map(T::of).collect())
        });
        let db = needs[2].then(|| {
            let db: Vec<T> = (0..d).map(|o| T::of(live.iter().map(|&ri| g[ri * d + o].f64()).sum())).collect();
            Tensor::new(vec![d], db)
        });
        let dx = needs[0].then(|| {
            // dP = g · W, then scatter dP / count back over each region's valid columns
            let mut dp = vec![0f64; r * ckk];
            for &ri in &live {
                let inv = 1.0 / counts[ri] as f64;
                for o in 0..d {
                    let go = g[ri * d + o].f64() * inv;
                    dp[ri * ckk..(ri + 1) * ckk].iter_mut().zip(&wv.data()[o * ckk..(o + 1) * ckk]).for_each(|(a, &wv)| *a += go * wv.f64());
                }
            }
            let mut dcol = vec![T::zero(); ckk * n];
            for j in 0..ckk {
                for p in (0..n).filter(|&p| valid[p]) {
                    dcol[j * n + p] = T::of(dp[index[p] as usize * ckk + j]);
                }
            }
            let mut dx = vec![T::zero(); cin * n];
            col2im_add(&dcol, cin, h, w, k, 1, k / 2, &mut dx);
            Tensor::new(shape.clone(), dx)
        });
        Ok(vec![dx.transpose()?, dw.transpose()?, db.transpose()?])
    })?;
    Ok(PooledStyles { styles, valid_counts: result_counts, totals: layout.pixel_counts() })
}

/// Spread per-region rows over a grid: `out[c, p] = Σ_r styles[r, c] · coverage[r, p]`.
/// Returns `1 × C × H × W`. With one-hot coverage every pixel receives its
/// region's row exactly.
pub fn region_broadcast<'g, T: Scalar>(styles: Var<'g, T>, coverage: &RegionCoverage) -> Result<Var<'g, T>> {
    let sv = styles.value();
    let [r, c] = *sv.shape() else {
        return Err(invalid("region broadcast", format!("styles must be R×C, got {:?}", sv.shape())));
    };
    if r != coverage.regions {
        return Err(invalid("region broadcast", format!("{r} style rows for {} regions", coverage.regions)));
    }
    let (h, w) = (coverage.height, coverage.width);
    let n = h * w;
    let cov: Vec<T> = coverage.data.iter().map(|&v| T::of(v as f64)).collect();
    let mut out = vec![T::zero(); c * n];
    for ch in 0..c {
        let dst = &mut out[ch * n..(ch + 1) * n];
        for ri in 0..r {
            let s = sv.data()[ri * c + ch];
            dst.iter_mut().zip(&cov[ri * n..(ri + 1) * n]).for_each(|(o, &k)| *o += s * k);
        }
    }
    Ok(styles.graph().record("region_broadcast", &[styles], Tensor::new(vec![1, c, h, w], out)?, move |g, _| {
        let mut ds = vec![T::zero(); r * c];
        for ri in 0..r {
            let k = &cov[ri * n..(ri + 1) * n];
            for ch in 0..c {
                let gp = &g.data()[ch * n..(ch + 1) * n];
                ds[ri * c + ch] = T::of(gp.iter().zip(k).map(|(&a, &b)| (a * b).f64()).sum());
            }
        }
        Ok(vec![Some(Tensor::new(vec![r, c], ds)?)])
    })?)
}
