use crate::error::{invalid, shape_err, Result};
use crate::scalar::{gemm, MatRef};
use crate::{Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1)
}

/// Unfold one `C×H×W` sample into a `(C·k·k) × (Ho·Wo)` column matrix.
pub fn im2col_into<T: Scalar>(x: &[T], channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, col: &mut [T]) {
    let geo = Geometry { cin: channels, h, w, k, stride, pad, ho: conv_out_extent(h, k, stride, pad).unwrap_or(0), wo: conv_out_extent(w, k, stride, pad).unwrap_or(0) };
    im2col(x, &geo, col)
}

/// Adjoint of [`im2col_into`]: scatter-add columns back into `x`.
pub fn col2im_add<T: Scalar>(col: &[T], channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, x: &mut [T]) {
    let geo = Geometry { cin: channels, h, w, k, stride, pad, ho: conv_out_extent(h, k, stride, pad).unwrap_or(0), wo: conv_out_extent(w, k, stride, pad).unwrap_or(0) };
    col2im(col, &geo, x)
}

/// Output columns `[lo, hi)` whose input column `ow·stride + kj − pad` is in range.
fn valid_cols(g: &Geometry, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride).min(g.wo);
    let hi = if g.w + g.pad > kj { ((g.w + g.pad - kj - 1) / g.stride + 1).min(g.wo) } else { 0 };
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    im2col_strided(x, g, col, g.ho * g.wo, 0)
}

/// Unfold one sample into columns `offset..offset + Ho·Wo` of a column
/// matrix whose rows are `row_len` long.
fn im2col_strided<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T], row_len: usize, offset: usize) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((c * g.k + ki) * g.k + kj) * row_len + offset;
                let dst = &mut col[row..row + hw_out];
                let (lo, hi) = valid_cols(g, kj);
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize || lo == hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let start = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (v, &s) in line[lo..hi].iter_mut().zip(src[start..].iter().step_by(g.stride)) {
                            *v = s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &Geometry, x: &mut [T]) {
    col2im_strided(col, g, x, g.ho * g.wo, 0)
}

fn col2im_strided<T: Scalar>(col: &[T], g: &Geometry, x: &mut [T], row_len: usize, offset: usize) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = ((c * g.k + ki) * g.k + kj) * row_len + offset;
                let src = &col[row..row + hw_out];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let line = &src[oh * g.wo + lo..oh * g.wo + hi];
                    let start = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        for (d, &v) in dst[start..start + hi - lo].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in dst[start..].iter_mut().step_by(g.stride).zip(line) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `N × C × P` to `C × (N·P)`.
fn to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    if n == 1 {
        return x.to_vec();
    }
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            out[ch * n * p + s * p..ch * n * p + (s + 1) * p].copy_from_slice(&x[(s * c + ch) * p..(s * c + ch + 1) * p]);
        }
    }
    out
}

/// `C × (N·P)` to `N × C × P`.
fn to_sample_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    if n == 1 {
        return x.to_vec();
    }
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            out[(s * c + ch) * p..(s * c + ch + 1) * p].copy_from_slice(&x[ch * n * p + s * p..ch * n * p + (s + 1) * p]);
        }
    }
    out
}

/// Column matrix `(C·k·k) × (N·Ho·Wo)` of a whole batch.
fn batch_columns<T: Scalar>(x: &[T], n: usize, g: &Geometry) -> Vec<T> {
    let hw_out = g.ho * g.wo;
    if g.is_pointwise() {
        return to_channel_major(x, n, g.cin, hw_out);
    }
    let mut col = vec![T::zero(); g.cin * g.k * g.k * n * hw_out];
    let per = g.cin * g.h * g.w;
    for s in 0..n {
        im2col_strided(&x[s * per..(s + 1) * per], g, &mut col, n * hw_out, s * hw_out);
    }
    col
}

impl<'g, T: Scalar> Var<'g, T> {
    /// 2-D convolution of an `N×C×H×W` input with a `O×C×k×k` kernel.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'g, T>> {
        let (x, w) = (self.value(), weight.value());
        let (n, cin, h, wid) = x.dims4()?;
        let (cout, wc, kh, kw) = w.dims4()?;
        if wc != cin {
            return Err(shape_err("conv2d input channels", wc, cin));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(invalid("conv2d", format!("kernel must be square and odd, got {kh}×{kw}")));
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be at least 1"));
        }
        let k = kh;
        let (Some(ho), Some(wo)) = (conv_out_extent(h, k, stride, padding), conv_out_extent(wid, k, stride, padding)) else {
            return Err(invalid("conv2d", format!("input {h}×{wid} smaller than kernel {k} with padding {padding}")));
        };
        let geo = Geometry { cin, h, w: wid, k, stride, pad: padding, ho, wo };
        let ckk = cin * k * k;
        let hw_out = ho * wo;
        let bias_val = match bias {
            Some(b) => {
                let bv = b.value();
                if bv.shape() != [cout] {
                    return Err(shape_err("conv2d bias", [cout], bv.shape()));
                }
                Some(bv)
            }
            None => None,
        };

        let cols = batch_columns(x.data(), n, &geo);
        let mut big = vec![T::zero(); cout * n * hw_out];
        gemm(MatRef::new(w.data(), cout, ckk), MatRef::new(&cols, ckk, n * hw_out), &mut big, false);
        drop(cols);
        let mut out = to_sample_major(&big, n, cout, hw_out);
        if let Some(bv) = &bias_val {
            for (i, plane) in out.chunks_mut(hw_out).enumerate() {
                let b = bv.data()[i % cout];
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
        let out = Tensor::new(vec![n, cout, ho, wo], out)?;

        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.graph().record("conv2d", &parents, out, move |g, needs| {
            let gb = to_channel_major(g.data(), n, cout, hw_out);
            let dw = needs[1].then(|| {
                let cols = batch_columns(x.data(), n, &geo);
                let mut dw = vec![T::zero(); w.numel()];
                gemm(MatRef::new(&gb, cout, n * hw_out), MatRef::new(&cols, ckk, n * hw_out).t(), &mut dw, false);
                dw
            });
            let dx = needs[0].then(|| {
                let mut dcol = vec![T::zero(); ckk * n * hw_out];
                gemm(MatRef::new(w.data(), cout, ckk).t(), MatRef::new(&gb, cout, n * hw_out), &mut dcol, false);
                if geo.is_pointwise() {
                    return to_sample_major(&dcol, n, cin, hw_out);
                }
                let per = cin * h * wid;
                let mut dx = vec![T::zero(); x.numel()];
                for s in 0..n {
                    col2im_strided(&dcol, &geo, &mut dx[s * per..(s + 1) * per], n * hw_out, s * hw_out);
                }
                dx
            });
            let mut grads = vec![
                dx.map(|d| Tensor::new(x.shape().to_vec(), d)).transpose()?,
                dw.map(|d| Tensor::new(w.shape().to_vec(), d)).transpose()?,
            ];
            if needs.len() == 3 {
                grads.push(if needs[2] {
                    let mut db = vec![T::zero(); cout];
                    for s in 0..n {
                        for (o, d) in db.iter_mut().enumerate() {
                            let base = (s * cout + o) * hw_out;
                            *d += g.data()[base..base + hw_out].iter().copied().sum::<T>();
                        }
                    }
                    Some(Tensor::new(vec![cout], db)?)
                } else {
                    None
                });
            }
            Ok(grads)
        })
    }
}
