use crate::error::{shape_err, Result};
use crate::scalar::{gemm, MatRef};
use crate::{Scalar, Tensor, Var};

impl<'g, T: Scalar> Var<'g, T> {
    /// `(m×k) · (k×n)`.
    pub fn matmul(self, rhs: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), rhs.value());
        let (m, k, n) = match (a.shape(), b.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (sa, sb) => return Err(shape_err("matmul", sa, sb)),
        };
        let mut out = vec![T::zero(); m * n];
        gemm(MatRef::new(a.data(), m, k), MatRef::new(b.data(), k, n), &mut out, false);
        let out = Tensor::new(vec![m, n], out)?;
        self.graph().record("matmul", &[self, rhs], out, move |g, needs| {
            let ga = if needs[0] {
                let mut da = vec![T::zero(); m * k];
                gemm(MatRef::new(g.data(), m, n), MatRef::new(b.data(), k, n).t(), &mut da, false);
                Some(Tensor::new(vec![m, k], da)?)
            } else {
                None
            };
            let gb = if needs[1] {
                let mut db = vec![T::zero(); k * n];
                gemm(MatRef::new(a.data(), m, k).t(), MatRef::new(g.data(), m, n), &mut db, false);
                Some(Tensor::new(vec![k, n], db)?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        })
    }

    /// Fully connected layer: `x (rows×in) · weightᵀ (in×out) + bias`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Result<Var<'g, T>> {
        let (x, w) = (self.value(), weight.value());
        let (rows, fin, fout) = match (x.shape(), w.shape()) {
            (&[r, i], &[o, i2]) if i == i2 => (r, i, o),
            (sx, sw) => return Err(shape_err("linear", sx, sw)),
        };
        let mut out = vec![T::zero(); rows * fout];
        gemm(MatRef::new(x.data(), rows, fin), MatRef::new(w.data(), fout, fin).t(), &mut out, false);
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            let bv = b.value();
            if bv.shape() != [fout] {
                return Err(shape_err("linear bias", [fout], bv.shape()));
            }
            for row in out.chunks_mut(fout) {
                for (o, &bb) in row.iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
            parents.push(b);
        }
        let out = Tensor::new(vec![rows, fout], out)?;
        self.graph().record("linear", &parents, out, move |g, needs| {
            let mut grads = Vec::with_capacity(needs.len());
            grads.push(if needs[0] {
                let mut dx = vec![T::zero(); rows * fin];
                gemm(MatRef::new(g.data(), rows, fout), MatRef::new(w.data(), fout, fin), &mut dx, false);
                Some(Tensor::new(vec![rows, fin], dx)?)
            } else {
                None
            });
            grads.push(if needs[1] {
                let mut dw = vec![T::zero(); fout * fin];
                gemm(MatRef::new(g.data(), rows, fout).t(), MatRef::new(x.data(), rows, fin), &mut dw, false);
                Some(Tensor::new(vec![fout, fin], dw)?)
            } else {
                None
            });
            if needs.len() == 3 {
                grads.push(if needs[2] {
                    let mut db = vec![T::zero(); fout];
                    for row in g.data().chunks(fout) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Some(Tensor::new(vec![fout], db)?)
                } else {
                    None
                });
            }
            Ok(grads)
        })
    }
}
