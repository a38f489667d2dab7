use crate::error::{invalid, shape_err, Result};
use crate::{Scalar, Tensor, Var};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, a.shape(), b.shape()));
    }
    Ok(())
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x + y)?;
        self.graph().record("add", &[self, other], out, |g, _| Ok(vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x - y)?;
        self.graph().record("sub", &[self, other], out, |g, _| Ok(vec![Some(g.clone()), Some(g.map(|v| -v))]))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x * y)?;
        self.graph().record("mul", &[self, other], out, move |g, needs| {
            Ok(vec![
                needs[0].then(|| g.zip_map(&b, |u, v| u * v)).transpose()?,
                needs[1].then(|| g.zip_map(&a, |u, v| u * v)).transpose()?,
            ])
        })
    }

    pub fn scale(self, factor: f64) -> Result<Var<'g, T>> {
        let c = T::of(factor);
        let out = self.value().map(|v| v * c);
        self.graph().record("scale", &[self], out, move |g, _| Ok(vec![Some(g.map(|v| v * c))]))
    }

    pub fn add_scalar(self, offset: f64) -> Result<Var<'g, T>> {
        let c = T::of(offset);
        let out = self.value().map(|v| v + c);
        self.graph().record("add_scalar", &[self], out, |g, _| Ok(vec![Some(g.clone())]))
    }

    pub fn neg(self) -> Result<Var<'g, T>> {
        self.scale(-1.0)
    }

    fn unary(
        self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var<'g, T>> {
        let x = self.value();
        let y = x.map(f);
        let y_saved = y.clone();
        self.graph().record(op, &[self], y, move |g, _| {
            let dx = x
                .data()
                .iter()
                .zip(y_saved.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| gv * df(xv, yv))
                .collect();
            Ok(vec![Some(Tensor::new(x.shape().to_vec(), dx)?)])
        })
    }

    pub fn relu(self) -> Result<Var<'g, T>> {
        self.leaky_relu(0.0)
    }

    /// `max(x, slope·x)`; the subgradient at 0 takes the negative branch.
    pub fn leaky_relu(self, slope: f64) -> Result<Var<'g, T>> {
        if !(0.0..1.0).contains(&slope) {
            return Err(invalid("leaky_relu", format!("slope {slope} outside [0, 1)")));
        }
        let s = T::of(slope);
        self.unary(
            "leaky_relu",
            move |x| if x > T::zero() { x } else { s * x },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn elu(self) -> Result<Var<'g, T>> {
        self.unary(
            "elu",
            |x| if x > T::zero() { x } else { x.exp_m1() },
            |x, y| if x > T::zero() { T::one() } else { y + T::one() },
        )
    }

    pub fn sigmoid(self) -> Result<Var<'g, T>> {
        self.unary("sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(self) -> Result<Var<'g, T>> {
        self.unary("tanh", |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn abs(self) -> Result<Var<'g, T>> {
        self.unary("abs", |x| x.abs(), |x, _| if x > T::zero() { T::one() } else if x < T::zero() { -T::one() } else { T::zero() })
    }

    pub fn sum(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let total = T::of(x.sum_f64());
        let shape = x.shape().to_vec();
        self.graph().record("sum", &[self], Tensor::scalar(total), move |g, _| Ok(vec![Some(Tensor::full(shape.clone(), g.item()?))]))
    }

    pub fn mean(self) -> Result<Var<'g, T>> {
        let n = self.value().numel();
        if n == 0 {
            return Err(invalid("mean", "empty tensor"));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let x = self.value();
        let old = x.shape().to_vec();
        let out = x.reshape(shape)?;
        self.graph().record("reshape", &[self], out, move |g, _| Ok(vec![Some(g.reshape(old.clone())?)]))
    }

    pub fn narrow(self, dim: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let full = x.shape().to_vec();
        let out = x.narrow(dim, start, len)?;
        self.graph().record("narrow", &[self], out, move |g, _| {
            let outer: usize = full[..dim].iter().product();
            let inner: usize = full[dim + 1..].iter().product();
            let mut dx = vec![T::zero(); full.iter().product()];
            for o in 0..outer {
                let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                let dst = (o * full[dim] + start) * inner;
                dx[dst..dst + len * inner].copy_from_slice(src);
            }
            Ok(vec![Some(Tensor::new(full.clone(), dx)?)])
        })
    }

    /// Concatenate along `dim`.
    pub fn concat(parts: &[Var<'g, T>], dim: usize) -> Result<Var<'g, T>> {
        let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let values: Vec<Tensor<T>> = parts.iter().map(|p| p.value()).collect();
        let out = Tensor::concat(&values, dim)?;
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[dim]).collect();
        first.graph().record("concat", parts, out, move |g, needs| {
            let mut start = 0;
            let mut grads = Vec::with_capacity(extents.len());
            for (&e, &need) in extents.iter().zip(needs) {
                grads.push(if need { Some(g.narrow(dim, start, e)?) } else { None });
                start += e;
            }
            Ok(grads)
        })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
