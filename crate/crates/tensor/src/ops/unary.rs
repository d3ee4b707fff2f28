use crate::error::Result;
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

/// Numerically stable logistic function.
pub fn sigmoid_scalar<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

/// Stable softplus: ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|).
pub fn softplus_scalar<E: Element>(x: E) -> E {
    x.max(E::zero()) + (-x.abs()).exp().ln_1p()
}

/// Stable log-sigmoid: -softplus(-x).
pub fn log_sigmoid_scalar<E: Element>(x: E) -> E {
    -softplus_scalar(-x)
}

fn unary_op<E: Element>(
    op: &'static str,
    x: &Tensor<E>,
    f: impl Fn(E) -> E,
    // d(out)/d(in) given (input value, output value)
    df: impl Fn(E, E) -> E + 'static,
) -> Result<Tensor<E>> {
    let xd = x.data();
    let out: Vec<E> = xd.iter().map(|&v| f(v)).collect();
    let saved_out = out.clone();
    record_op(op, &[x], out, x.shape().to_vec(), move |g| {
        let gx = g
            .iter()
            .zip(xd.iter().zip(&saved_out))
            .map(|(g, (x, y))| *g * df(*x, *y))
            .collect();
        vec![Some(gx)]
    })
}

impl<E: Element> Tensor<E> {
    pub fn neg(&self) -> Result<Tensor<E>> {
        unary_op("neg", self, |x| -x, |_, _| -E::one())
    }

    pub fn exp(&self) -> Result<Tensor<E>> {
        unary_op("exp", self, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor<E>> {
        unary_op("ln", self, |x| x.ln(), |x, _| E::one() / x)
    }

    pub fn sqrt(&self) -> Result<Tensor<E>> {
        unary_op("sqrt", self, |x| x.sqrt(), |_, y| {
            E::one() / (E::from_f64(2.0) * y)
        })
    }

    pub fn abs(&self) -> Result<Tensor<E>> {
        unary_op("abs", self, |x| x.abs(), |x, _| {
            if x > E::zero() {
                E::one()
            } else if x < E::zero() {
                -E::one()
            } else {
                E::zero()
            }
        })
    }

    pub fn relu(&self) -> Result<Tensor<E>> {
        unary_op("relu", self, |x| x.max(E::zero()), |x, _| {
            if x > E::zero() {
                E::one()
            } else {
                E::zero()
            }
        })
    }

    pub fn sigmoid(&self) -> Result<Tensor<E>> {
        unary_op("sigmoid", self, sigmoid_scalar, |_, y| y * (E::one() - y))
    }

    /// x * sigmoid(x).
    pub fn silu(&self) -> Result<Tensor<E>> {
        unary_op("silu", self, |x| x * sigmoid_scalar(x), |x, _| {
            let s = sigmoid_scalar(x);
            s + x * s * (E::one() - s)
        })
    }

    pub fn softplus(&self) -> Result<Tensor<E>> {
        unary_op("softplus", self, softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    pub fn log_sigmoid(&self) -> Result<Tensor<E>> {
        unary_op("log_sigmoid", self, log_sigmoid_scalar, |x, _| {
            sigmoid_scalar(-x)
        })
    }

    pub fn add_scalar(&self, c: E) -> Result<Tensor<E>> {
        unary_op("add_scalar", self, |x| x + c, |_, _| E::one())
    }

    pub fn mul_scalar(&self, c: E) -> Result<Tensor<E>> {
        unary_op("mul_scalar", self, move |x| x * c, move |_, _| c)
    }

    /// Elementwise x^p. The gradient at x == 0 is defined as 0 to avoid
    /// NaN/Inf for fractional exponents; callers use p >= 1.
    pub fn pow_scalar(&self, p: E) -> Result<Tensor<E>> {
        unary_op("pow_scalar", self, move |x| x.powf(p), move |x, _| {
            if x == E::zero() {
                E::zero()
            } else {
                p * x.powf(p - E::one())
            }
        })
    }

    /// Softmax over the last axis; rows sum to 1.
    pub fn softmax_lastdim(&self) -> Result<Tensor<E>> {
        let shape = self.shape().to_vec();
        let cols = *shape.last().unwrap_or(&1);
        let rows = self.numel() / cols.max(1);
        let xd = self.data();
        let mut out = vec![E::zero(); self.numel()];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let mut denom = E::zero();
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (v - max).exp();
                denom = denom + *o;
            }
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o = *o / denom;
            }
        }
        let saved = out.clone();
        record_op("softmax", &[self], out, shape, move |g| {
            // gx = (g - sum(g*y)) * y per row
            let mut gx = vec![E::zero(); g.len()];
            for r in 0..rows {
                let ys = &saved[r * cols..(r + 1) * cols];
                let gs = &g[r * cols..(r + 1) * cols];
                let dot: E = gs.iter().zip(ys).map(|(g, y)| *g * *y).sum();
                for ((gx, g), y) in gx[r * cols..(r + 1) * cols].iter_mut().zip(gs).zip(ys) {
                    *gx = (*g - dot) * *y;
                }
            }
            vec![Some(gx)]
        })
    }
}
