//! Central finite-difference verification of analytic gradients.
//!
//! All checks run the function twice first and require bit-identical output
//! (non-deterministic functions are rejected). Relative error uses the
//! denominator max(|analytic|, |numeric|, 1e-6), so near-zero gradient pairs
//! compare absolutely at that floor.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::Element;

const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Maximum relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// (label, flat coordinate) of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
    /// Coordinates where both sides are below the cancellation-noise floor
    /// (central differences of f(x+h)-f(x-h) cannot resolve them).
    noise_floor: f64,
}

impl GradCheckReport {
    fn new(loss_scale: f64, h: f64) -> Self {
        // |f| * eps / h bounds the irreducible rounding error of a central
        // difference; the factor covers summation growth.
        let noise_floor = (loss_scale.abs() + 1.0) * f64::EPSILON / h * 1e3;
        GradCheckReport {
            max_rel_err: 0.0,
            worst: None,
            coords_checked: 0,
            noise_floor,
        }
    }

    fn update(&mut self, label: &str, coord: usize, analytic: f64, numeric: f64) {
        self.coords_checked += 1;
        if analytic.abs() <= self.noise_floor && numeric.abs() <= self.noise_floor {
            return; // both indistinguishable from zero at this h
        }
        let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        let rel = (analytic - numeric).abs() / denom;
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst = Some((label.to_string(), coord));
        }
    }

    pub fn ensure(&self, what: &str, tol: f64) -> Result<()> {
        if self.max_rel_err > tol {
            return Err(TensorError::GradCheck {
                what: match &self.worst {
                    Some((label, coord)) => format!("{} ({} coord {})", what, label, coord),
                    None => what.to_string(),
                },
                max_err: self.max_rel_err,
                tol,
            });
        }
        Ok(())
    }
}

fn eval_scalar<E: Element>(
    f: &impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
) -> Result<E> {
    let y = f(x)?;
    if y.numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            shape: y.shape().to_vec(),
        });
    }
    Ok(y.item())
}

fn determinism_probe<E: Element>(
    what: &str,
    f: &impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
) -> Result<()> {
    let a = eval_scalar(f, x)?;
    let b = eval_scalar(f, x)?;
    if a != b {
        return Err(TensorError::NonDeterministic { what: what.into() });
    }
    Ok(())
}

/// Checks d f(x) / d x on the given coordinates of `x` against central
/// differences (f(x+h) - f(x-h)) / 2h.
pub fn finite_diff_check_sampled<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
    coords: &[usize],
    h: f64,
    _tol: f64,
) -> Result<GradCheckReport> {
    determinism_probe("finite_diff_check input function", &f, x)?;

    // analytic gradient
    let xt = x.detach();
    xt.set_requires_grad(true);
    let tape = Tape::<E>::new();
    let analytic = {
        let _guard = tape.activate();
        let y = f(&xt)?;
        if y.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: y.shape().to_vec(),
            });
        }
        y.backward()?;
        xt.grad().unwrap_or_else(|| vec![E::zero(); x.numel()])
    };

    // numeric, one coordinate at a time
    let base = x.to_vec();
    let probe = x.detach();
    let f0 = eval_scalar(&f, x)?.to_f64();
    let mut report = GradCheckReport::new(f0, h);
    for &c in coords {
        let mut plus = base.clone();
        plus[c] = plus[c] + E::from_f64(h);
        probe.set_data(plus);
        let fp = eval_scalar(&f, &probe)?.to_f64();
        let mut minus = base.clone();
        minus[c] = minus[c] - E::from_f64(h);
        probe.set_data(minus);
        let fm = eval_scalar(&f, &probe)?.to_f64();
        let numeric = (fp - fm) / (2.0 * h);
        report.update("x", c, analytic[c].to_f64(), numeric);
    }
    Ok(report)
}

/// Full-coordinate finite-difference check.
pub fn finite_diff_check<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &Tensor<E>,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_sampled(f, x, &coords, h, tol)
}

/// Verifies the gradients of many parameter tensors against central finite
/// differences, sampling `coords_per_param` coordinates from each tensor
/// (all coordinates when the tensor is that small). One backward pass
/// supplies every analytic gradient; each sampled coordinate costs two
/// forward evaluations.
pub fn check_param_grads<E: Element>(
    loss_fn: impl Fn() -> Result<Tensor<E>>,
    params: &[(String, Tensor<E>)],
    coords_per_param: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    // determinism probe
    let a = loss_fn()?.item();
    let b = loss_fn()?.item();
    if a != b {
        return Err(TensorError::NonDeterministic {
            what: "check_param_grads loss function".into(),
        });
    }

    for (_, p) in params {
        p.zero_grad();
    }
    let tape = Tape::<E>::new();
    {
        let _guard = tape.activate();
        let loss = loss_fn()?;
        loss.backward()?;
    }
    let analytic: Vec<Vec<E>> = params
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![E::zero(); p.numel()]))
        .collect();

    let mut rng = crate::init::seeded_rng(seed, 0xF1D1);
    let mut report = GradCheckReport::new(a.to_f64(), h);
    for (pi, (name, p)) in params.iter().enumerate() {
        let n = p.numel();
        let coords: Vec<usize> = if n <= coords_per_param {
            (0..n).collect()
        } else {
            (0..coords_per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        let base = p.to_vec();
        for c in coords {
            let mut plus = base.clone();
            plus[c] = plus[c] + E::from_f64(h);
            p.set_data(plus);
            let fp = loss_fn()?.item().to_f64();
            let mut minus = base.clone();
            minus[c] = minus[c] - E::from_f64(h);
            p.set_data(minus);
            let fm = loss_fn()?.item().to_f64();
            p.set_data(base.clone());
            let numeric = (fp - fm) / (2.0 * h);
            report.update(name, c, analytic[pi][c].to_f64(), numeric);
        }
        for (_, p) in params {
            p.zero_grad();
        }
    }
    Ok(report)
}
