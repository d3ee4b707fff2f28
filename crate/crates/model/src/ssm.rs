//! Time-invariant state-space sequence core with diagonal state.
//!
//! The recurrence h_t = Ā h_{t-1} + B̄ x_t, y_t = C h_t admits an equivalent
//! causal convolution with the structured kernel K̄ = (CB̄, CĀB̄, CĀ²B̄, ...).
//! Both routes are implemented; their agreement is the module's central
//! equivalence oracle.

use samamba_tensor::Element;

use crate::selective::SelectiveSsm;
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmMode {
    Lti,
    Selective,
}

/// Fixed (time-invariant) parameters. `a` is the diagonal of the continuous
/// state transition; stability requires negative entries. The selective
/// variant guarantees negativity by construction (-exp of a raw value); here
/// arbitrary values are allowed so that marginal cases can be probed.
#[derive(Debug, Clone)]
pub struct LtiParams<E: Element> {
    pub a: Vec<E>,
    pub b: Vec<E>,
    pub c: Vec<E>,
    pub delta: E,
    pub exact_zoh: bool,
}

impl<E: Element> LtiParams<E> {
    pub fn new(a: Vec<E>, b: Vec<E>, c: Vec<E>, delta: E) -> Self {
        assert_eq!(a.len(), b.len());
        assert_eq!(a.len(), c.len());
        LtiParams {
            a,
            b,
            c,
            delta,
            exact_zoh: false,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    /// Zero-order-hold discretization: Ā = exp(Δ·a) elementwise. The
    /// simplified form uses B̄ = Δ·b; the exact form B̄ = (exp(Δa)-1)/a · b.
    pub fn discretize(&self) -> Result<DiscreteLti<E>> {
        if self.delta <= E::zero() {
            return Err(ModelError::Domain {
                op: "discretize",
                msg: format!("step size must be > 0, got {}", self.delta),
            });
        }
        let a_bar: Vec<E> = self.a.iter().map(|&a| (self.delta * a).exp()).collect();
        if a_bar.iter().any(|&ab| ab >= E::one()) {
            log::warn!("discretize: |A_bar| >= 1 (marginally stable or unstable state)");
        }
        let b_bar: Vec<E> = if self.exact_zoh {
            self.a
                .iter()
                .zip(&self.b)
                .map(|(&a, &b)| {
                    if a.abs() < E::from_f64(1e-12) {
                        self.delta * b
                    } else {
                        ((self.delta * a).exp() - E::one()) / a * b
                    }
                })
                .collect()
        } else {
            self.b.iter().map(|&b| self.delta * b).collect()
        };
        Ok(DiscreteLti {
            a_bar,
            b_bar,
            c: self.c.clone(),
        })
    }
}

/// Discretized LTI parameters (Ā diagonal, B̄, C).
#[derive(Debug, Clone)]
pub struct DiscreteLti<E: Element> {
    pub a_bar: Vec<E>,
    pub b_bar: Vec<E>,
    pub c: Vec<E>,
}

impl<E: Element> DiscreteLti<E> {
    pub fn new(a_bar: Vec<E>, b_bar: Vec<E>, c: Vec<E>) -> Self {
        assert_eq!(a_bar.len(), b_bar.len());
        assert_eq!(a_bar.len(), c.len());
        DiscreteLti { a_bar, b_bar, c }
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.len()
    }

    /// Sequential recurrence from h_0 = 0. O(M*N).
    pub fn scan_recurrent(&self, x: &[E]) -> Vec<E> {
        let n = self.state_dim();
        let mut h = vec![E::zero(); n];
        let mut y = Vec::with_capacity(x.len());
        for &xv in x {
            let mut acc = E::zero();
            for i in 0..n {
                h[i] = self.a_bar[i] * h[i] + self.b_bar[i] * xv;
                acc = acc + self.c[i] * h[i];
            }
            y.push(acc);
        }
        y
    }

    /// Structured kernel K̄[k] = C Ā^k B̄ for k = 0..m-1.
    pub fn kernel(&self, m: usize) -> Vec<E> {
        let n = self.state_dim();
        let mut term: Vec<E> = (0..n).map(|i| self.c[i] * self.b_bar[i]).collect();
        let mut kernel = Vec::with_capacity(m);
        for _ in 0..m {
            kernel.push(term.iter().cloned().sum());
            for i in 0..n {
                term[i] = term[i] * self.a_bar[i];
            }
        }
        kernel
    }

    /// Causal convolution y_t = sum_k K̄[k] x_{t-k}; output t depends only
    /// on x_{<=t}.
    pub fn scan_convolutional(&self, x: &[E]) -> Vec<E> {
        let kernel = self.kernel(x.len());
        let mut y = Vec::with_capacity(x.len());
        for t in 0..x.len() {
            let mut acc = E::zero();
            for k in 0..=t {
                acc = acc + kernel[k] * x[t - k];
            }
            y.push(acc);
        }
        y
    }
}

/// Unified parameter surface over the two modes. The kernel / convolution
/// forms are only defined for the time-invariant mode.
pub enum SsmParams<E: Element> {
    Lti(LtiParams<E>),
    Selective(SelectiveSsm<E>),
}

impl<E: Element> SsmParams<E> {
    pub fn mode(&self) -> SsmMode {
        match self {
            SsmParams::Lti(_) => SsmMode::Lti,
            SsmParams::Selective(_) => SsmMode::Selective,
        }
    }

    fn lti(&self, op: &'static str) -> Result<&LtiParams<E>> {
        match self {
            SsmParams::Lti(p) => Ok(p),
            SsmParams::Selective(_) => Err(ModelError::Mode {
                op,
                expected: "LTI",
            }),
        }
    }

    pub fn scan_recurrent(&self, x: &[E]) -> Result<Vec<E>> {
        Ok(self.lti("scan_recurrent")?.discretize()?.scan_recurrent(x))
    }

    pub fn build_kernel(&self, m: usize) -> Result<Vec<E>> {
        Ok(self.lti("build_kernel")?.discretize()?.kernel(m))
    }

    pub fn scan_convolutional(&self, x: &[E]) -> Result<Vec<E>> {
        Ok(self
            .lti("scan_convolutional")?
            .discretize()?
            .scan_convolutional(x))
    }
}
