use crate::error::{Result, TensorError};
use crate::tensor::Tensor;
use crate::Element;

/// Adam with bias correction. Moment buffers are kept per parameter in
/// registration order; the step counter increases by one per `step`.
pub struct Adam<E: Element> {
    params: Vec<Tensor<E>>,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

impl<E: Element> Adam<E> {
    pub fn new(params: &[Tensor<E>], lr: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(TensorError::Invalid {
                op: "adam",
                msg: format!("learning rate must be > 0, got {}", lr),
            });
        }
        Ok(Adam {
            m: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
            params: params.to_vec(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently deposited on the
    /// parameters, then clears them. Parameters without a gradient are
    /// treated as zero-gradient.
    pub fn step(&mut self) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let b1 = E::from_f64(self.beta1);
        let b2 = E::from_f64(self.beta2);
        let one = E::one();
        for (i, p) in self.params.iter().enumerate() {
            let grad = p.grad();
            let g: &[E] = match &grad {
                Some(g) => g,
                None => continue,
            };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let lr = self.lr;
            let eps = self.eps;
            p.update_data(|data| {
                for j in 0..data.len() {
                    m[j] = b1 * m[j] + (one - b1) * g[j];
                    v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                    let mhat = m[j].to_f64() / bc1;
                    let vhat = v[j].to_f64() / bc2;
                    let upd = lr * mhat / (vhat.sqrt() + eps);
                    data[j] = data[j] - E::from_f64(upd);
                }
            });
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let p = Tensor::<f64>::param(vec![1.0, -2.0], &[2]).unwrap();
        let mut opt = Adam::new(&[p.clone()], 1e-3).unwrap();
        p.accumulate_grad(&[0.0, 0.0]);
        opt.step();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);
        // no gradient at all is also a no-op
        opt.step();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // with g = 1 the bias-corrected first step is lr / (1 + eps)
        let p = Tensor::<f64>::param(vec![0.0], &[1]).unwrap();
        let lr = 1e-2;
        let mut opt = Adam::new(&[p.clone()], lr).unwrap();
        p.accumulate_grad(&[1.0]);
        opt.step();
        let moved = -p.to_vec()[0];
        assert!((moved - lr).abs() < 1e-6, "moved {}", moved);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(p) = p^2, gradient 2p, from p = 1
        let p = Tensor::<f64>::param(vec![1.0], &[1]).unwrap();
        let mut opt = Adam::new(&[p.clone()], 1e-2).unwrap();
        for _ in 0..2000 {
            let g = 2.0 * p.to_vec()[0];
            p.accumulate_grad(&[g]);
            opt.step();
        }
        assert!(p.to_vec()[0].abs() < 1e-3, "ended at {}", p.to_vec()[0]);
        assert_eq!(opt.step_count(), 2000);
    }

    #[test]
    fn invalid_lr_rejected() {
        let p = Tensor::<f64>::param(vec![0.0], &[1]).unwrap();
        assert!(Adam::new(&[p], 0.0).is_err());
    }
}
