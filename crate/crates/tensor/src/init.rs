//! Deterministic, portable random initialization.
//!
//! Streams are derived from (seed, stream) so independent consumers never
//! share a sequence. Values are drawn in f64 and converted, so f32 and f64
//! runs start from the same weights up to rounding.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;
use crate::Element;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform_tensor<E: Element>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Tensor<E> {
    let n = crate::shape::numel(shape);
    let data: Vec<E> = (0..n).map(|_| E::from_f64(rng.gen_range(lo..hi))).collect();
    Tensor::from_vec(data, shape).expect("shape/data consistent")
}

pub fn normal_tensor<E: Element>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    mean: f64,
    std: f64,
) -> Tensor<E> {
    let dist = Normal::new(mean, std).expect("valid normal");
    let n = crate::shape::numel(shape);
    let data: Vec<E> = (0..n).map(|_| E::from_f64(dist.sample(rng))).collect();
    Tensor::from_vec(data, shape).expect("shape/data consistent")
}

/// U(-sqrt(1/fan_in), sqrt(1/fan_in)), the usual default for conv/linear
/// weights and their biases.
pub fn kaiming_uniform<E: Element>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
) -> Tensor<E> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    uniform_tensor(rng, shape, -bound, bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_values() {
        let a = uniform_tensor::<f64>(&mut seeded_rng(42, 1), &[16], -1.0, 1.0);
        let b = uniform_tensor::<f64>(&mut seeded_rng(42, 1), &[16], -1.0, 1.0);
        assert_eq!(a.to_vec(), b.to_vec());
        let c = uniform_tensor::<f64>(&mut seeded_rng(42, 2), &[16], -1.0, 1.0);
        assert_ne!(a.to_vec(), c.to_vec());
    }
}
