//! Seeded parameter initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Glorot/Xavier uniform for a [fan_in × fan_out] weight matrix.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).unwrap()
}

pub fn zeros_vec(dim: usize) -> Tensor {
    Tensor::zeros(&[dim])
}

pub fn ones_vec(dim: usize) -> Tensor {
    Tensor::ones(&[dim])
}
