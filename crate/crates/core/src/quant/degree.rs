//! Degree-based stochastic protection for DQ training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::QuantError;

/// Protection probability per node: p_min + (p_max − p_min) · rank/(n−1),
/// with ranks ascending by degree and ties broken by node index. A single
/// node gets p_max. High-degree nodes are protected most often.
pub fn degree_quant_protect(
    degrees: &[usize],
    p_min: f32,
    p_max: f32,
) -> Result<Vec<f32>, QuantError> {
    if p_min > p_max || !(0.0..=1.0).contains(&p_min) || !(0.0..=1.0).contains(&p_max) {
        return Err(QuantError::BadProtection(p_min, p_max));
    }
    let n = degrees.len();
    if n == 1 {
        return Ok(vec![p_max]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by_key(|&i| (degrees[i], i));
    let mut probs = vec![0.0f32; n];
    for (rank, &node) in order.iter().enumerate() {
        probs[node] = p_min + (p_max - p_min) * rank as f32 / (n - 1) as f32;
    }
    Ok(probs)
}

/// Bernoulli sample per node: true = protected this step.
pub fn sample_mask(probs: &[f32], rng: &mut ChaCha8Rng) -> Vec<bool> {
    probs.iter().map(|&p| rng.random::<f32>() < p).collect()
}
