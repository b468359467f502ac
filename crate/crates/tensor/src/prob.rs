//! Categorical distributions over masked logits. Masked entries are encoded
//! as `f64::NEG_INFINITY`.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tape::logsumexp;

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().all(|&x| x == f64::NEG_INFINITY) {
        return Err(TensorError::AllMasked);
    }
    let lse = logsumexp(logits);
    Ok(logits.iter().map(|&x| if x == f64::NEG_INFINITY { x } else { x - lse }).collect())
}

/// Draws an index from normalized log-probabilities by inverse CDF.
pub fn categorical_sample<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> Result<usize> {
    let mut last_allowed = None;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        last_allowed = Some(i);
        acc += lp.exp();
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can leave the cumulative sum a hair below 1.
    last_allowed.ok_or(TensorError::AllMasked)
}
