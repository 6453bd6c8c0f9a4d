//! Finite-difference gradient checking.
//!
//! Double precision only: central differences at `eps ~ 1e-5` lose too many
//! digits in `f32` to say anything useful.

use alloc::vec::Vec;

use crate::error::Result;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Compare analytic gradients against central finite differences.
///
/// `build` constructs a scalar loss from the given inputs on a fresh tape;
/// it is invoked once for the analytic pass and twice per element for the
/// numeric pass. Returns the maximum over all elements of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> Result<ValueId>,
{
    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        Ok(tape.value(loss).item())
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[k]).cloned();
        for i in 0..input.numel() {
            let original = input.data()[i];
            work[k].data_mut()[i] = original + eps;
            let up = eval(&work)?;
            work[k].data_mut()[i] = original - eps;
            let down = eval(&work)?;
            work[k].data_mut()[i] = original;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.as_ref().map_or(0.0, |g| g.data()[i]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
