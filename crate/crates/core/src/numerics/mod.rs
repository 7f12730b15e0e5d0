//! Dense linear algebra, activations, loss, Adam and a finite-difference
//! gradient oracle.

mod activation;
mod adam;
mod loss;
mod matrix;

pub use activation::{apply_activation, sigmoid, softplus, Activation};
pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{bce_loss, bce_with_logits, PROB_CLIP};
pub use matrix::{gemm, gemm_view, MatRef, Matrix};

use crate::error::{Error, Result};

/// Default step for [`finite_diff_grad`].
pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient estimate of `f` at `x`.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteValue { index: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}
