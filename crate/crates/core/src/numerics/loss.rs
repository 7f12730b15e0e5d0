use crate::error::{Error, Result};

/// Probabilities are clipped into `[PROB_CLIP, 1 - PROB_CLIP]` before the log.
pub const PROB_CLIP: f64 = 1e-7;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn check(p: &[f64], y: &[f64]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: p.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// Mean binary cross-entropy
/// `L = -(1/N) * sum(y ln p + (1 - y) ln(1 - p))` and its gradient with
/// respect to each `p`. The gradient is zero where clipping is active.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(p, y)?;
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let c = clip(pi);
        loss -= yi * c.ln() + (1.0 - yi) * (1.0 - c).ln();
        let g = if pi < PROB_CLIP || pi > 1.0 - PROB_CLIP {
            0.0
        } else {
            -(yi / c - (1.0 - yi) / (1.0 - c)) / n
        };
        grad.push(g);
    }
    Ok((loss / n, grad))
}

/// Mean BCE of `sigmoid(z)` against `y`, plus the gradient with respect to
/// the logits `z`, which is `(sigmoid(z) - y) / N`.
pub fn bce_with_logits(z: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(z, y)?;
    let n = z.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (&zi, &yi) in z.iter().zip(y) {
        let p = super::sigmoid(zi);
        let c = clip(p);
        loss -= yi * c.ln() + (1.0 - yi) * (1.0 - c).ln();
        grad.push((p - yi) / n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, sigmoid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn reference_values() {
        assert!((bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap().0 - LN_2).abs() < 1e-15);
        assert!(bce_loss(&[1.0 - PROB_CLIP], &[1.0]).unwrap().0 < 1e-6);
        // -ln(0.25) = ln 4
        assert!((bce_loss(&[0.25], &[1.0]).unwrap().0 - 1.386294).abs() < 1e-6);
        assert!((bce_loss(&[0.25], &[1.0]).unwrap().0 - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn extremes_are_finite() {
        let (l, g) = bce_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(l.is_finite() && l > 0.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn errors() {
        assert!(matches!(bce_loss(&[0.5], &[1.0, 0.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(bce_loss(&[], &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn label_flip_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..0.99)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.gen_range(0..2) as f64).collect();
            let q: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
            let yf: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
            let a = bce_loss(&p, &y).unwrap().0;
            let b = bce_loss(&q, &yf).unwrap().0;
            assert!((a - b).abs() < 1e-12);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn gradient_of_sigmoid_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(0..2) as f64).collect();
        let f = |v: &[f64]| {
            let p: Vec<f64> = v.iter().map(|&x| sigmoid(x)).collect();
            bce_loss(&p, &y).unwrap().0
        };
        let numeric = finite_diff_grad(f, &z, 1e-5).unwrap();
        let (_, analytic) = bce_with_logits(&z, &y).unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-6);

        let p: Vec<f64> = z.iter().map(|&x| sigmoid(x)).collect();
        let numeric_p = finite_diff_grad(|v| bce_loss(v, &y).unwrap().0, &p, 1e-6).unwrap();
        let (_, analytic_p) = bce_loss(&p, &y).unwrap();
        assert!(relative_error(&analytic_p, &numeric_p) < 1e-6);
    }
}
