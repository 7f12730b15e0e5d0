use super::Matrix;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
        }
    }

    pub fn for_params(params: &Matrix) -> Self {
        Self::new(params.rows(), params.cols())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut Matrix, grads: &Matrix, state: &mut AdamState, lr: f64) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.first_moment.shape() {
        return Err(Error::ShapeMismatch(format!(
            "params {:?}, grads {:?}, state {:?}",
            params.shape(),
            grads.shape(),
            state.first_moment.shape()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (((p, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity_from_fresh_state() {
        let mut p = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let before = p.clone();
        let mut st = AdamState::for_params(&p);
        for _ in 0..5 {
            adam_step(&mut p, &Matrix::zeros(2, 2), &mut st, 0.001).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count, 5);
        assert_eq!(st.first_moment, Matrix::zeros(2, 2));
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut p = Matrix::zeros(1, 3);
        let mut st = AdamState::for_params(&p);
        adam_step(&mut p, &Matrix::filled(1, 3, 1.0), &mut st, 0.001).unwrap();
        let m1 = st.first_moment[(0, 0)];
        let v1 = st.second_moment[(0, 0)];
        adam_step(&mut p, &Matrix::zeros(1, 3), &mut st, 0.001).unwrap();
        assert!((st.first_moment[(0, 0)] - BETA1 * m1).abs() < 1e-18);
        assert!((st.second_moment[(0, 0)] - BETA2 * v1).abs() < 1e-18);
    }

    #[test]
    fn first_two_steps_with_unit_gradient() {
        // t = 1: m = 0.1, v = 0.001, m_hat = v_hat = 1, update = lr / (1 + eps)
        let lr = 0.001;
        let mut p = Matrix::zeros(2, 3);
        let mut st = AdamState::for_params(&p);
        let g = Matrix::filled(2, 3, 1.0);
        adam_step(&mut p, &g, &mut st, lr).unwrap();
        let expected1 = lr / (1.0 + 1e-8);
        for &v in p.as_slice() {
            assert!((v + expected1).abs() < 1e-18);
        }
        // t = 2: m = 0.19, v = 0.001999; both bias corrections give 1 again
        adam_step(&mut p, &g, &mut st, lr).unwrap();
        for &v in p.as_slice() {
            assert!((v + 2.0 * expected1).abs() < 1e-15);
        }
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = Matrix::zeros(2, 2);
        let mut st = AdamState::for_params(&p);
        assert!(matches!(
            adam_step(&mut p, &Matrix::zeros(1, 2), &mut st, 0.1),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            adam_step(&mut p, &Matrix::filled(2, 2, f64::NAN), &mut st, 0.1),
            Err(Error::NonFiniteGradient)
        ));
        assert_eq!(st.step_count, 0);
    }
}
