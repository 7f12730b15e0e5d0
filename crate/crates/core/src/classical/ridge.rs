use super::{check_labels, BinaryMatrix, Classifier};
use crate::encoder::EncodedName;
use crate::error::{Error, Result};
use crate::numerics::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeOptions {
    pub alpha: f64,
    /// Conjugate-gradient stop: Euclidean norm of the residual.
    pub tol: f64,
    /// Fit an unpenalized intercept by centering features and targets.
    pub fit_intercept: bool,
    /// Iteration cap; `10 * d` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            alpha: 1.0,
            tol: 1e-3,
            fit_intercept: true,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    /// Residual norm of the normal equations at the returned solution.
    pub residual: f64,
}

impl RidgeModel {
    pub fn margin(&self, active: &[u32]) -> f64 {
        self.intercept + active.iter().map(|&f| self.weights[f as usize]).sum::<f64>()
    }

    /// Label 1 iff the margin is non-negative.
    pub fn predict_row(&self, active: &[u32]) -> u8 {
        u8::from(self.margin(active) >= 0.0)
    }

    /// Logistic squash of the margin; crosses 0.5 exactly where the label
    /// flips.
    pub fn predict_proba_rows(&self, x: &BinaryMatrix) -> Vec<f64> {
        (0..x.rows()).map(|i| sigmoid(self.margin(x.row(i)))).collect()
    }
}

impl Classifier for RidgeModel {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        self.predict_proba_rows(&BinaryMatrix::from_names(names))
    }
}

/// The centered normal-equation operator `(Xc^T Xc + alpha I) v`, applied
/// without materializing `Xc = X - 1 mean^T`.
struct Normal<'a> {
    x: &'a BinaryMatrix,
    mean: Vec<f64>,
    alpha: f64,
}

impl Normal<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.x.rows() as f64;
        let mut out: Vec<f64> = v.iter().map(|a| self.alpha * a).collect();
        for i in 0..self.x.rows() {
            let xv: f64 = self.x.row(i).iter().map(|&f| v[f as usize]).sum();
            for &f in self.x.row(i) {
                out[f as usize] += xv;
            }
        }
        // X^T X v - n m (m . v)
        let mv: f64 = self.mean.iter().zip(v).map(|(a, b)| a * b).sum();
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o -= n * m * mv;
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(X^T X + alpha I) w = X^T t` with `t = 2y - 1` by conjugate
/// gradients.
pub fn fit_ridge(x: &BinaryMatrix, y: &[u8], opts: RidgeOptions) -> Result<RidgeModel> {
    check_labels(x, y)?;
    if y.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = x.n_features();
    let n = y.len() as f64;
    let t: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let mut mean = vec![0.0; d];
    let mut t_mean = 0.0;
    if opts.fit_intercept {
        for i in 0..x.rows() {
            for &f in x.row(i) {
                mean[f as usize] += 1.0 / n;
            }
        }
        t_mean = t.iter().sum::<f64>() / n;
    }
    let op = Normal {
        x,
        mean,
        alpha: opts.alpha,
    };
    // rhs = Xc^T (t - t_mean) = X^T t - n m t_mean (since sum of centered t is 0)
    let mut rhs = vec![0.0; d];
    for (i, &ti) in t.iter().enumerate() {
        for &f in x.row(i) {
            rhs[f as usize] += ti - t_mean;
        }
    }
    let mut w = vec![0.0; d];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = opts.max_iter.unwrap_or(10 * d.max(1));
    let mut iterations = 0;
    while rr > 0.0 && rr.sqrt() >= opts.tol {
        if iterations == max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: rr.sqrt(),
            });
        }
        iterations += 1;
        let ap = op.apply(&p);
        let step = rr / dot(&p, &ap);
        for j in 0..d {
            w[j] += step * p[j];
            r[j] -= step * ap[j];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for j in 0..d {
            p[j] = r[j] + beta * p[j];
        }
    }
    // report the true residual rather than the recursively updated one
    let aw = op.apply(&w);
    let residual = aw.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let intercept = t_mean - dot(&op.mean, &w);
    Ok(RidgeModel {
        weights: w,
        intercept,
        iterations,
        residual,
    })
}
