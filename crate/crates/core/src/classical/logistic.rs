use super::{check_labels, BinaryMatrix, Classifier};
use crate::encoder::EncodedName;
use crate::error::{Error, Result};
use crate::numerics::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Stop when the gradient's infinity norm drops below this.
    pub tol: f64,
    /// L2 strength on the summed loss, `sum BCE + lambda/2 |w|^2`; the
    /// bias is not penalized.
    pub lambda: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-4,
            lambda: 1.0,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Infinity norm of the objective gradient at the returned solution.
    pub grad_norm: f64,
}

impl LogisticModel {
    pub fn margin(&self, active: &[u32]) -> f64 {
        self.bias + active.iter().map(|&f| self.weights[f as usize]).sum::<f64>()
    }

    pub fn predict_proba_rows(&self, x: &BinaryMatrix) -> Vec<f64> {
        (0..x.rows()).map(|i| sigmoid(self.margin(x.row(i)))).collect()
    }
}

impl Classifier for LogisticModel {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        self.predict_proba_rows(&BinaryMatrix::from_names(names))
    }
}

/// Softplus form of the BCE for a margin `z` and label `y`:
/// `ln(1 + e^z) - y z`.
fn bce_margin(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

struct Problem<'a> {
    x: &'a BinaryMatrix,
    y: Vec<f64>,
    /// Penalty per record, `lambda / N`, so the objective is the mean BCE.
    reg: f64,
}

impl Problem<'_> {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        (0..self.x.rows())
            .map(|i| b + self.x.row(i).iter().map(|&f| w[f as usize]).sum::<f64>())
            .collect()
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.y.len() as f64;
        let data: f64 = self.margins(w, b).iter().zip(&self.y).map(|(&z, &y)| bce_margin(z, y)).sum();
        data / n + 0.5 * self.reg * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.y.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.reg * v).collect();
        let mut gb = 0.0;
        for (i, z) in self.margins(w, b).into_iter().enumerate() {
            let r = (sigmoid(z) - self.y[i]) / n;
            gb += r;
            for &f in self.x.row(i) {
                gw[f as usize] += r;
            }
        }
        (gw, gb)
    }
}

fn inf_norm(gw: &[f64], gb: f64) -> f64 {
    gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()))
}

/// Full-batch gradient descent with Armijo backtracking on
/// `mean BCE + lambda / (2N) |w|^2`. The step halves until the sufficient
/// decrease condition holds and doubles after each accepted step.
pub fn fit_logistic(x: &BinaryMatrix, y: &[u8], opts: LogisticOptions) -> Result<LogisticModel> {
    check_labels(x, y)?;
    if y.is_empty() {
        return Err(Error::EmptySet);
    }
    let p = Problem {
        x,
        y: y.iter().map(|&v| f64::from(v)).collect(),
        reg: opts.lambda / y.len() as f64,
    };
    let d = x.n_features();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = p.objective(&w, b);
    let (mut gw, mut gb) = p.gradient(&w, b);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iter && inf_norm(&gw, gb) >= opts.tol {
        iterations += 1;
        let g2 = gw.iter().map(|v| v * v).sum::<f64>() + gb * gb;
        let mut halvings = 0;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let b_new = b - step * gb;
            let f_new = p.objective(&w_new, b_new);
            if f_new.is_finite() && f_new <= f - 1e-4 * step * g2 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::Diverged { iteration: iterations });
            }
        }
        (gw, gb) = p.gradient(&w, b);
        step *= 2.0;
    }
    Ok(LogisticModel {
        grad_norm: inf_norm(&gw, gb),
        weights: w,
        bias: b,
        iterations,
    })
}
