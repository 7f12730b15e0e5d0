use super::Classifier;
use crate::encoder::{EncodedName, MAX_LEN, VOCAB_SIZE};
use crate::error::{Error, Result};

pub const NB_ALPHA: f64 = 1.0;

/// Categorical naive Bayes over the symbol at each of the 20 positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub alpha: f64,
    /// Training records per class.
    pub class_count: [f64; 2],
    /// `counts[class][position * 28 + symbol]`.
    pub counts: [Vec<f64>; 2],
}

pub fn fit_naive_bayes(names: &[EncodedName], y: &[u8], alpha: f64) -> Result<NaiveBayes> {
    if names.is_empty() {
        return Err(Error::EmptySet);
    }
    if names.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: names.len(),
            found: y.len(),
        });
    }
    if !(alpha >= 0.0) {
        return Err(Error::ShapeMismatch(format!("smoothing {alpha} must be non-negative")));
    }
    let mut class_count = [0.0; 2];
    let mut counts = [vec![0.0; MAX_LEN * VOCAB_SIZE], vec![0.0; MAX_LEN * VOCAB_SIZE]];
    for (n, &label) in names.iter().zip(y) {
        let c = usize::from(label.min(1));
        class_count[c] += 1.0;
        for f in n.active_features() {
            counts[c][f as usize] += 1.0;
        }
    }
    Ok(NaiveBayes {
        alpha,
        class_count,
        counts,
    })
}

impl NaiveBayes {
    /// Log prior plus log likelihood of `name` under class `c`.
    pub fn joint_log_likelihood(&self, name: &EncodedName, c: usize) -> f64 {
        let total = self.class_count[0] + self.class_count[1];
        let mut ll = (self.class_count[c] / total).ln();
        let denom = self.class_count[c] + self.alpha * VOCAB_SIZE as f64;
        for f in name.active_features() {
            ll += ((self.counts[c][f as usize] + self.alpha) / denom).ln();
        }
        ll
    }

    /// Normalized posterior of class 1. When both joint likelihoods vanish
    /// (possible only without smoothing) the prior is returned.
    pub fn predict_proba(&self, name: &EncodedName) -> f64 {
        let l0 = self.joint_log_likelihood(name, 0);
        let l1 = self.joint_log_likelihood(name, 1);
        if l0 == f64::NEG_INFINITY && l1 == f64::NEG_INFINITY {
            return self.class_count[1] / (self.class_count[0] + self.class_count[1]);
        }
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        e1 / (e0 + e1)
    }
}

impl Classifier for NaiveBayes {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        names.iter().map(|n| self.predict_proba(n)).collect()
    }
}
