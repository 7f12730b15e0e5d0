//! Confusion counts and the accuracy / recall / precision / F1 scores.
//! The positive class is label 1 (male).

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts with label 0 treated as positive.
    pub fn flipped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub const CSV_HEADER: &'static str = "tp,fp,fn,tn";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{}\n",
            Self::CSV_HEADER,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Set when some denominator was zero and the score was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn scores(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut degenerate = false;
    let accuracy = (cm.tn + cm.tp) as f64 / total as f64;
    let recall = ratio(cm.tp, cm.fn_ + cm.tp, &mut degenerate);
    let precision = ratio(cm.tp, cm.fp + cm.tp, &mut degenerate);
    let f1 = if precision + recall > 0.0 {
        harmonic_mean(precision, recall)
    } else {
        degenerate = true;
        0.0
    };
    Ok(MetricsReport {
        model: String::new(),
        dataset: String::new(),
        accuracy,
        recall,
        precision,
        f1,
        degenerate,
    })
}

pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    2.0 * precision * recall / (precision + recall)
}

impl MetricsReport {
    pub fn labeled(mut self, model: &str, dataset: &str) -> Self {
        self.model = model.to_string();
        self.dataset = dataset.to_string();
        self
    }

    pub const CSV_HEADER: &'static str = "model,dataset,accuracy,recall,precision,f1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.model, self.dataset, self.accuracy, self.recall, self.precision, self.f1
        )
    }
}

/// Report CSV with one row per report.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(MetricsReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_example() {
        let cm = confusion(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, tn: 1, fp: 1, fn_: 0 });
        let r = scores(&cm).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.recall, 1.0);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        assert!(!r.degenerate);
    }

    #[test]
    fn perfect_classifier() {
        let y = [0, 1, 1, 0, 1];
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
    }

    #[test]
    fn errors() {
        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion(&[], &[]), Err(Error::Empty)));
        assert!(matches!(scores(&ConfusionMatrix::default()), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn all_negative_predictions_are_degenerate() {
        let cm = confusion(&[0, 0, 0], &[0, 1, 0]).unwrap();
        let r = scores(&cm).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn label_flip_duality() {
        let preds = [1, 0, 1, 1, 0, 0, 1];
        let labels = [1, 0, 0, 1, 1, 0, 0];
        let cm = confusion(&preds, &labels).unwrap();
        let inv = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<u8>>();
        let cm0 = confusion(&inv(&preds), &inv(&labels)).unwrap();
        assert_eq!(cm.flipped(), cm0);
        let a = scores(&cm.flipped()).unwrap();
        let b = scores(&cm0).unwrap();
        assert_eq!((a.precision, a.recall), (b.precision, b.recall));
    }

    #[test]
    fn csv_exports() {
        let cm = ConfusionMatrix { tp: 2, tn: 1, fp: 1, fn_: 0 };
        assert_eq!(cm.to_csv(), "tp,fp,fn,tn\n2,1,0,1\n");
        let r = scores(&cm).unwrap().labeled("logistic", "synth");
        assert_eq!(
            reports_to_csv(&[r]),
            "model,dataset,accuracy,recall,precision,f1\nlogistic,synth,0.750000,1.000000,0.666667,0.800000\n"
        );
    }
}
