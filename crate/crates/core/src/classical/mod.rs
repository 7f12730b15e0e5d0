//! Classical classifiers over the 560 binary one-hot features (trees,
//! forests, KNN, logistic and ridge regression) and over the 20 positional
//! categories (naive Bayes).

mod bayes;
mod forest;
mod knn;
mod logistic;
mod ridge;
mod tree;

pub use bayes::{fit_naive_bayes, NaiveBayes, NB_ALPHA};
pub use forest::{fit_forest, Forest, ForestKind, ForestOptions};
pub use knn::{knn_predict, Knn, KNN_K};
pub use logistic::{fit_logistic, LogisticModel, LogisticOptions};
pub use ridge::{fit_ridge, RidgeModel, RidgeOptions};
pub use tree::{fit_tree, gini_impurity, DecisionTree, TreeNode, TreeOptions};

use crate::encoder::{EncodedName, FLAT_LEN};
use crate::error::{Error, Result};

/// Shared classifier contract: probabilities of label 1, thresholded at 0.5.
pub trait Classifier {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64>;

    fn predict_batch(&self, names: &[EncodedName]) -> Vec<u8> {
        self.predict_proba_batch(names)
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect()
    }
}

impl Classifier for crate::neural::Model {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        crate::neural::Model::predict_proba_batch(self, names)
    }
}

/// Sparse binary matrix in compressed-row form; each row lists its active
/// feature indices in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n_features: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl BinaryMatrix {
    pub fn new(n_features: usize) -> Self {
        BinaryMatrix {
            n_features,
            indptr: vec![0],
            indices: Vec::new(),
        }
    }

    /// Appends a row given its active features, which must be strictly
    /// increasing and below `n_features`.
    pub fn push_row(&mut self, active: &[u32]) -> Result<()> {
        let sorted = active.windows(2).all(|w| w[0] < w[1]);
        if !sorted || active.last().is_some_and(|&f| f as usize >= self.n_features) {
            return Err(Error::ShapeMismatch(format!(
                "row {:?} is not a sorted feature set below {}",
                active, self.n_features
            )));
        }
        self.indices.extend_from_slice(active);
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut m = BinaryMatrix::new(d);
        for r in rows {
            if r.len() != d {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            let active: Vec<u32> = (0..d as u32).filter(|&j| r[j as usize] != 0).collect();
            m.push_row(&active)?;
        }
        Ok(m)
    }

    pub fn from_names(names: &[EncodedName]) -> Self {
        let mut m = BinaryMatrix::new(FLAT_LEN);
        m.indices.reserve(names.len() * 20);
        for n in names {
            m.indices.extend_from_slice(&n.active_features());
            m.indptr.push(m.indices.len());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for &j in self.row(i) {
            out[j as usize] = 1.0;
        }
        out
    }
}

pub(crate) fn check_labels(x: &BinaryMatrix, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::ShapeMismatch("labels must be 0 or 1".into()));
    }
    Ok(())
}
