use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::fit_tree_on;
use super::{check_labels, BinaryMatrix, Classifier, DecisionTree, TreeOptions};
use crate::encoder::EncodedName;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForestKind {
    RandomForest,
    ExtraTrees,
}

impl ForestKind {
    pub fn name(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "random_forest",
            ForestKind::ExtraTrees => "extra_trees",
        }
    }
}

impl fmt::Display for ForestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" => Ok(ForestKind::RandomForest),
            "extra_trees" => Ok(ForestKind::ExtraTrees),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// Bootstrap resample per tree (random forest) or full data (extra trees).
    pub bootstrap: bool,
    pub tree: TreeOptions,
    pub seed: u64,
}

impl ForestOptions {
    /// 100 trees with `floor(sqrt(d))` candidate features per node.
    pub fn new(kind: ForestKind, n_features: usize, seed: u64) -> Self {
        ForestOptions {
            n_trees: 100,
            bootstrap: kind == ForestKind::RandomForest,
            tree: TreeOptions {
                feature_subsample: Some(((n_features as f64).sqrt() as usize).max(1)),
                ..TreeOptions::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub kind: ForestKind,
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    /// Mean of the trees' probabilities, summed in tree order.
    pub fn predict_row(&self, active: &[u32]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(active)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_proba_rows(&self, x: &BinaryMatrix) -> Vec<f64> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }
}

impl Classifier for Forest {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        self.predict_proba_rows(&BinaryMatrix::from_names(names))
    }
}

/// Fits `opts.n_trees` trees; tree `i` draws its bootstrap sample and
/// candidate features from a generator seeded with `seed + i`, so the
/// result does not depend on how trees are scheduled across threads.
pub fn fit_forest(x: &BinaryMatrix, y: &[u8], kind: ForestKind, opts: ForestOptions) -> Result<Forest> {
    check_labels(x, y)?;
    if x.rows() == 0 || opts.n_trees == 0 {
        return Err(Error::ShapeMismatch("forest needs rows and at least one tree".into()));
    }
    let n = x.rows();
    let trees = (0..opts.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let samples: Vec<usize> = if opts.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_on(x, y, samples, opts.tree, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { kind, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::fit_tree;

    fn toy() -> (BinaryMatrix, Vec<u8>) {
        let rows: Vec<Vec<u8>> = (0..30u32)
            .map(|i| (0..6).map(|b| ((i >> (b % 5)) & 1) as u8).collect())
            .collect();
        let y = rows.iter().map(|r| r[0] ^ r[2]).collect();
        (BinaryMatrix::from_dense(&rows).unwrap(), y)
    }

    #[test]
    fn single_tree_without_bootstrap_equals_fit_tree() {
        let (x, y) = toy();
        let mut opts = ForestOptions::new(ForestKind::RandomForest, 6, 17);
        opts.n_trees = 1;
        opts.bootstrap = false;
        let f = fit_forest(&x, &y, ForestKind::RandomForest, opts).unwrap();
        let t = fit_tree(&x, &y, opts.tree, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        assert_eq!(f.trees, vec![t]);
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = toy();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let f = fit_forest(&x, &y, kind, ForestOptions::new(kind, 6, 1)).unwrap();
            let preds: Vec<u8> = f.predict_proba_rows(&x).iter().map(|&p| u8::from(p >= 0.5)).collect();
            assert_eq!(preds, y, "{kind}");
        }
    }

    #[test]
    fn seeded_determinism() {
        let (x, y) = toy();
        let opts = ForestOptions::new(ForestKind::RandomForest, 6, 3);
        let a = fit_forest(&x, &y, ForestKind::RandomForest, opts).unwrap();
        let b = fit_forest(&x, &y, ForestKind::RandomForest, opts).unwrap();
        assert_eq!(a.predict_proba_rows(&x), b.predict_proba_rows(&x));
        assert_eq!(a, b);
    }

    #[test]
    fn default_subsample_is_sqrt() {
        let o = ForestOptions::new(ForestKind::ExtraTrees, 560, 0);
        assert_eq!(o.tree.feature_subsample, Some(23));
        assert!(!o.bootstrap);
        assert_eq!(o.n_trees, 100);
    }
}
