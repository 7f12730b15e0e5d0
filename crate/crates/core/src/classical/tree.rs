use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{check_labels, BinaryMatrix, Classifier};
use crate::encoder::EncodedName;
use crate::error::{Error, Result};

/// `1 - p0^2 - p1^2` of a binary label multiset.
pub fn gini_impurity(labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptySet);
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    Ok(gini_from_counts(labels.len(), ones))
}

fn gini_from_counts(n: usize, ones: usize) -> f64 {
    let p1 = ones as f64 / n as f64;
    let p0 = 1.0 - p1;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeOptions {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Number of non-constant candidate features drawn per node; all
    /// features when `None`.
    pub feature_subsample: Option<usize>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            max_depth: None,
            min_samples_split: 2,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Class frequencies `[p(0), p(1)]`.
    Leaf([f64; 2]),
    /// `absent` handles rows where the feature is 0, `present` where it is 1.
    Split {
        feature: u32,
        absent: usize,
        present: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { absent, present, .. } => 1 + go(t, absent).max(go(t, present)),
            }
        }
        go(self, 0)
    }

    /// Feature tested at the root, if the root is a split.
    pub fn root_feature(&self) -> Option<u32> {
        match self.nodes[0] {
            TreeNode::Split { feature, .. } => Some(feature),
            TreeNode::Leaf(_) => None,
        }
    }

    /// Probability of label 1 for one sparse row.
    pub fn predict_row(&self, active: &[u32]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf(p) => return p[1],
                TreeNode::Split {
                    feature,
                    absent,
                    present,
                } => i = if active.binary_search(&feature).is_ok() { present } else { absent },
            }
        }
    }

    pub fn predict_proba_rows(&self, x: &BinaryMatrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

impl Classifier for DecisionTree {
    fn predict_proba_batch(&self, names: &[EncodedName]) -> Vec<f64> {
        self.predict_proba_rows(&BinaryMatrix::from_names(names))
    }
}

struct Builder<'a> {
    x: &'a BinaryMatrix,
    y: &'a [u8],
    opts: TreeOptions,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
    count: Vec<u32>,
    count1: Vec<u32>,
    order: Vec<u32>,
}

impl Builder<'_> {
    fn leaf(&mut self, n: usize, ones: usize) -> usize {
        let p1 = ones as f64 / n as f64;
        self.nodes.push(TreeNode::Leaf([1.0 - p1, p1]));
        self.nodes.len() - 1
    }

    fn best_split(&mut self, samples: &[usize], ones: usize) -> Option<u32> {
        let n = samples.len();
        self.count.iter_mut().for_each(|c| *c = 0);
        self.count1.iter_mut().for_each(|c| *c = 0);
        for &s in samples {
            let one = u32::from(self.y[s]);
            for &f in self.x.row(s) {
                self.count[f as usize] += 1;
                self.count1[f as usize] += one;
            }
        }
        let non_constant = |f: usize, count: &[u32]| count[f] > 0 && (count[f] as usize) < n;
        let candidates: Vec<u32> = match self.opts.feature_subsample {
            None => (0..self.x.n_features() as u32)
                .filter(|&f| non_constant(f as usize, &self.count))
                .collect(),
            Some(k) => {
                self.order.shuffle(self.rng);
                let mut picked: Vec<u32> = self
                    .order
                    .iter()
                    .copied()
                    .filter(|&f| non_constant(f as usize, &self.count))
                    .take(k)
                    .collect();
                picked.sort_unstable();
                picked
            }
        };
        // Weighted child impurity is n - purity, purity = sum over children of
        // (c0^2 + c1^2) / size, so the best split maximizes purity. Compared as
        // exact fractions so equal gains tie to the lowest feature index.
        let mut best: Option<(u128, u128, u32)> = None;
        for f in candidates {
            let (np, np1) = (u128::from(self.count[f as usize]), u128::from(self.count1[f as usize]));
            let (na, na1) = (n as u128 - np, ones as u128 - np1);
            let sq = |size: u128, one: u128| one * one + (size - one) * (size - one);
            let num = sq(np, np1) * na + sq(na, na1) * np;
            let den = np * na;
            if best.map_or(true, |(bn, bd, _)| num * bd > bn * den) {
                best = Some((num, den, f));
            }
        }
        best.map(|(_, _, f)| f)
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let n = samples.len();
        let ones = samples.iter().filter(|&&s| self.y[s] == 1).count();
        let depth_capped = self.opts.max_depth.is_some_and(|d| depth >= d);
        if ones == 0 || ones == n || depth_capped || n < self.opts.min_samples_split {
            return self.leaf(n, ones);
        }
        let Some(feature) = self.best_split(&samples, ones) else {
            return self.leaf(n, ones);
        };
        let (present, absent): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x.row(s).binary_search(&feature).is_ok());
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature,
            absent: 0,
            present: 0,
        });
        let a = self.grow(absent, depth + 1);
        let p = self.grow(present, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            absent: a,
            present: p,
        };
        id
    }
}

/// Greedy Gini tree on all rows of `x`.
pub fn fit_tree(x: &BinaryMatrix, y: &[u8], opts: TreeOptions, rng: &mut ChaCha8Rng) -> Result<DecisionTree> {
    fit_tree_on(x, y, (0..x.rows()).collect(), opts, rng)
}

/// Greedy Gini tree on the rows listed in `samples` (repeats allowed).
pub(crate) fn fit_tree_on(
    x: &BinaryMatrix,
    y: &[u8],
    samples: Vec<usize>,
    opts: TreeOptions,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    check_labels(x, y)?;
    if samples.is_empty() {
        return Err(Error::ShapeMismatch("cannot fit a tree on zero rows".into()));
    }
    let d = x.n_features();
    let mut b = Builder {
        x,
        y,
        opts,
        rng,
        nodes: Vec::new(),
        count: vec![0; d],
        count1: vec![0; d],
        order: (0..d as u32).collect(),
    };
    b.grow(samples, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_features: d,
    })
}
