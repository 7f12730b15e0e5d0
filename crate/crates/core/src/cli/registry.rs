//! The twelve model kinds behind one interface: fitting from a split,
//! prediction and conversion to and from [`ModelFile`].

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model_file::ModelFile;
use crate::classical::{
    fit_forest, fit_logistic, fit_naive_bayes, fit_ridge, fit_tree, BinaryMatrix, Classifier, DecisionTree, Forest,
    ForestKind, ForestOptions, Knn, LogisticModel, LogisticOptions, NaiveBayes, RidgeModel, RidgeOptions, TreeNode,
    TreeOptions, KNN_K, NB_ALPHA,
};
use crate::corpus::SplitCorpus;
use crate::encoder::{EncodedName, Vocabulary, FLAT_LEN, MAX_LEN, VOCAB_SIZE, VOCAB_VERSION};
use crate::error::{Error, Result};
use crate::neural::{build_model, encode_corpus, train, Model, ModelKind, TrainConfig, TrainHistory, GRU_CONVENTION};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Neural(ModelKind),
    ExtraTrees,
    RandomForest,
    DecisionTree,
    Knn,
    NaiveBayes,
    Logistic,
    Ridge,
}

impl Kind {
    pub const ALL: [Kind; 12] = [
        Kind::Neural(ModelKind::Mlp),
        Kind::Neural(ModelKind::Cnn),
        Kind::Neural(ModelKind::Rnn),
        Kind::Neural(ModelKind::Gru),
        Kind::Neural(ModelKind::BiLstm),
        Kind::ExtraTrees,
        Kind::RandomForest,
        Kind::DecisionTree,
        Kind::Knn,
        Kind::NaiveBayes,
        Kind::Logistic,
        Kind::Ridge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Neural(k) => k.name(),
            Kind::ExtraTrees => "extra_trees",
            Kind::RandomForest => "random_forest",
            Kind::DecisionTree => "decision_tree",
            Kind::Knn => "knn",
            Kind::NaiveBayes => "naive_bayes",
            Kind::Logistic => "logistic",
            Kind::Ridge => "ridge",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(Error::UnknownKind(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Neural(Model, TrainConfig),
    Forest(Forest),
    Tree(DecisionTree),
    Knn(Knn),
    NaiveBayes(NaiveBayes),
    Logistic(LogisticModel),
    Ridge(RidgeModel),
}

/// Fits `kind` on the train part (and, for networks, the validation part
/// for early stopping). The test part is never read.
pub fn fit(kind: Kind, split: &SplitCorpus, config: &TrainConfig) -> Result<(Fitted, Option<TrainHistory>)> {
    if let Kind::Neural(k) = kind {
        let mut model = build_model(k, config.seed)?;
        let history = train(&mut model, split, config)?;
        return Ok((Fitted::Neural(model, *config), Some(history)));
    }
    if split.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    let (names, labels) = encode_corpus(&split.train)?;
    let y: Vec<u8> = labels.iter().map(|&v| v as u8).collect();
    let x = BinaryMatrix::from_names(&names);
    let seed = config.seed;
    let fitted = match kind {
        Kind::ExtraTrees | Kind::RandomForest => {
            let fk = if kind == Kind::ExtraTrees {
                ForestKind::ExtraTrees
            } else {
                ForestKind::RandomForest
            };
            Fitted::Forest(fit_forest(&x, &y, fk, ForestOptions::new(fk, FLAT_LEN, seed))?)
        }
        Kind::DecisionTree => Fitted::Tree(fit_tree(
            &x,
            &y,
            TreeOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?),
        Kind::Knn => Fitted::Knn(Knn::fit(x, y, KNN_K)?),
        Kind::NaiveBayes => Fitted::NaiveBayes(fit_naive_bayes(&names, &y, NB_ALPHA)?),
        Kind::Logistic => Fitted::Logistic(fit_logistic(&x, &y, LogisticOptions::default())?),
        Kind::Ridge => Fitted::Ridge(fit_ridge(&x, &y, RidgeOptions::default())?),
        Kind::Neural(_) => unreachable!(),
    };
    Ok((fitted, None))
}

impl Fitted {
    pub fn kind(&self) -> Kind {
        match self {
            Fitted::Neural(m, _) => Kind::Neural(m.kind),
            Fitted::Forest(f) => match f.kind {
                ForestKind::ExtraTrees => Kind::ExtraTrees,
                ForestKind::RandomForest => Kind::RandomForest,
            },
            Fitted::Tree(_) => Kind::DecisionTree,
            Fitted::Knn(_) => Kind::Knn,
            Fitted::NaiveBayes(_) => Kind::NaiveBayes,
            Fitted::Logistic(_) => Kind::Logistic,
            Fitted::Ridge(_) => Kind::Ridge,
        }
    }

    pub fn predict_proba(&self, names: &[EncodedName]) -> Vec<f64> {
        match self {
            Fitted::Neural(m, _) => m.predict_proba_batch(names),
            Fitted::Forest(m) => m.predict_proba_batch(names),
            Fitted::Tree(m) => m.predict_proba_batch(names),
            Fitted::Knn(m) => m.predict_proba_batch(names),
            Fitted::NaiveBayes(m) => m.predict_proba_batch(names),
            Fitted::Logistic(m) => m.predict_proba_batch(names),
            Fitted::Ridge(m) => m.predict_proba_batch(names),
        }
    }

    /// Serializes with the given provenance fields.
    pub fn to_file(&self, seed: u64, corpus_digest: &str, min_ratio: f64) -> ModelFile {
        let mut params: Vec<(String, String)> = Vec::new();
        let mut arrays: Vec<(String, Matrix)> = Vec::new();
        let mut p = |k: &str, v: String| params.push((k.to_string(), v));
        match self {
            Fitted::Neural(m, cfg) => {
                p("lr", format!("{:e}", cfg.lr));
                p("batch_size", cfg.batch_size.to_string());
                p("max_epochs", cfg.max_epochs.to_string());
                p("patience", cfg.patience.to_string());
                p("init", "glorot_uniform".into());
                for (spec, i) in m.specs.iter().zip(0..) {
                    if spec.l2 > 0.0 {
                        p(&format!("layer{i}.l2"), format!("{:e}", spec.l2));
                    }
                    if spec.dropout > 0.0 {
                        p(&format!("layer{i}.dropout"), format!("{:e}", spec.dropout));
                    }
                }
                if m.kind == ModelKind::Gru {
                    p("gru_convention", GRU_CONVENTION.into());
                }
                for (name, w) in m.named_params() {
                    arrays.push((name, w.clone()));
                }
            }
            Fitted::Forest(f) => {
                p("n_trees", f.trees.len().to_string());
                p("criterion", "gini".into());
                p("max_features", ((FLAT_LEN as f64).sqrt() as usize).to_string());
                p("bootstrap", (f.kind == ForestKind::RandomForest).to_string());
                for (i, t) in f.trees.iter().enumerate() {
                    arrays.push((format!("tree{i}.nodes"), tree_to_matrix(t)));
                }
            }
            Fitted::Tree(t) => {
                p("criterion", "gini".into());
                arrays.push(("tree.nodes".into(), tree_to_matrix(t)));
            }
            Fitted::Knn(k) => {
                p("k", k.k.to_string());
                p("metric", "euclidean".into());
                let n = k.y.len();
                let mut idx = Matrix::zeros(n, MAX_LEN);
                for i in 0..n {
                    for (pos, &f) in k.x.row(i).iter().enumerate() {
                        idx[(i, pos)] = f64::from(f % VOCAB_SIZE as u32);
                    }
                }
                arrays.push(("train.symbols".into(), idx));
                arrays.push(("train.labels".into(), labels_matrix(&k.y)));
            }
            Fitted::NaiveBayes(nb) => {
                p("alpha", format!("{:e}", nb.alpha));
                arrays.push((
                    "class_count".into(),
                    Matrix::from_vec(1, 2, nb.class_count.to_vec()).expect("two classes"),
                ));
                let mut counts = nb.counts[0].clone();
                counts.extend_from_slice(&nb.counts[1]);
                arrays.push((
                    "counts".into(),
                    Matrix::from_vec(2, nb.counts[0].len(), counts).expect("two classes"),
                ));
            }
            Fitted::Logistic(m) => {
                let o = LogisticOptions::default();
                p("lambda", format!("{:e}", o.lambda));
                p("tol", format!("{:e}", o.tol));
                p("max_iter", o.max_iter.to_string());
                arrays.push(("weights".into(), row_matrix(&m.weights)));
                arrays.push(("bias".into(), row_matrix(&[m.bias])));
            }
            Fitted::Ridge(m) => {
                let o = RidgeOptions::default();
                p("alpha", format!("{:e}", o.alpha));
                p("tol", format!("{:e}", o.tol));
                p("solver", "conjugate_gradient".into());
                arrays.push(("weights".into(), row_matrix(&m.weights)));
                arrays.push(("intercept".into(), row_matrix(&[m.intercept])));
            }
        }
        ModelFile {
            kind: self.kind().name().to_string(),
            vocabulary: Vocabulary::standard().as_string(),
            vocabulary_version: VOCAB_VERSION.to_string(),
            seed,
            corpus_digest: corpus_digest.to_string(),
            min_ratio,
            params,
            arrays,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Fitted> {
        if file.vocabulary != Vocabulary::standard().as_string() || file.vocabulary_version != VOCAB_VERSION {
            return Err(Error::ModelFormat(format!(
                "vocabulary {} ({}) is not supported",
                file.vocabulary, file.vocabulary_version
            )));
        }
        let kind: Kind = file.kind.parse()?;
        Ok(match kind {
            Kind::Neural(k) => {
                let cfg = TrainConfig {
                    lr: file.parse_param("lr")?,
                    batch_size: file.parse_param("batch_size")?,
                    max_epochs: file.parse_param("max_epochs")?,
                    patience: file.parse_param("patience")?,
                    seed: file.seed,
                };
                if k == ModelKind::Gru && file.param("gru_convention")? != GRU_CONVENTION {
                    return Err(Error::ModelFormat("unsupported GRU gate convention".into()));
                }
                let mut model = build_model(k, file.seed)?;
                let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
                for (name, slot) in names.iter().zip(model.params_mut()) {
                    let stored = file.array(name)?;
                    if stored.shape() != slot.shape() {
                        return Err(Error::ModelFormat(format!("array {name} has the wrong shape")));
                    }
                    *slot = stored.clone();
                }
                Fitted::Neural(model, cfg)
            }
            Kind::ExtraTrees | Kind::RandomForest => {
                let n: usize = file.parse_param("n_trees")?;
                let trees = (0..n)
                    .map(|i| tree_from_matrix(file.array(&format!("tree{i}.nodes"))?))
                    .collect::<Result<Vec<_>>>()?;
                let fk = if kind == Kind::ExtraTrees {
                    ForestKind::ExtraTrees
                } else {
                    ForestKind::RandomForest
                };
                Fitted::Forest(Forest { kind: fk, trees })
            }
            Kind::DecisionTree => Fitted::Tree(tree_from_matrix(file.array("tree.nodes")?)?),
            Kind::Knn => {
                let symbols = file.array("train.symbols")?;
                let labels = file.array("train.labels")?;
                let mut names = Vec::with_capacity(symbols.rows());
                for r in 0..symbols.rows() {
                    let mut idx = [0u8; MAX_LEN];
                    for (slot, &v) in idx.iter_mut().zip(symbols.row(r)) {
                        *slot = v as u8;
                    }
                    names.push(EncodedName::from_indices(idx)?);
                }
                let y: Vec<u8> = labels.as_slice().iter().map(|&v| v as u8).collect();
                Fitted::Knn(Knn::fit(BinaryMatrix::from_names(&names), y, file.parse_param("k")?)?)
            }
            Kind::NaiveBayes => {
                let cc = file.array("class_count")?;
                let counts = file.array("counts")?;
                if cc.shape() != (1, 2) || counts.shape() != (2, MAX_LEN * VOCAB_SIZE) {
                    return Err(Error::ModelFormat("naive Bayes arrays have the wrong shape".into()));
                }
                Fitted::NaiveBayes(NaiveBayes {
                    alpha: file.parse_param("alpha")?,
                    class_count: [cc.as_slice()[0], cc.as_slice()[1]],
                    counts: [counts.row(0).to_vec(), counts.row(1).to_vec()],
                })
            }
            Kind::Logistic => Fitted::Logistic(LogisticModel {
                weights: feature_vector(file.array("weights")?)?,
                bias: scalar(file.array("bias")?)?,
                iterations: 0,
                grad_norm: 0.0,
            }),
            Kind::Ridge => Fitted::Ridge(RidgeModel {
                weights: feature_vector(file.array("weights")?)?,
                intercept: scalar(file.array("intercept")?)?,
                iterations: 0,
                residual: 0.0,
            }),
        })
    }
}

fn row_matrix(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

fn labels_matrix(y: &[u8]) -> Matrix {
    row_matrix(&y.iter().map(|&v| f64::from(v)).collect::<Vec<_>>())
}

fn feature_vector(m: &Matrix) -> Result<Vec<f64>> {
    if m.shape() != (1, FLAT_LEN) {
        return Err(Error::ModelFormat(format!("weight vector has shape {:?}", m.shape())));
    }
    Ok(m.as_slice().to_vec())
}

fn scalar(m: &Matrix) -> Result<f64> {
    match m.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::ModelFormat("expected a scalar".into())),
    }
}

/// Leaf rows are `[0, p0, p1, 0]`, split rows `[1, feature, absent, present]`.
fn tree_to_matrix(t: &DecisionTree) -> Matrix {
    let mut m = Matrix::zeros(t.nodes.len(), 4);
    for (i, node) in t.nodes.iter().enumerate() {
        let row = match *node {
            TreeNode::Leaf([p0, p1]) => [0.0, p0, p1, 0.0],
            TreeNode::Split {
                feature,
                absent,
                present,
            } => [1.0, f64::from(feature), absent as f64, present as f64],
        };
        m.row_mut(i).copy_from_slice(&row);
    }
    m
}

fn tree_from_matrix(m: &Matrix) -> Result<DecisionTree> {
    let n = m.rows();
    if m.cols() != 4 || n == 0 {
        return Err(Error::ModelFormat("tree array must be n x 4".into()));
    }
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let r = m.row(i);
        let node = if r[0] == 0.0 {
            TreeNode::Leaf([r[1], r[2]])
        } else {
            let (feature, absent, present) = (r[1] as usize, r[2] as usize, r[3] as usize);
            // children always follow their parent, which rules out cycles
            if feature >= FLAT_LEN || absent <= i || present <= i || absent >= n || present >= n {
                return Err(Error::ModelFormat(format!("tree node {i} is malformed")));
            }
            TreeNode::Split {
                feature: feature as u32,
                absent,
                present,
            }
        };
        nodes.push(node);
    }
    Ok(DecisionTree {
        nodes,
        n_features: FLAT_LEN,
    })
}
