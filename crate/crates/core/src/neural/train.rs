use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{encode_batch, Model};
use crate::corpus::{Corpus, SplitCorpus};
use crate::encoder::{encode, EncodedName, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, bce_loss, AdamState, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 256,
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::ShapeMismatch(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Per-epoch traces. Losses are the BCE data term; the train columns are
/// averaged over the epoch's minibatches as they were seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    /// Zero-based index of the epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,train_acc,val_acc";

    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// Epochs are numbered from 1 in the export.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.epochs() {
            out.push_str(&format!(
                "{},{:.10},{:.10},{:.6},{:.6}\n",
                i + 1,
                self.train_loss[i],
                self.val_loss[i],
                self.train_acc[i],
                self.val_acc[i]
            ));
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Encodes every record of a normalized corpus.
pub fn encode_corpus(corpus: &Corpus) -> Result<(Vec<EncodedName>, Vec<f64>)> {
    let vocab = Vocabulary::standard();
    let mut names = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        names.push(encode(&r.name, &vocab)?);
        labels.push(f64::from(r.gender));
    }
    Ok((names, labels))
}

/// Trains on the train part with early stopping on the validation part.
/// The test part is not touched.
pub fn train(model: &mut Model, split: &SplitCorpus, config: &TrainConfig) -> Result<TrainHistory> {
    if split.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if split.validation.is_empty() {
        return Err(Error::EmptyPartition("validation"));
    }
    let (xt, yt) = encode_corpus(&split.train)?;
    let (xv, yv) = encode_corpus(&split.validation)?;
    train_encoded(model, (&xt, &yt), (&xv, &yv), config)
}

fn accuracy(probs: &[f64], labels: &[f64]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= 0.5) == (**y >= 0.5))
        .count();
    hits as f64 / labels.len() as f64
}

/// Mean BCE and accuracy of the model in inference mode.
pub fn evaluate_loss(model: &Model, names: &[EncodedName], labels: &[f64]) -> Result<(f64, f64)> {
    let probs = model.predict_proba_batch(names);
    let (loss, _) = bce_loss(&probs, labels)?;
    Ok((loss, accuracy(&probs, labels)))
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(epoch as u128 * (1 << 40));
    rng
}

pub fn train_encoded(
    model: &mut Model,
    (train_x, train_y): (&[EncodedName], &[f64]),
    (val_x, val_y): (&[EncodedName], &[f64]),
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_x.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if val_x.is_empty() {
        return Err(Error::EmptyPartition("validation"));
    }
    if train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::LengthMismatch {
            expected: train_x.len(),
            found: train_y.len(),
        });
    }
    let l2 = model.l2_factors();
    let mut states: Vec<AdamState> = model.params_mut().iter().map(|p| AdamState::for_params(p)).collect();
    let mut history = TrainHistory::default();
    let mut best_loss = f64::INFINITY;
    let mut best_params: Vec<Matrix> = model.params_mut().iter().map(|p| (*p).clone()).collect();
    let mut wait = 0;
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 0..config.max_epochs {
        let mut shuffle_rng = epoch_rng(config.seed, epoch, 1);
        let mut dropout_rng = epoch_rng(config.seed, epoch, 2);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut hits = 0.0;
        for batch in order.chunks(config.batch_size) {
            let names: Vec<EncodedName> = batch.iter().map(|&i| train_x[i]).collect();
            let labels: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let x = encode_batch(&names);
            let pass = model.forward(&x, Some(&mut dropout_rng))?;
            let (loss, _) = bce_loss(&pass.probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch: epoch + 1 });
            }
            loss_sum += loss * batch.len() as f64;
            hits += accuracy(&pass.probs, &labels) * batch.len() as f64;
            let mut grads = model.backward(&pass, &labels);
            for ((g, p), &f) in grads.iter_mut().zip(model.params_mut()).zip(&l2) {
                if f > 0.0 {
                    g.axpy(2.0 * f, p);
                }
            }
            for ((p, g), s) in model.params_mut().into_iter().zip(&grads).zip(&mut states) {
                adam_step(p, g, s, config.lr).map_err(|e| match e {
                    Error::NonFiniteGradient => Error::DivergedLoss { epoch: epoch + 1 },
                    e => e,
                })?;
            }
        }
        let n = train_x.len() as f64;
        let (val_loss, val_acc) = evaluate_loss(model, val_x, val_y)?;
        if !val_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch: epoch + 1 });
        }
        history.train_loss.push(loss_sum / n);
        history.train_acc.push(hits / n);
        history.val_loss.push(val_loss);
        history.val_acc.push(val_acc);
        debug!(
            "epoch {} train_loss {:.6} val_loss {:.6} val_acc {:.4}",
            epoch + 1,
            loss_sum / n,
            val_loss,
            val_acc
        );
        if val_loss < best_loss {
            best_loss = val_loss;
            history.best_epoch = epoch;
            best_params = model.params_mut().iter().map(|p| (*p).clone()).collect();
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                break;
            }
        }
    }
    for (p, best) in model.params_mut().into_iter().zip(best_params) {
        *p = best;
    }
    info!(
        "{} trained {} epochs, best epoch {} (val_loss {:.6})",
        model.kind,
        history.epochs(),
        history.best_epoch + 1,
        best_loss
    );
    Ok(history)
}
