//! Character-level gender prediction from first names.
//!
//! Names are normalized, one-hot encoded into 20 x 28 matrices and fed to
//! either from-scratch neural networks (MLP, CNN, RNN, GRU, BiLSTM) or
//! classical classifiers (trees, forests, KNN, naive Bayes, logistic and
//! ridge). Evaluation follows a stratified 60/20/20 split.

pub mod classical;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod numerics;

pub use error::{Error, Result};
