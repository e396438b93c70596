//! Arabic offensive-language detection toolkit: tweet normalization,
//! character n-gram TF-IDF and word-embedding features, from-scratch
//! recurrent classifiers with a logistic-regression baseline, k-fold
//! cross-validation, and cross-model error analysis.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod neural;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
