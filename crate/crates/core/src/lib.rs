//! Reinforcement-learned feature masking for unsupervised domain adaptation.
//!
//! A mask actor picks, per document, which encoder features to keep. It is
//! trained with an actor-critic policy gradient to hide the domain from a
//! discriminator while keeping the classifier's predictions unchanged.
//! Labeled source data and unlabeled target data are the only training
//! inputs; target labels are read by evaluation code alone.

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod models;
pub mod optim;
pub mod rewards;
pub mod training;

pub use error::{Error, Result};
