//! Sequential block-wise pairwise ranking for implicit feedback.
//!
//! The crate covers the whole pipeline: loading time-ordered interaction
//! logs ([`corpus`]), the latent factor model and its pairwise logistic loss
//! ([`model`]), four training strategies ([`trainers`]), long-memory analysis
//! of user series with the memory-aware filter-and-retrain pipeline
//! ([`memory`]), ranking metrics ([`eval`]) and a planted-structure corpus
//! generator ([`synth`]). The `saros` binary wires these together ([`cli`]).

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod memory;
pub mod model;
pub mod synth;
pub mod trainers;

pub use corpus::{Block, Corpus, Interaction, Label, SplitCorpus, SplitSpec};
pub use error::{Error, Result};
pub use model::{LossConfig, ModelParams};
pub use trainers::{TrainConfig, TrainTrace};
