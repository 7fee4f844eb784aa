//! Budget-aware dynamic feature prioritization for activity recognition on
//! video feature streams.
//!
//! The crate learns policies that decide *which feature to compute when*
//! while a clip is recognized, instead of extracting every feature on every
//! frame. It covers:
//!
//! - a dataset model for precomputed per-frame detection scores, plus a
//!   synthetic generator with planted object–activity co-occurrence
//!   ([`data`]);
//! - incremental max-pool / mean-pool video descriptors ([`descriptor`]);
//! - the activity recognizer used for rewards and final predictions
//!   ([`classifier`]);
//! - mixture-based conditional imputation of unperformed observations in the
//!   batch setting ([`gmm`]);
//! - linear Q-models, returns, ridge fitting, and policy iteration
//!   ([`qpolicy`]);
//! - batch and streaming episode mechanics with a work-unit cost model
//!   ([`env`]);
//! - frame-level detection on untrimmed streams with F1/AMOC metrics
//!   ([`untrimmed`]);
//! - comparison selectors: passive, object-preference, and decision-tree
//!   orderings ([`baselines`]);
//! - experiment orchestration and the `featprio` CLI ([`experiment`],
//!   [`cli`]).

pub mod baselines;
pub mod classifier;
pub mod cli;
pub mod data;
pub mod descriptor;
pub mod dtree;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gmm;
pub mod qpolicy;
pub mod selector;
pub mod untrimmed;
pub mod util;

pub use error::{Error, Result};
