//! Feature ranking by PCA loading scores and factor-analysis priority, with
//! a repeated random-forest accuracy-curve harness for comparing rankings.
//!
//! The usual flow is [`data`] (load, map ratings, standardize) →
//! [`harness::prefilter`] (chi-square screen) → [`pca`] and [`fa`]
//! (rankings) → [`harness`] (accuracy curves, steady points). The
//! [`pipeline`] module wires these together and writes the run report.

pub mod data;
pub mod error;
pub mod fa;
pub mod forest;
pub mod harness;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
