//! Best-subset feature selection with e-values.
//!
//! The pipeline fits a single full model, draws two generalized-bootstrap
//! clouds of the parameter estimate with a one-step (no refit) approximation,
//! and scores every drop-one-feature model by its mean data depth against the
//! full-model cloud. A feature is kept when dropping it lowers the e-value
//! below the full model's.
//!
//! - [`model`]: datasets, candidate models, OLS and Gaussian LMM fitting
//! - [`depth`]: Mahalanobis and projection depth against a point cloud
//! - [`gbs`]: weight generation and one-step bootstrap clouds
//! - [`evalue`]: e-values, the one-pass selection and the exhaustive oracle
//! - [`screening`]: sure independence screening for `p >= n`
//! - [`tuning`]: GBIC and the `tau_n` grid search
//! - [`simbench`]: synthetic generators and the replication harness

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod evalue;
pub mod gbs;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod screening;
pub mod simbench;
pub mod tuning;

pub use depth::{mahalanobis_depth, projection_depth, CloudStats, DepthKind};
pub use error::{Error, Result};
pub use evalue::{evalue_of_model, exhaustive_evalue_scan, select, EValueReport};
pub use gbs::{make_clouds, BootstrapCloud, GbsConfig, ResampleForm};
pub use model::{fit, Dataset, Family, FittedModel, FullFit, ModelSpec};
pub use screening::sis_screen;
pub use tuning::{gbic, tune_select, TuningResult};
