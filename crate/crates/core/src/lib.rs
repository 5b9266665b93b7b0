//! Lag-aware doubly robust off-policy evaluation and learning for contextual
//! bandits whose logging policy leaves some actions unsupported.
//!
//! The crate provides the data model ([`data`]), policies ([`policy`]), a
//! synthetic benchmark ([`synth`]), an exact-expectation engine over finite
//! environments ([`oracle`]), cross-fitted nuisance models ([`nuisance`]),
//! the value estimators ([`estimators`]) and policy-gradient learning
//! ([`opl`]).

pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod nuisance;
pub mod opl;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod table;

pub use data::{LaggedDataset, LaggedSample};
pub use error::{DolceError, Result};
pub use estimators::EstimateReport;
pub use policy::{LinearSoftmax, Policy};
pub use table::ActionTable;

/// Default propensity floor.
pub const DEFAULT_P_MIN: f64 = 1e-3;
/// Default lag-weight clipping threshold.
pub const DEFAULT_CLIP: f64 = 20.0;
