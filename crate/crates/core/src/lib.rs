//! Learning stochastic decision trees under the uniform distribution with
//! adversarial ("nasty") noise.
//!
//! The crate is organised around a handful of modules:
//!
//! * [`trees`]: stochastic decision trees, their exact semantics and the
//!   stochastic-leaf / deterministic approximation constructions.
//! * [`data`]: uniform sample generation and η-corruption adversaries.
//! * [`find`]: the optimal depth-bounded backtracking learner.
//! * [`regression`]: L2 (low-degree) and L1 polynomial regression.
//! * [`evaluation`]: exact and Monte Carlo error measurement against a
//!   known target tree, plus guarantee-margin accounting.
//! * [`harness`]: experiment configuration, single runs and sweeps.
//!
//! Inputs are points of `{0,1}^n` packed into a [`Input`] bitmask (bit `i`
//! is `x_i`), so `n` is limited to 64 variables.

mod error;
mod input;
pub mod poly;

pub mod data;
pub mod evaluation;
pub mod find;
pub mod harness;
pub mod regression;
pub mod trees;

pub use crate::data::{AdversaryStrategy, Dataset, Sample, Samples};
pub use crate::error::{Error, Result};
pub use crate::evaluation::{ErrorReport, Hypothesis, Predictor};
pub use crate::find::{find, FindOptions, SearchStats};
pub use crate::harness::{ExperimentConfig, ExperimentReport, Method};
pub use crate::input::Input;
pub use crate::poly::{Monomial, MultilinearPolynomial};
pub use crate::regression::{PredictionMode, TruncatedPolyHypothesis};
pub use crate::trees::{Node, RandomnessString, StochasticTree};

/// Largest supported number of input variables.
pub const MAX_VARIABLES: usize = 64;
