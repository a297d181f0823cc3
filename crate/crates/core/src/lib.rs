//! Online learning with a mentor.
//!
//! The crate is organised around one learning protocol and three reductions
//! layered on top of it:
//!
//! - [`protocol`]: states, actions, histories and the step loop that wires an
//!   [`ActiveAlgorithm`](protocol::ActiveAlgorithm) to an
//!   [`Adversary`](protocol::Adversary).
//! - [`experts`]: full-feedback learners (halving, exponential weights over a
//!   finite class or an ε-cover, one-vs-rest).
//! - [`budget`]: turns a full-feedback learner into an active learner that
//!   queries at random with an expected budget `k`.
//! - [`safe`]: the ask-for-help wrapper that queries the mentor in unfamiliar
//!   states and follows the base learner elsewhere.
//! - [`env`]: concrete adversaries and MDPs (Heaven-or-Hell, cliff-line,
//!   σ-smooth sequences, tiny tabular MDPs).
//! - [`metrics`]: Monte-Carlo and exact regret estimators, the state/action
//!   regret decomposition, slope fitting and the packing/Jung utilities.

pub mod budget;
pub mod env;
pub mod error;
pub mod experts;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod safe;

pub use error::{Error, Result};
pub use protocol::{
    binary_loss, restrict_history, run_protocol, ActionId, ActiveAlgorithm, Adversary, Branch,
    Flags, History, RunTrace, State, Step,
};
