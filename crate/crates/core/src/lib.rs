//! Regularized Q-learning with linear function approximation.
//!
//! Finite MDPs with a feature matrix `X` ([`mdp`]), tabular ground truth
//! ([`exact`]), the regularized projected Bellman equation and its solvers
//! ([`bellman`]), thresholds on the regularization weight ([`eta`]), the
//! mean-field ODE and its comparison systems ([`ode`]), stochastic learners
//! ([`agents`]), built-in instances ([`envs`]) and an experiment harness
//! ([`harness`], [`checks`]).
//!
//! State-action pairs are flattened action-major: `flat = a * |S| + s`, all
//! indices 0-based.

pub mod agents;
pub mod bellman;
pub mod checks;
pub mod envs;
pub mod error;
pub mod eta;
pub mod exact;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod ode;

pub use error::{Error, Result};
pub use exec::Exec;
