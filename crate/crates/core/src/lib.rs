//! Equilibria of the Gaussian privacy game.
//!
//! A sender observes a state `x` and private information `w` (correlated with
//! `x`) and sends a message `y` to a receiver who wants to estimate `x`. An
//! eavesdropper intercepts `y` and tries to estimate `w`. Both estimators may
//! also see side information `z`. The sender minimises
//! `E‖x − x̂‖² − δ·E‖w − ŵ‖²`, with δ ≥ 0 the privacy ratio.
//!
//! The crate is organised as:
//!
//! - [`model`]: the joint Gaussian model, validation, conditional covariance
//!   and message second moments.
//! - [`equilibrium`]: informative, babbling and rescaled equilibria, and the
//!   LMMSE best responses.
//! - [`estimation`]: closed-form costs and the quadratic-form cost identity
//!   used as a self-check.
//! - [`verification`]: Monte Carlo simulation, deviation tests and a
//!   derivative-free oracle for the sender's problem.
//! - [`experiments`]: privacy-ratio and correlation sweeps, CSV output and
//!   the command-line front end.

pub mod equilibrium;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod verification;

pub use equilibrium::{
    babbling_equilibrium, lmmse_gains, scale_equilibrium, solve_general, solve_scalar,
    EquilibriumSolution, EstimatorPolicy, PrivacyRatio, ResponseRule, SenderPolicy,
};
pub use error::{Error, Result};
pub use estimation::{costs_from_moments, sender_cost_quadratic, CostBreakdown, CostOperator};
pub use model::{
    conditional_covariance, message_moments, validate_model, ConditionalCovariance, Dimensions,
    GaussianModel, MessageMoments,
};
