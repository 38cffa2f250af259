//! Desk-scale laboratory for distributed TD(λ) policy evaluation.
//!
//! A network of agents shares a finite Markov environment, each observing a
//! private reward. Every agent averages its neighbours' weights through a
//! doubly stochastic matrix and then takes a local TD(λ) step with linear
//! features. The crate provides
//!
//! * [`mdp`]: finite chains, multi-agent rewards, stationary analysis;
//! * [`features`]: the feature matrix, weighted norms and projection;
//! * [`network`]: communication graphs and Metropolis consensus weights;
//! * [`exact`]: the closed-form fixed point and its sanity bounds;
//! * [`dtd`]: the distributed TD(λ) iteration itself;
//! * [`analysis`]: mixing times and numerical evaluation of the finite-time
//!   error bounds;
//! * [`harness`]: configuration, sweeps and CSV reports used by the CLI;
//! * [`textio`]: the plain-text matrix, MDP and edge-list formats.

pub mod analysis;
pub mod dtd;
pub mod error;
pub mod exact;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod network;
pub mod textio;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
