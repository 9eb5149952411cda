//! Discrete dynamic bicycle model that stays well defined at standstill,
//! with a numerical-stability analyzer and a nonlinear MPC harness.
//!
//! The library is organized around the lifecycle of the model:
//!
//! - [`models`]: continuous-time dynamic and kinematic single-track models
//!   with a linear tire law.
//! - [`integrate`]: the backward-Euler-inspired explicit step, forward-Euler
//!   baselines, and a fine-step RK4 ground-truth integrator.
//! - [`stability`]: step-Jacobian blocks, spectral-norm condition sweep, and
//!   the long-product boundedness audit.
//! - [`mpc`]: the constrained optimal control problem with pluggable
//!   dynamic/kinematic predictors.
//! - [`scenarios`]: experiment runners (step steer, accuracy sweep,
//!   stop-and-go, timing).
//! - [`cli`]: config ingestion and CSV/report emission for the binary.

pub mod cli;
pub mod integrate;
pub mod models;
pub mod mpc;
pub mod scenarios;
pub mod stability;

pub use models::{ControlInput, DomainError, DynState, KinState, VehicleParams};
