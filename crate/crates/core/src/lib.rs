//! Latent-variable fish growth and impulsive two-habitat transport.
//!
//! Log body weight follows `dW = r(1 - Z) dt`, driven by a Wright-Fisher latent
//! ratio `Z`. The population density over `(W, Z)` obeys a degenerate
//! Fokker-Planck equation, solved here with fifth-order WENO and Heun
//! stepping; an adjoint sweep turns the harvest objective into bang-bang
//! transport controls, iterated to a fixed point when only `W` is observed.
//!
//! - [`growth`]: SDE stepping and Monte-Carlo statistics
//! - [`calibrate`]: histogram and time-series parameter identification
//! - [`numerics`]: grids, WENO operators, limiter, time stepping
//! - [`pde`]: forward densities and adjoints with impulse interfaces
//! - [`optimize`]: objective, control extraction, Picard loop, cost sweeps
//! - [`cli`]: configuration, CSV/SVG artifacts and the `fpimpulse` binary
//!
//! Runnable examples (`cargo run --release --example <name>`):
//! `growth_simulation`, `calibrate_histogram`, `identify_growth_rate`,
//! `weno_convergence`, `forward_transport`, `full_information`,
//! `partial_information`, `cost_sweep`, `gradient_check`, `render_plots`.

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod growth;
pub mod numerics;
pub mod optimize;
pub mod pde;
pub mod stats;

pub use error::{Error, Result};
