//! Uncertainty-aware constrained iterative LQR motion planning for on-road
//! vehicles.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: kinematic bicycle transition and its Jacobian.
//! * [`ilqr`]: the iterative LQR solver.
//! * [`constraints`]: stage cost, barrier-wrapped constraints and adaptive
//!   weighting.
//! * [`prediction`]: interval reachability for the short term and a recursive
//!   least squares predictor for the long term, both emitted as ellipses.
//! * [`simulator`]: closed-loop scenarios, behaviour classification and speed
//!   sweeps.
//! * [`cli`]: scenario files, CSV logs, plots and the command entry points.

pub mod cli;
pub mod constraints;
pub mod dynamics;
pub mod ilqr;
pub mod prediction;
pub mod simulator;
