//! Simulation and verification tools for nonlinear PI control of scalar
//! sector-bounded plants with an ignored first-order actuator lag.

// Guards are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod controller;
pub mod experiments;
pub mod gains;
pub mod output;
pub mod plant;
pub mod plot;
pub mod simcore;
