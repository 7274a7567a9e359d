#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Simulation and multiplier diagnostics for the one-dimensional damped wave
//! equation `u_tt - u_xx + V(x) u + a(x) u_t = 0` with compactly supported
//! data.

pub mod analysis;
pub mod config;
pub mod energy;
pub mod multiplier;
pub mod profiles;
pub mod solver;
pub mod cli;
