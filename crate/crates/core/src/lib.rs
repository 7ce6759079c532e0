//! Simulation of distributed adaptive gradient optimization over switching
//! undirected networks.
//!
//! Each of `n` agents holds a private convex objective `f_i` on `R^m` and
//! only talks to its current neighbours. Two closed-loop protocols are
//! provided, one for single-integrator agents and one for damped
//! double-integrator agents. Both couple neighbours through normalized
//! relative states weighted by adaptive gains `q_ij` that grow while the
//! pair disagrees. The monitor module turns the convergence certificates
//! of those protocols (Lyapunov candidates, interaction dissipation, gain
//! boundedness) into checks that can be run against a simulated record.
//!
//! Module map:
//! - [`graph`]: topologies, Laplacians, connectivity and switching schedules.
//! - [`objective`]: shifted even-power objectives and the team problem.
//! - [`protocol`]: control laws, gain dynamics and the `v̄` transform.
//! - [`engine`]: fixed-step time integration producing a [`engine::RunRecord`].
//! - [`monitor`]: diagnostics computed on a record.
//! - [`exec`]: sequential / rayon execution policy.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod exec;
pub mod graph;
pub mod monitor;
pub mod objective;
pub mod points;
pub mod protocol;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
