//! Gain synthesis and closed-loop simulation for distributed adaptive
//! consensus of multi-agent systems.
//!
//! Agents share identical dynamics, either linear (`ẋ = Ax + Bu`) or with a
//! Lipschitz nonlinearity (`ẋ = Ax + D₁f(x) + Bu`), and talk over a fixed
//! undirected graph. Each edge carries a coupling weight that adapts from the
//! relative state of its two endpoints, so no agent needs global knowledge of
//! the graph spectrum.
//!
//! The crate is split along the pipeline:
//!
//! - [`graph`]: topologies, Laplacians and their spectra.
//! - [`dynamics`]: agent models, including the single-link manipulator benchmark.
//! - [`synthesis`]: feedback gains from a Riccati route (linear) and a
//!   semidefinite feasibility solve (Lipschitz).
//! - [`protocol`]: the static, adaptive and leader-follower control laws.
//! - [`sim`]: fixed-step closed-loop integration and convergence metrics.
//! - [`io`] and [`plot`]: CSV/JSON documents and SVG charts.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod plot;
pub mod protocol;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
