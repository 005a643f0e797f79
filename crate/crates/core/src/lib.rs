//! Probabilistic scaling of simple approximating sets (SAS) for
//! chance-constrained linear inequalities, and an offline-sampling
//! stochastic MPC pipeline that uses the scaled sets as low-complexity
//! online constraints.
//!
//! Module map:
//!
//! - [`optim`]: dense LP (dual revised simplex) and convex QP (primal-dual
//!   interior point with active-set polish).
//! - [`uncertainty`]: distributions, counter-based sample streams and
//!   uncertain constraint systems `F(q) ξ ≤ g(q)`.
//! - [`polytope`]: H-representation geometry.
//! - [`sas`]: sampled-poly, ℓ1-poly and ℓ∞-poly candidate sets.
//! - [`scaling`]: sample-size bounds, the scaling procedure and empirical
//!   violation estimates.
//! - [`smpc`]: prediction, cost and constraint construction, OS/PS builders
//!   and closed-loop simulation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod optim;
pub mod polytope;
pub mod sas;
pub mod scaling;
pub mod smpc;
pub mod uncertainty;

pub use error::{Error, Result};
