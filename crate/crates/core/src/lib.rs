//! Finite element (P1) space discretization and linear implicit Euler time
//! stepping for semilinear parabolic SPDEs
//!
//! ```text
//! dX + A X dt = F(X) dt + B(X) dW,   A u = -div(D grad u) + q . grad u
//! ```
//!
//! on rectangles, driven by a Q-Wiener process with a cosine eigenbasis, plus a
//! Monte Carlo harness measuring strong convergence orders in time.
//!
//! The pieces, bottom up:
//!
//! * [`mesh`]: structured triangulations with boundary tags.
//! * [`linalg`]: CSR matrices, BiCGStab / CG / dense LU.
//! * [`assembly`]: mass, stiffness, advection and Robin operators, loads,
//!   L2 projection and Dirichlet lifting.
//! * [`noise`]: truncated spectral Q-Wiener sampling with dyadically coupled
//!   increments.
//! * [`darcy`]: steady Darcy pressure and velocity for the advection field.
//! * [`stepper`]: the linear implicit Euler scheme.
//! * [`convergence`]: strong error estimation and order fitting.
//! * [`heat`]: deterministic heat benchmark against the exact solution.

pub mod assembly;
pub mod convergence;
pub mod darcy;
mod error;
pub mod heat;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod rng;
pub mod stepper;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
