//! Mean-square stability analysis for perturbed scalar linear stochastic
//! functional differential equations
//!
//! ```text
//! dX(t) = (f(t) + ∫ X(t+s) ν(ds)) dt + (g(t) + ∫ X(t+s) μ(ds)) dB(t),   X = ψ on [-τ, 0].
//! ```
//!
//! The mean square `E[X²]` satisfies a pair of deterministic Volterra
//! equations driven by the resolvent `r` of the drift. This crate computes
//! the resolvent, the diffusion kernel `G(r_t)` and its renewal resolvent,
//! solves the mean-square equations, evaluates the stability conditions on
//! `(r, G, f, g)`, and cross-checks everything against an Euler–Maruyama
//! Monte Carlo simulation.

pub mod error;
pub mod grid;
pub mod kernels;
pub mod measures;
pub mod montecarlo;
pub mod par;
pub mod perturb;
pub mod quadrature;
pub mod resolvent;
pub mod volterra_ms;

pub use error::{Error, Result};
pub use grid::{Extension, FunctionTable, Grid};
pub use measures::{Atom, DensityPiece, FiniteSignedMeasure};
pub use par::Execution;
