//! Numerical laboratory for stochastic porous-media flow with Robin
//! boundary conditions, gravity-driven transport and multiplicative noise.
//!
//! The state `X` solves `dX - ΔΨ(X) dt + K ∂X/∂x_d dt = Σ(X) dW` on a box
//! whose top face receives a prescribed flux and whose other faces leak
//! through a Robin condition. The crate discretises the weak form on a node
//! grid, builds the doubly regularised operator `A_λ^{μ,ε}` and its
//! resolvent, and integrates in time with Euler-Maruyama steps.

pub mod banded;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod noise;
pub mod porous_operator;
pub mod robin_laplace;
pub mod sde_solver;
pub mod stats;

pub use error::{Error, Result};
