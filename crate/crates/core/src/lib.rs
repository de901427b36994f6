//! Numerics for bubble towers of the perturbed fractional critical equation
//! `(-Δ)^s u = K(y) u^{2*_s - 1 ± ε}` in R^N.
//!
//! The crate builds the polygonal tower ansatz, evaluates the fractional
//! Laplacian by singular-integral quadrature and through the half-space
//! extension, measures the weighted residual norms, evaluates the local
//! Pohozaev identities and solves the reduced finite-dimensional system.

pub mod bubble;
pub mod error;
pub mod extension;
pub mod fractional;
pub mod norms;
pub mod pohozaev;
pub mod quadrature;
pub mod reduced;
pub mod residual;
pub mod special;
pub mod weight;

pub use bubble::{
    admissible_s_window, bubble_constant, bubble_gradient, bubble_value, tower_centers, tower_value, z_derivative,
    Bubble, Direction, ExponentSign, ProblemParams, TowerConfig,
};
pub use error::{Error, Result};
