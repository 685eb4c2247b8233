//! Exact off-diagonal solutions of four-dimensional gravitational field
//! equations, organized around a nonholonomic 2+2 splitting of spacetime.
//!
//! Coordinates are grouped as u = (x¹, x², v, y⁴): two "horizontal" and two
//! "vertical" directions, glued by a nonlinear connection N = (wᵢ, nᵢ).  The
//! frame eᵢ = ∂ᵢ − wᵢ∂ᵥ − nᵢ∂₄ diagonalizes a large off-diagonal metric
//! ansatz, and for metrics of the form
//!
//! ```text
//! g = ε₁ e^ψ dx¹⊗dx¹ + ε₂ e^ψ dx²⊗dx² + h₃ δv⊗δv + h₄ δy⁴⊗δy⁴,
//! δv = dv + wᵢ dxⁱ,   δy⁴ = dy⁴ + nᵢ dxⁱ,
//! ```
//!
//! the field equations with a diagonal source (Υ₂, Υ₂, Υ₄, Υ₄) collapse to a
//! chain of one-dimensional problems that can be integrated in closed form
//! from a generating function f(xⁱ, v).  This crate implements that
//! generator, the residuals that certify a candidate metric, an independent
//! coordinate-basis Levi-Civita check, a catalog of named solution families
//! (Schwarzschild pullbacks, noncommutative corrections, rotoid deformations,
//! solitonic backgrounds), Moyal-type star deformations of vielbeins, and
//! the Finsler-geometry side of the construction.
//!
//! Modules:
//!
//! * [`fields`] — symbolic scalar fields on the chart (x¹, x², v, y⁴) with
//!   exact high-order derivatives (truncated Taylor arithmetic), a small
//!   expression language, quadrature, and a finite-difference fallback.
//! * [`dgeometry`] — N-connections, distinguished metrics, anholonomy
//!   coefficients, and the Levi-Civita curvature of a generic 4×4 metric.
//! * [`solution`] — the generating-data pipeline, PDE residuals, the
//!   Levi-Civita constraint set, and grid verification reports.
//! * [`catalog`] — named families from the literature wired into the
//!   generator.
//! * [`starprod`] — formal power series in a deformation parameter θ and
//!   star-deformed frames/metrics.
//! * [`finsler`] — Finsler Hessians, canonical N-connections, Sasaki lifts,
//!   and the extraction of Finsler data from a star-deformed metric.

pub mod catalog;
pub mod dgeometry;
pub mod error;
pub mod fields;
pub mod finsler;
pub mod report;
pub mod solution;
pub mod starprod;

pub use error::{Error, Result};
