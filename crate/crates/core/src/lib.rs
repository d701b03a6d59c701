//! Catching-up time stepping for perturbed sweeping processes
//!
//! ```text
//!   -x'(t) ∈ N_{C(t)}(x(t)) + g(t, x(t)),   x(0) = x0,
//!   C(t) = { x : f_i(t, x) <= 0, i = 1..m }
//! ```
//!
//! where the moving set `C(t)` is a sublevel set of piecewise-affine or
//! quadratic constraint functions. The crate is organised as
//!
//! * [`constraints`]: constraint families, exact Clarke subdifferentials and
//!   sampled certification of the prox-regularity hypotheses (A1-A4);
//! * [`geometry`]: projection, distance, proximal-normal residuals and
//!   Hausdorff-modulus checks on slices `C(t)`;
//! * [`solver`]: the catching-up scheme and the a priori velocity bound;
//! * [`oracles`]: closed-form trajectories of the corner-frame examples;
//! * [`verify`]: inclusion residuals, convergence studies, reachability;
//! * [`cli`]: scenario files and the `sweepsim` command implementations.

pub mod catalog;
pub mod cli;
pub mod constraints;
pub mod geometry;
pub mod oracles;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod verify;

/// State vector in `R^n`.
pub type Point = nalgebra::DVector<f64>;

/// Builds a [`Point`] from a slice.
pub fn point(coords: &[f64]) -> Point {
    Point::from_column_slice(coords)
}
