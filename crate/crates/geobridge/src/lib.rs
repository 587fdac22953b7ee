//! geobridge: a numerical laboratory for bridge problems on
//! coordinate-chart manifolds.
//!
//! The library solves two equivalent two-point problems on a manifold
//! `(M, g)` with potential `V`:
//!
//! * the optimal-control form: minimize `∫ |b|^2/2 dt` subject to
//!   `q' = b - ∇V(q)`, `q(0) = y`, `q(1) = z`;
//! * the Lagrangian-mechanics form: minimize
//!   `∫ |v|^2/2 + |∇V(q)|^2/2 dt` subject to `q' = v`.
//!
//! When the metric and potential satisfy two coordinate-constancy
//! assumptions, a change of variables uncouples the Euler-Lagrange system
//! into a backward and a forward gradient flow of `V` — the geometric
//! counterpart of the Hopf-Cole transformation that turns the entropic
//! optimal-transport optimality system into two heat equations. The
//! [`grid`] module runs that classical picture on a 1-D periodic grid
//! (heat semigroup, Sinkhorn iteration, entropic interpolation) so the two
//! settings can be cross-checked numerically.
//!
//! See the `book/` guide for the narrative walk-through; every snippet
//! there is compiled and run as a doc-test of this crate.
//!
//! ```
//! use geobridge::{bvp, geometry::registry};
//! use nalgebra::{dvector, DMatrix};
//!
//! // harmonic potential V = q^2/2 on the line, bridge from 1 to 2
//! let m = registry::euclidean_quadratic(1, Some(DMatrix::identity(1, 1)));
//! let spec = bvp::BridgeSpec::new(m, dvector![1.0], dvector![2.0], 400);
//! let sol = bvp::solve_shooting(&spec).unwrap();
//! assert!(sol.converged);
//! assert!((sol.phi0[0] - 1.388800).abs() < 1e-5);
//! ```

pub mod bvp;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hopfcole;
pub mod optim;
pub mod output;
pub mod scenario;

pub use error::{GeoError, Result};

// The guide chapters and the README double as doc-tests so their code
// blocks can never drift out of sync with the library.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/bvp.md")]
    mod bvp {}
    #[doc = include_str!("../../../book/src/hopfcole.md")]
    mod hopfcole {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
