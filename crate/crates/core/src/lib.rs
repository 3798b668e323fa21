//! Reduced basis methods for affinely parameterized elliptic problems, trained
//! with a parallel weak batch greedy algorithm.
//!
//! The crate is organized bottom-up:
//!
//! - [`fem`]: the full-order thermal block model (P1 finite elements).
//! - [`rb`]: X-orthonormal reduced bases and Galerkin-reduced models.
//! - [`estimator`]: residual-based a posteriori error bounds with an
//!   offline/online split.
//! - [`greedy`]: strong, weak and weak batch greedy basis construction.
//! - [`theory`]: width surrogates and empirical checks of the convergence
//!   bounds for batch greedy algorithms.
//! - [`bench`]: experiment driver, timing and CSV reporting.
//!
//! ```
//! use rbgreedy::fem::{thermal_block, ParameterPoint, solve_fom};
//!
//! let system = thermal_block(8, 8, 2, 2, 1.0).unwrap();
//! let snapshot = solve_fom(&system, &ParameterPoint::new(vec![0.1, 1.0, 0.5, 0.3])).unwrap();
//! assert_eq!(snapshot.coefficients.len(), 49);
//! ```

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod bench;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod greedy;
pub mod pool;
pub mod rb;
pub mod theory;

pub use error::{Error, Result};
