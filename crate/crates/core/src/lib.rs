//! Space-time Galerkin boundary element solver for the heat equation
//! `alpha * u_t - u_xx = 0` on `(a, b) x (0, T)` with Dirichlet data.
//!
//! The unknown Neumann trace `w` on the lateral boundary is approximated by
//! piecewise constants on an arbitrary decomposition of each boundary
//! time-line. The single layer system `V_h w = f` is solved with GMRES,
//! optionally preconditioned by the Galerkin matrix of the hypersingular
//! operator, `C_V^{-1} = M_h^{-1} D_h M_h^{-1}`.
//!
//! Modules, bottom-up:
//!
//! - [`kernels`]: heat kernel, its derivatives, exact time-integrated
//!   primitives, `erfc`, and an adaptive quadrature used as a test oracle.
//! - [`mesh`]: boundary meshes, uniform and adaptive bisection.
//! - [`galerkin`]: matrix and right-hand side assembly, representation formula.
//! - [`reference`]: Fourier sine series reference solutions on `(0, 1)`.
//! - [`krylov`]: full GMRES with right preconditioning, dense LU.
//! - [`analysis`]: condition numbers, `L2` errors, convergence orders.
//! - [`study`]: the experiment driver behind the command line tool.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod galerkin;
pub mod kernels;
pub mod krylov;
pub mod mesh;
pub mod reference;
pub mod study;

pub use error::{Error, Result};
pub use kernels::{KernelParams, SpaceTimeSeparation};
pub use mesh::{BoundaryElement, BoundaryMesh, Interval, Side};
