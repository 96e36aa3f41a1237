//! Galerkin matrices for piecewise constant boundary elements, right-hand
//! sides, and interior evaluation through the representation formula.
//!
//! All matrix entries are exact: the double time integrals over a pair of
//! elements reduce to four evaluations of a time primitive at the corner
//! lags (see [`crate::kernels`]). Pairs whose test element lies entirely
//! before the trial element are skipped (causal zero).

use crate::error::{Error, Result};
use crate::kernels::quadrature::{graded_panels, integrate_panels_doubling, GaussRule};
use crate::kernels::{
    corner_sum, fundamental_solution, primitive_i0, primitive_i1, primitive_j0, primitive_j1, KernelParams,
    SpaceTimeSeparation,
};
use crate::mesh::{BoundaryElement, BoundaryMesh, Interval, Side};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Sign of the hypersingular matrix; positive definiteness of the
/// symmetric part holds with `+1`.
pub const HYPERSINGULAR_SIGN: f64 = 1.0;

pub type InitialDatum = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DirichletDatum = Arc<dyn Fn(Side, f64) -> f64 + Send + Sync>;

/// Model problem `alpha u_t - u_xx = 0` in `(a, b) x (0, T)`,
/// `u = g` on the lateral boundary, `u(., 0) = u0`.
///
/// `None` data are identically zero and skip the corresponding assembly work.
#[derive(Clone)]
pub struct Problem {
    pub params: KernelParams,
    pub interval: Interval,
    pub horizon: f64,
    pub dirichlet: Option<DirichletDatum>,
    pub initial: Option<InitialDatum>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("params", &self.params)
            .field("interval", &self.interval)
            .field("horizon", &self.horizon)
            .field("dirichlet", &self.dirichlet.as_ref().map(|_| "<fn>"))
            .field("initial", &self.initial.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl Problem {
    pub fn new(
        params: KernelParams,
        interval: Interval,
        horizon: f64,
        dirichlet: Option<DirichletDatum>,
        initial: Option<InitialDatum>,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let p = Self {
            params,
            interval,
            horizon,
            dirichlet,
            initial,
        };
        for side in Side::BOTH {
            let (u, g) = (p.initial_value(interval.position(side)), p.dirichlet_value(side, 0.0));
            if (u - g).abs() > 1e-8 * (1.0 + u.abs().max(g.abs())) {
                log::warn!(
                    "incompatible data at x = {}: u0 = {u}, g(., 0) = {g}",
                    interval.position(side)
                );
            }
        }
        Ok(p)
    }

    /// Homogeneous Dirichlet data with initial datum `u0`.
    pub fn with_initial(
        params: KernelParams,
        interval: Interval,
        horizon: f64,
        u0: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(params, interval, horizon, None, Some(Arc::new(u0)))
    }

    pub fn initial_value(&self, x: f64) -> f64 {
        self.initial.as_ref().map_or(0.0, |f| f(x))
    }

    pub fn dirichlet_value(&self, side: Side, t: f64) -> f64 {
        self.dirichlet.as_ref().map_or(0.0, |g| g(side, t))
    }

    fn check_mesh(&self, mesh: &BoundaryMesh) -> Result<()> {
        if mesh.interval() != self.interval || (mesh.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::InvalidMesh(format!(
                "mesh covers ({}, {}) x (0, {}) but the problem lives on ({}, {}) x (0, {})",
                mesh.interval().a,
                mesh.interval().b,
                mesh.horizon(),
                self.interval.a,
                self.interval.b,
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Quadrature settings for moments against the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Ratio of consecutive panel lengths toward the graded point.
    pub grading_ratio: f64,
    pub grading_levels: usize,
    /// Initial Gauss order per panel; doubled until the moment stabilises.
    pub start_order: usize,
    pub max_order: usize,
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            grading_ratio: 0.15,
            grading_levels: 14,
            start_order: 8,
            max_order: 128,
            tol: 1e-12,
        }
    }
}

/// Piecewise constant approximation of the Neumann trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFlux {
    mesh: BoundaryMesh,
    coefficients: Vector,
}

impl DiscreteFlux {
    pub fn new(mesh: BoundaryMesh, coefficients: Vector) -> Result<Self> {
        if coefficients.len() != mesh.len() {
            return Err(Error::DimensionMismatch {
                expected: mesh.len(),
                actual: coefficients.len(),
            });
        }
        Ok(Self { mesh, coefficients })
    }

    pub fn zero(mesh: BoundaryMesh) -> Self {
        let n = mesh.len();
        Self {
            mesh,
            coefficients: Vector::zeros(n),
        }
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.mesh
    }

    pub fn coefficients(&self) -> &Vector {
        &self.coefficients
    }

    /// Value on `side` at time `t` (the left element wins at shared nodes).
    pub fn value_at(&self, side: Side, t: f64) -> Option<f64> {
        self.mesh
            .elements()
            .find(|e| e.side == side && t >= e.t_begin && t <= e.t_end)
            .map(|e| self.coefficients[e.index])
    }
}

fn assemble_dense(
    mesh: &BoundaryMesh,
    entry: impl Fn(&BoundaryElement, &BoundaryElement) -> f64 + Sync,
) -> Matrix {
    let els: Vec<BoundaryElement> = mesh.elements().collect();
    let n = els.len();
    let mut data = vec![0.0; n * n];
    // column-major: chunk k holds column k (trial element k)
    data.par_chunks_mut(n).enumerate().for_each(|(k, col)| {
        let trial = &els[k];
        for (test, v) in els.iter().zip(col.iter_mut()) {
            if test.t_end <= trial.t_begin {
                continue;
            }
            *v = entry(test, trial);
        }
    });
    Matrix::from_vec(n, n, data)
}

/// Single layer matrix `V_h[l, k] = <V phi_k, phi_l>`.
pub fn assemble_v(mesh: &BoundaryMesh, p: KernelParams) -> Matrix {
    let inv_alpha = 1.0 / p.alpha();
    assemble_dense(mesh, |test, trial| {
        let d = test.x - trial.x;
        inv_alpha * corner_sum(|tau| primitive_j0(d, tau, p), test.times(), trial.times())
    })
}

/// Double layer matrix with kernel `(1/alpha) dU*/dn_y`.
pub fn assemble_k(mesh: &BoundaryMesh, p: KernelParams) -> Matrix {
    let inv_alpha = 1.0 / p.alpha();
    assemble_dense(mesh, |test, trial| {
        let d = test.x - trial.x;
        if d == 0.0 {
            return 0.0;
        }
        -inv_alpha * trial.normal() * corner_sum(|tau| primitive_j1(d, tau, p), test.times(), trial.times())
    })
}

/// Adjoint double layer matrix with kernel `(1/alpha) dU*/dn_x`.
///
/// With two boundary points `n_x (x - y) = n_y (y - x)`, so this coincides
/// with [`assemble_k`] entry for entry.
pub fn assemble_adjoint_double_layer(mesh: &BoundaryMesh, p: KernelParams) -> Matrix {
    let inv_alpha = 1.0 / p.alpha();
    assemble_dense(mesh, |test, trial| {
        let d = test.x - trial.x;
        if d == 0.0 {
            return 0.0;
        }
        inv_alpha * test.normal() * corner_sum(|tau| primitive_j1(d, tau, p), test.times(), trial.times())
    })
}

/// Hypersingular matrix.
///
/// `d^2 U*/dd^2 = alpha dU*/dtau`, so integrating the kernel over the test
/// element in time leaves endpoint differences of `U*`, and the remaining
/// trial integral is a difference of `I0`.
pub fn assemble_d(mesh: &BoundaryMesh, p: KernelParams) -> Matrix {
    assemble_dense(mesh, |test, trial| {
        let d = test.x - trial.x;
        HYPERSINGULAR_SIGN
            * test.normal()
            * trial.normal()
            * corner_sum(|tau| primitive_i0(d, tau, p), test.times(), trial.times())
    })
}

/// Diagonal of the mass matrix `<phi_k, phi_l>`, i.e. the element sizes.
pub fn assemble_mass(mesh: &BoundaryMesh) -> Vector {
    Vector::from_iterator(mesh.len(), mesh.elements().map(|e| e.size()))
}

/// All boundary element matrices of one mesh.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    pub mesh: BoundaryMesh,
    pub params: KernelParams,
    pub v: Matrix,
    pub k: Matrix,
    pub d: Matrix,
    pub mass: Vector,
}

impl OperatorMatrices {
    pub fn assemble(mesh: &BoundaryMesh, params: KernelParams) -> Self {
        Self {
            mesh: mesh.clone(),
            params,
            v: assemble_v(mesh, params),
            k: assemble_k(mesh, params),
            d: assemble_d(mesh, params),
            mass: assemble_mass(mesh),
        }
    }

    /// `K'_h`; equal to `K_h` in one space dimension.
    pub fn adjoint_double_layer(&self) -> Matrix {
        assemble_adjoint_double_layer(&self.mesh, self.params)
    }
}

/// Element means of the Dirichlet datum (its `L2` projection onto piecewise constants).
pub fn project_dirichlet(mesh: &BoundaryMesh, prob: &Problem) -> Vector {
    let Some(g) = prob.dirichlet.as_ref() else {
        return Vector::zeros(mesh.len());
    };
    let rule = GaussRule::new(16);
    Vector::from_iterator(
        mesh.len(),
        mesh.elements()
            .map(|e| rule.integrate(|t| g(e.side, t), e.t_begin, e.t_end) / e.size()),
    )
}

/// `int_a^b u0(y) F(x_l - y) dy` for each element, with panels graded toward
/// the element's side.
fn initial_moments(
    mesh: &BoundaryMesh,
    prob: &Problem,
    quad: &QuadratureConfig,
    kernel: impl Fn(&BoundaryElement, f64) -> f64 + Sync,
) -> Result<Vector> {
    let Some(u0) = prob.initial.as_ref() else {
        return Ok(Vector::zeros(mesh.len()));
    };
    let Interval { a, b } = prob.interval;
    let els: Vec<BoundaryElement> = mesh.elements().collect();
    let values: Result<Vec<f64>> = els
        .par_iter()
        .map(|e| {
            let panels = graded_panels(a, b, e.side == Side::Left, quad.grading_ratio, quad.grading_levels);
            let f = |y: f64| u0(y) * kernel(e, y);
            integrate_panels_doubling(&f, &panels, quad.start_order, quad.max_order, quad.tol)
                .map_err(|err| err.with_context(format!("initial datum moment on element {}", e.index)))
        })
        .collect();
    Ok(Vector::from_vec(values?))
}

/// Moments `<M0 u0, phi_l>` of the initial potential.
pub fn initial_potential_moments(mesh: &BoundaryMesh, prob: &Problem, quad: &QuadratureConfig) -> Result<Vector> {
    prob.check_mesh(mesh)?;
    let p = prob.params;
    initial_moments(mesh, prob, quad, |e, y| {
        let d = e.x - y;
        primitive_i0(d, e.t_end, p) - primitive_i0(d, e.t_begin, p)
    })
}

/// Moments `<M1 u0, phi_l>` of the Neumann trace of the initial potential.
pub fn initial_neumann_moments(mesh: &BoundaryMesh, prob: &Problem, quad: &QuadratureConfig) -> Result<Vector> {
    prob.check_mesh(mesh)?;
    let p = prob.params;
    initial_moments(mesh, prob, quad, |e, y| {
        let d = e.x - y;
        e.normal() * (primitive_i1(d, e.t_end, p) - primitive_i1(d, e.t_begin, p))
    })
}

/// Right-hand side `f[l] = <(1/2 I + K) g, phi_l> - <M0 u0, phi_l>`.
///
/// The Dirichlet datum enters through its element means, which is exact for
/// piecewise constant `g`.
pub fn assemble_rhs(mesh: &BoundaryMesh, prob: &Problem, quad: &QuadratureConfig) -> Result<Vector> {
    let mut f = -initial_potential_moments(mesh, prob, quad)?;
    if prob.dirichlet.is_some() {
        let g = project_dirichlet(mesh, prob);
        let mass = assemble_mass(mesh);
        f += assemble_k(mesh, prob.params) * &g + 0.5 * mass.component_mul(&g);
    }
    Ok(f)
}

/// Initial potential `(M0 u0)(x, t)` at an interior point.
pub fn initial_potential(x: f64, t: f64, prob: &Problem, quad: &QuadratureConfig) -> Result<f64> {
    let Some(u0) = prob.initial.as_ref() else {
        return Ok(0.0);
    };
    let Interval { a, b } = prob.interval;
    let p = prob.params;
    let f = |y: f64| u0(y) * fundamental_solution(SpaceTimeSeparation::new(x - y, t), p);
    let mut panels = graded_panels(a, x, false, quad.grading_ratio, quad.grading_levels);
    panels.extend(graded_panels(x, b, true, quad.grading_ratio, quad.grading_levels));
    integrate_panels_doubling(&f, &panels, quad.start_order, quad.max_order, quad.tol)
        .map_err(|e| e.with_context(format!("initial potential at ({x}, {t})")))
}

/// Representation formula
/// `u = M0 u0 + (1/alpha) int U* w - (1/alpha) int dU*/dn_y g` at `(x, t)`.
pub fn evaluate_interior(x: f64, t: f64, w: &DiscreteFlux, prob: &Problem, quad: &QuadratureConfig) -> Result<f64> {
    let mesh = w.mesh();
    prob.check_mesh(mesh)?;
    if !prob.interval.contains(x) {
        return Err(Error::InvalidParameter(format!(
            "x = {x} lies outside ({}, {})",
            prob.interval.a, prob.interval.b
        )));
    }
    if !(t > 0.0 && t <= prob.horizon) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} lies outside (0, {}]",
            prob.horizon
        )));
    }
    let p = prob.params;
    let inv_alpha = 1.0 / p.alpha();
    let mut u = initial_potential(x, t, prob, quad)?;
    let coeffs = w.coefficients();
    let g = project_dirichlet(mesh, prob);
    for e in mesh.elements().filter(|e| e.t_begin < t) {
        let d = x - e.x;
        let single = primitive_i0(d, t - e.t_begin, p) - primitive_i0(d, t - e.t_end, p);
        u += inv_alpha * coeffs[e.index] * single;
        if g[e.index] != 0.0 {
            let double = primitive_i1(d, t - e.t_begin, p) - primitive_i1(d, t - e.t_end, p);
            u += inv_alpha * g[e.index] * e.normal() * double;
        }
    }
    Ok(u)
}

/// Galerkin residual of the second boundary integral equation
/// `w = M1 u0 + (1/2 I + K') w + D g`, tested with every basis function.
pub fn assemble_second_bie_residual(
    mesh: &BoundaryMesh,
    prob: &Problem,
    w: &DiscreteFlux,
    quad: &QuadratureConfig,
) -> Result<Vector> {
    if w.mesh() != mesh {
        return Err(Error::InvalidMesh("flux lives on a different mesh".into()));
    }
    let p = prob.params;
    let mass = assemble_mass(mesh);
    let wh = w.coefficients();
    let mut r = 0.5 * mass.component_mul(wh) - assemble_adjoint_double_layer(mesh, p) * wh;
    r -= initial_neumann_moments(mesh, prob, quad)?;
    if prob.dirichlet.is_some() {
        r -= assemble_d(mesh, p) * project_dirichlet(mesh, prob);
    }
    Ok(r)
}

/// `L2` norm of the piecewise constant Riesz representative of a moment
/// vector, `sqrt(sum r_l^2 / h_l)`.
pub fn mass_weighted_norm(mesh: &BoundaryMesh, r: &Vector) -> f64 {
    mesh.elements()
        .map(|e| r[e.index] * r[e.index] / e.size())
        .sum::<f64>()
        .sqrt()
}
