//! Nested adaptive quadrature oracles for Galerkin entries.
//!
//! Only pointwise kernels are used here; the closed-form time primitives
//! are never called.

#![allow(dead_code)]

use heatbem::galerkin::HYPERSINGULAR_SIGN;
use heatbem::kernels::quadrature::oracle_quadrature_with_breaks;
use heatbem::kernels::{fundamental_solution, kernel_d, kernel_dt, oracle_quadrature, KernelParams, SpaceTimeSeparation};
use heatbem::BoundaryElement;

pub const INNER_TOL: f64 = 1e-13;
pub const OUTER_TOL: f64 = 1e-12;

/// `int_{s1}^{min(t, s2)} g(d, t - s) ds` with `s = t - u^2`, which removes
/// the `tau^{-1/2}` singularity of the kernel at `s = t`.
pub fn lag_integral(g: &dyn Fn(f64, f64) -> f64, d: f64, t: f64, (s1, s2): (f64, f64)) -> f64 {
    if t <= s1 {
        return 0.0;
    }
    let u_lo = (t - s2).max(0.0).sqrt();
    let u_hi = (t - s1).sqrt();
    oracle_quadrature(|u| g(d, u * u) * 2.0 * u, u_lo, u_hi, INNER_TOL).expect("inner oracle converges")
}

fn outer(g: &dyn Fn(f64, f64) -> f64, test: &BoundaryElement, trial: &BoundaryElement) -> f64 {
    let d = test.x - trial.x;
    let breaks = [trial.t_begin, trial.t_end];
    oracle_quadrature_with_breaks(
        |t| lag_integral(g, d, t, trial.times()),
        test.t_begin,
        test.t_end,
        &breaks,
        OUTER_TOL,
    )
    .expect("outer oracle converges")
}

pub fn oracle_v(test: &BoundaryElement, trial: &BoundaryElement, p: KernelParams) -> f64 {
    let g = |d: f64, tau: f64| fundamental_solution(SpaceTimeSeparation::new(d, tau), p);
    outer(&g, test, trial) / p.alpha()
}

/// Kernel `(1/alpha) n_y . grad_y U*(x - y)`.
pub fn oracle_k(test: &BoundaryElement, trial: &BoundaryElement, p: KernelParams) -> f64 {
    let g = |d: f64, tau: f64| kernel_d(SpaceTimeSeparation::new(d, tau), p);
    -trial.normal() * outer(&g, test, trial) / p.alpha()
}

/// `n_x n_y int int dU*/dtau`; for coincident points the test time
/// integral is taken first, leaving `U*` at the two test endpoints.
pub fn oracle_d(test: &BoundaryElement, trial: &BoundaryElement, p: KernelParams) -> f64 {
    let d = test.x - trial.x;
    let nn = HYPERSINGULAR_SIGN * test.normal() * trial.normal();
    if d == 0.0 {
        let u = |d: f64, tau: f64| fundamental_solution(SpaceTimeSeparation::new(d, tau), p);
        return nn * (lag_integral(&u, 0.0, test.t_end, trial.times()) - lag_integral(&u, 0.0, test.t_begin, trial.times()));
    }
    let g = |d: f64, tau: f64| kernel_dt(SpaceTimeSeparation::new(d, tau), p);
    nn * outer(&g, test, trial)
}
