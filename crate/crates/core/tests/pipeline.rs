mod common;

use approx::assert_relative_eq;
use common::{oracle_d, oracle_k, oracle_v};
use heatbem::analysis::{l2_error, DEFAULT_ERROR_ORDER};
use heatbem::galerkin::{
    assemble_rhs, evaluate_interior, initial_neumann_moments, DiscreteFlux, OperatorMatrices, Problem,
    QuadratureConfig,
};
use heatbem::kernels::{fundamental_solution, kernel_d, oracle_quadrature, KernelParams, SpaceTimeSeparation};
use heatbem::krylov::{direct_solve, gmres, GmresConfig, Preconditioner};
use heatbem::mesh::uniform_mesh;
use heatbem::reference::{Example, SineSeries};
use heatbem::{BoundaryMesh, Interval, Side};
use std::f64::consts::PI;

fn example1(alpha: f64) -> Problem {
    Problem::with_initial(KernelParams::new(alpha).unwrap(), Interval::unit(), 1.0, |x| {
        (2.0 * PI * x).sin()
    })
    .unwrap()
}

fn nested(f: impl Fn(f64, f64) -> f64, tol: f64) -> f64 {
    oracle_quadrature(
        |t| oracle_quadrature(|y| f(y, t), 0.0, 1.0, tol * 1e-2).unwrap(),
        0.0,
        1.0,
        tol,
    )
    .unwrap()
}

#[test]
fn rhs_matches_nested_quadrature_on_coarsest_mesh() {
    let p = KernelParams::new(1.0).unwrap();
    let prob = example1(1.0);
    let mesh = uniform_mesh(1.0, 0).unwrap();
    let f = assemble_rhs(&mesh, &prob, &QuadratureConfig::default()).unwrap();
    for side in Side::BOTH {
        let x = Interval::unit().position(side);
        let oracle = -nested(
            |y, t| fundamental_solution(SpaceTimeSeparation::new(x - y, t), p) * (2.0 * PI * y).sin(),
            1e-11,
        );
        let idx = if side == Side::Left { 0 } else { 1 };
        assert!((f[idx] - oracle).abs() < 1e-8, "{side:?}: {} vs {oracle}", f[idx]);
    }
}

#[test]
fn neumann_moments_match_nested_quadrature() {
    let p = KernelParams::new(2.0).unwrap();
    let prob = example1(2.0);
    let mesh = uniform_mesh(1.0, 0).unwrap();
    let m1 = initial_neumann_moments(&mesh, &prob, &QuadratureConfig::default()).unwrap();
    for e in mesh.elements() {
        let oracle = e.normal()
            * nested(
                |y, t| kernel_d(SpaceTimeSeparation::new(e.x - y, t), p) * (2.0 * PI * y).sin(),
                1e-11,
            );
        assert!((m1[e.index] - oracle).abs() < 1e-8, "{} vs {oracle}", m1[e.index]);
    }
}

#[test]
fn oracle_entries_on_a_stretched_mesh() {
    let mesh = BoundaryMesh::from_nodes(
        Interval::new(-0.5, 1.5).unwrap(),
        2.0,
        vec![0.0, 0.01, 0.1, 0.7, 2.0],
        vec![0.0, 1.3, 1.31, 2.0],
    )
    .unwrap();
    let p = KernelParams::new(0.7).unwrap();
    let ops = OperatorMatrices::assemble(&mesh, p);
    for test in mesh.elements() {
        for trial in mesh.elements() {
            let (l, k) = (test.index, trial.index);
            assert!((ops.v[(l, k)] - oracle_v(&test, &trial, p)).abs() < 1e-10);
            assert!((ops.k[(l, k)] - oracle_k(&test, &trial, p)).abs() < 1e-10);
            assert!((ops.d[(l, k)] - oracle_d(&test, &trial, p)).abs() < 1e-10);
        }
    }
}

#[test]
fn gmres_and_lu_agree_on_example1() {
    let prob = example1(1.0);
    let mesh = uniform_mesh(1.0, 4).unwrap();
    let ops = OperatorMatrices::assemble(&mesh, prob.params);
    let f = assemble_rhs(&mesh, &prob, &QuadratureConfig::default()).unwrap();
    let x = direct_solve(&ops.v, &f).unwrap();
    let series = SineSeries::example1(1.0).unwrap();
    let e_direct = l2_error(&DiscreteFlux::new(mesh.clone(), x.clone()).unwrap(), &series, DEFAULT_ERROR_ORDER);
    let cfg = GmresConfig {
        tol: 1e-8,
        max_iter: 200,
    };
    for p in [
        Preconditioner::Identity,
        Preconditioner::diagonal(&ops.v).unwrap(),
        Preconditioner::calderon(&ops.mass, ops.d.clone()).unwrap(),
    ] {
        let rep = gmres(&ops.v, &f, &cfg, &p).unwrap();
        assert!(rep.converged);
        assert!((&rep.solution - &x).amax() <= 1e-7, "{:?}", p.kind());
        let e = l2_error(&DiscreteFlux::new(mesh.clone(), rep.solution).unwrap(), &series, DEFAULT_ERROR_ORDER);
        assert_relative_eq!(e, e_direct, max_relative = 1e-5);
    }
}

#[test]
fn coarsest_system_needs_one_iteration() {
    let prob = example1(1.0);
    let mesh = uniform_mesh(1.0, 0).unwrap();
    let ops = OperatorMatrices::assemble(&mesh, prob.params);
    let f = assemble_rhs(&mesh, &prob, &QuadratureConfig::default()).unwrap();
    let rep = gmres(&ops.v, &f, &GmresConfig::default(), &Preconditioner::Identity).unwrap();
    assert_eq!(rep.iterations, 1);
}

#[test]
fn interior_values_converge_to_series() {
    let prob = example1(1.0);
    let series = SineSeries::example1(1.0).unwrap();
    let quad = QuadratureConfig::default();
    let mut errors = Vec::new();
    for level in [5, 7] {
        let mesh = uniform_mesh(1.0, level).unwrap();
        let ops = OperatorMatrices::assemble(&mesh, prob.params);
        let f = assemble_rhs(&mesh, &prob, &quad).unwrap();
        let w = DiscreteFlux::new(mesh, direct_solve(&ops.v, &f).unwrap()).unwrap();
        let u = evaluate_interior(0.25, 0.1, &w, &prob, &quad).unwrap();
        errors.push((u - series.interior(0.25, 0.1)).abs());
        let mid = evaluate_interior(0.5, 0.5, &w, &prob, &quad).unwrap();
        assert!(mid.abs() < 1e-10);
    }
    assert!(errors[1] < 1e-2);
    assert!(errors[1] < errors[0]);
}

#[test]
fn example2_reference_flux_is_consistent_with_initial_datum() {
    // the flux at small times approaches -u0'(0) on the left and u0'(1) on the right
    let s = SineSeries::example2(1.0, 50_000).unwrap();
    let t = 1e-7;
    assert_relative_eq!(s.flux(Side::Left, t), -5.0 * PI, max_relative = 1e-2);
    let right = 5.0 * (-10.0f64).exp() * PI * (PI).cos();
    assert!((s.flux(Side::Right, t) - right).abs() < 1e-2);
    assert_eq!(Example::Two.initial_value(0.0), 0.0);
}
