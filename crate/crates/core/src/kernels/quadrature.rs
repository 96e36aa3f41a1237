//! Gauss-Legendre rules, a globally adaptive integrator used as the
//! verification oracle, and geometrically graded composite rules.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed Gauss-Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Quadrature points and weights on `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

const ORACLE_ORDER: usize = 12;
const ORACLE_MAX_INTERVALS: usize = 50_000;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn panel(rule: &GaussRule, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Panel {
    let m = 0.5 * (a + b);
    let coarse = rule.integrate(f, a, b);
    let fine = rule.integrate(f, a, m) + rule.integrate(f, m, b);
    Panel {
        a,
        b,
        value: fine,
        error: (fine - coarse).abs(),
    }
}

/// Globally adaptive Gauss-Legendre integration of `f` over `[a, b]`.
///
/// Each panel's error is estimated by comparing the rule on the panel with
/// the rule on its two halves; the worst panel is bisected until the summed
/// estimate drops below `tol / 4`. Integrable endpoint singularities of
/// type `s^{-1/2}` converge through repeated bisection, provided the
/// singular point is zero (shift the variable otherwise, since Gauss nodes
/// round onto a nonzero endpoint). Fails if the panel budget is exhausted.
pub fn oracle_quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    oracle_quadrature_with_breaks(f, a, b, &[], tol)
}

/// [`oracle_quadrature`] with initial subdivision at the interior `breaks`.
pub fn oracle_quadrature_with_breaks(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return oracle_quadrature_with_breaks(f, b, a, breaks, tol).map(|v| -v);
    }
    let rule = GaussRule::new(ORACLE_ORDER);
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap: BinaryHeap<Panel> = cuts.windows(2).map(|w| panel(&rule, &f, w[0], w[1])).collect();
    let mut finished: Vec<Panel> = Vec::new();
    let target = 0.25 * tol;

    loop {
        let total: f64 = heap.iter().chain(&finished).map(|p| p.error).sum();
        if total <= target {
            break;
        }
        if heap.len() + finished.len() >= ORACLE_MAX_INTERVALS {
            let estimate = heap.iter().chain(&finished).map(|p| p.value).sum();
            return Err(Error::Quadrature {
                a,
                b,
                estimate,
                tol,
                context: String::new(),
            });
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // cannot split further in floating point
            finished.push(worst);
            if heap.is_empty() {
                break;
            }
            continue;
        }
        heap.push(panel(&rule, &f, worst.a, m));
        heap.push(panel(&rule, &f, m, worst.b));
    }
    let total_error: f64 = heap.iter().chain(&finished).map(|p| p.error).sum();
    let value: f64 = heap.iter().chain(&finished).map(|p| p.value).sum();
    if total_error > tol {
        return Err(Error::Quadrature {
            a,
            b,
            estimate: value,
            tol,
            context: String::new(),
        });
    }
    Ok(value)
}

/// Panels on `[a, b]` geometrically graded toward one endpoint.
///
/// Breakpoints sit at distances `len * ratio^j`, `j = 1..levels`, from the
/// graded endpoint.
pub fn graded_panels(a: f64, b: f64, toward_a: bool, ratio: f64, levels: usize) -> Vec<(f64, f64)> {
    let len = b - a;
    let mut pts: Vec<f64> = (1..=levels).map(|j| len * ratio.powi(j as i32)).collect();
    pts.reverse();
    let mut cuts = Vec::with_capacity(levels + 2);
    cuts.push(0.0);
    cuts.extend(pts);
    cuts.push(len);
    let mut panels: Vec<(f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            if toward_a {
                (a + w[0], a + w[1])
            } else {
                (b - w[1], b - w[0])
            }
        })
        .collect();
    if !toward_a {
        panels.reverse();
    }
    panels
}

/// Integrates `f` over `panels` with Gauss rules of increasing order
/// (`start_order`, doubled each pass) until two consecutive passes agree to
/// `tol` absolute (relative when the value exceeds one).
pub fn integrate_panels_doubling(
    f: &impl Fn(f64) -> f64,
    panels: &[(f64, f64)],
    start_order: usize,
    max_order: usize,
    tol: f64,
) -> Result<f64> {
    let sum_with = |order: usize| {
        let rule = GaussRule::new(order);
        panels.iter().map(|&(a, b)| rule.integrate(f, a, b)).sum::<f64>()
    };
    let mut order = start_order.max(1);
    let mut prev = sum_with(order);
    while order < max_order {
        order *= 2;
        let next = sum_with(order);
        if (next - prev).abs() <= tol * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    let (a, b) = (
        panels.first().map_or(0.0, |p| p.0),
        panels.last().map_or(0.0, |p| p.1),
    );
    Err(Error::Quadrature {
        a,
        b,
        estimate: prev,
        tol,
        context: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for n in 1..=40 {
            let rule = GaussRule::new(n);
            let total: f64 = rule.points(-1.0, 1.0).map(|(_, w)| w).sum();
            assert_relative_eq!(total, 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let v = rule.integrate(|x| x.powi(deg as i32) + x.powi((deg - 1) as i32), 0.0, 1.0);
            assert_relative_eq!(v, 1.0 / (deg + 1) as f64 + 1.0 / deg as f64, epsilon = 1e-13);
        }
    }

    #[test]
    fn oracle_basic_integrals() {
        let v = oracle_quadrature(|_| 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        let v = oracle_quadrature(|s| s.powf(-0.5), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() <= 1e-10, "{v}");
        let v = oracle_quadrature(|s| (-s).powf(-0.5), -1.0, 0.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() <= 1e-10, "{v}");
        let v = oracle_quadrature(|s| s.sin(), 1.0, 0.0, 1e-12).unwrap();
        assert_relative_eq!(v, -(1.0 - 1f64.cos()), epsilon = 1e-12);
    }

    #[test]
    fn oracle_reports_non_convergence() {
        // 1/s is not integrable at 0
        let r = oracle_quadrature(|s| 1.0 / s, 0.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn oracle_honours_breakpoints() {
        let f = |s: f64| (s - 0.3).abs();
        let v = oracle_quadrature_with_breaks(f, 0.0, 1.0, &[0.3], 1e-13).unwrap();
        assert_relative_eq!(v, 0.5 * (0.09 + 0.49), epsilon = 1e-13);
    }

    #[test]
    fn graded_panels_cover_interval() {
        for toward_a in [true, false] {
            let p = graded_panels(2.0, 5.0, toward_a, 0.15, 6);
            assert_eq!(p.len(), 7);
            assert_eq!(p.first().unwrap().0, 2.0);
            assert_eq!(p.last().unwrap().1, 5.0);
            for w in p.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
            let smallest = p.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            let at_end = if toward_a { p[0] } else { p[6] };
            assert_eq!(at_end.1 - at_end.0, smallest);
        }
    }

    #[test]
    fn doubling_integrates_boundary_layer() {
        let eps = 1e-4;
        let f = |x: f64| (-x / eps).exp();
        let panels = graded_panels(0.0, 1.0, true, 0.15, 10);
        let v = integrate_panels_doubling(&f, &panels, 8, 64, 1e-13).unwrap();
        assert_relative_eq!(v, eps * (1.0 - (-1.0 / eps).exp()), max_relative = 1e-10);
    }
}
