//! Sine series solutions of the heat equation on `(0, 1)` with homogeneous
//! Dirichlet data, used as reference for fluxes and interior values.
//!
//! `u(x, t) = sum_n b_n sin(n pi x) exp(-n^2 pi^2 t / alpha)`.

use crate::error::{Error, Result};
use crate::kernels::quadrature::oracle_quadrature;
use crate::mesh::Side;
use std::f64::consts::PI;
use std::sync::Arc;

/// Terms whose decay factor is below `exp(-EXPONENT_CUTOFF)` are dropped.
const EXPONENT_CUTOFF: f64 = 745.0;

type CoefficientBound = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SineSeries {
    alpha: f64,
    coefficients: Vec<f64>,
    // upper bound on |b_n| for n beyond the stored coefficients
    bound: CoefficientBound,
}

impl std::fmt::Debug for SineSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineSeries")
            .field("alpha", &self.alpha)
            .field("n_max", &self.coefficients.len())
            .finish()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")))
    }
}

/// Sine coefficient of `5 exp(-c x) sin(pi x)`.
fn damped_sine_coefficient(c: f64, n: usize) -> f64 {
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let k = |m: f64| 1.0 / (c * c + m * m * PI * PI);
    let nf = n as f64;
    5.0 * c * (1.0 + sign * (-c).exp()) * (k(nf - 1.0) - k(nf + 1.0))
}

impl SineSeries {
    /// Series with explicit coefficients `b_1, b_2, ...` and zero tail.
    pub fn from_coefficients(alpha: f64, coefficients: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if coefficients.is_empty() {
            return Err(Error::InvalidParameter("a sine series needs at least one term".into()));
        }
        Ok(Self {
            alpha,
            coefficients,
            bound: Arc::new(|_| 0.0),
        })
    }

    /// Coefficients `b_n = 2 int_0^1 u0(x) sin(n pi x) dx` by adaptive quadrature.
    ///
    /// The tail is bounded through `|b_n| <= 2 ||u0||_{L1}`.
    pub fn expand(alpha: f64, u0: impl Fn(f64) -> f64, n_max: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        let l1 = oracle_quadrature(|x| u0(x).abs(), 0.0, 1.0, 1e-12)
            .map_err(|e| e.with_context("L1 norm of the initial datum"))?;
        let coefficients = (1..=n_max)
            .map(|n| {
                let breaks: Vec<f64> = (1..n).map(|j| j as f64 / n as f64).collect();
                crate::kernels::quadrature::oracle_quadrature_with_breaks(
                    |x| 2.0 * u0(x) * (n as f64 * PI * x).sin(),
                    0.0,
                    1.0,
                    &breaks,
                    1e-13,
                )
                .map_err(|e| e.with_context(format!("sine coefficient {n}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            alpha,
            coefficients,
            bound: Arc::new(move |_| 2.0 * l1),
        })
    }

    /// `u0(x) = sin(2 pi x)`.
    pub fn example1(alpha: f64) -> Result<Self> {
        Self::from_coefficients(alpha, vec![0.0, 1.0])
    }

    /// `u0(x) = 5 exp(-10 x) sin(pi x)` with closed-form coefficients.
    pub fn example2(alpha: f64, n_max: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        let c = 10.0;
        let coefficients = (1..=n_max).map(|n| damped_sine_coefficient(c, n)).collect();
        Ok(Self {
            alpha,
            coefficients,
            bound: Arc::new(move |n| {
                let nf = n as f64;
                let k = |m: f64| 1.0 / (c * c + m * m * PI * PI);
                5.0 * c * (1.0 + (-c).exp()) * (k(nf - 1.0) - k(nf + 1.0))
            }),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn terms(&self, t: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let rate = PI * PI * t / self.alpha;
        self.coefficients
            .iter()
            .enumerate()
            .map(move |(i, &b)| {
                let n = (i + 1) as f64;
                (n, b, n * n * rate)
            })
            .take_while(|&(_, _, e)| e < EXPONENT_CUTOFF)
    }

    /// Outward normal derivative on `side` at time `t`.
    pub fn flux(&self, side: Side, t: f64) -> f64 {
        self.terms(t)
            .map(|(n, b, e)| {
                let s = match side {
                    Side::Left => -1.0,
                    Side::Right if (n as usize).is_multiple_of(2) => 1.0,
                    Side::Right => -1.0,
                };
                s * b * n * PI * (-e).exp()
            })
            .sum()
    }

    pub fn interior(&self, x: f64, t: f64) -> f64 {
        self.terms(t)
            .map(|(n, b, e)| b * (n * PI * x).sin() * (-e).exp())
            .sum()
    }

    /// Bound on `sum_{n > n_max} |b_n| n pi exp(-n^2 pi^2 t / alpha)`, the
    /// truncation error of [`Self::flux`] at time `t > 0`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        let rate = PI * PI * t / self.alpha;
        let mut total = 0.0;
        let mut n = self.n_max() + 1;
        loop {
            let nf = n as f64;
            let e = nf * nf * rate;
            if e > EXPONENT_CUTOFF {
                break;
            }
            let term = (self.bound)(n) * nf * PI * (-e).exp();
            total += term;
            // terms decay at least geometrically once e grows past 1
            if term <= 1e-18 * total.max(f64::MIN_POSITIVE) && e > 1.0 {
                break;
            }
            n += 1;
        }
        total
    }
}

/// The two model problems on `(0, 1)` with zero Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// `u0(x) = sin(2 pi x)`.
    One,
    /// `u0(x) = 5 exp(-10 x) sin(pi x)`.
    Two,
}

impl Example {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(Error::InvalidParameter(format!("unknown example {i}, expected 1 or 2"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }

    pub fn initial_value(self, x: f64) -> f64 {
        match self {
            Self::One => (2.0 * PI * x).sin(),
            Self::Two => 5.0 * (-10.0 * x).exp() * (PI * x).sin(),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::One => "u0(x) = sin(2 pi x)",
            Self::Two => "u0(x) = 5 exp(-10 x) sin(pi x)",
        }
    }

    pub fn series(self, alpha: f64) -> Result<SineSeries> {
        match self {
            Self::One => SineSeries::example1(alpha),
            Self::Two => SineSeries::example2(alpha, 50_000),
        }
    }
}
