//! Heat kernel evaluation and exact time-integrated primitives.
//!
//! Everything here is a pure function of its arguments. Every kernel-family
//! function is causal: it returns exactly `0.0` whenever the time lag is not
//! strictly positive.
//!
//! With `z = sqrt(alpha) |d| / (2 sqrt(tau))` the primitives are
//!
//! ```text
//! I0(d, tau) = int_0^tau U*(d, s) ds
//!            = sqrt(alpha tau / pi) exp(-z^2) - (alpha |d| / 2) erfc(z)
//! J0(d, tau) = int_0^tau I0(d, s) ds
//!            = sqrt(alpha) [ 2/(3 sqrt(pi)) sqrt(tau) (tau + beta^2) exp(-z^2)
//!                            - beta (tau + 2 beta^2 / 3) erfc(z) ],   beta = sqrt(alpha) |d| / 2
//! ```
//!
//! and `I1 = dI0/dd`, `J1 = dJ0/dd` are the spatial derivatives needed by the
//! double layer and the Neumann trace of the initial potential.

pub mod quadrature;

pub use quadrature::{gauss_legendre, oracle_quadrature, GaussRule};

use crate::error::{Error, Result};
use std::f64::consts::PI;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Values below this magnitude are flushed to zero.
pub const UNDERFLOW_FLUSH: f64 = 1e-300;

/// Heat capacity of the model problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    alpha: f64,
}

impl KernelParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidParameter(format!(
                "heat capacity must be finite and positive, got {alpha}"
            )))
        }
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Signed spatial distance `d = x - y` and time lag `tau = t - s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeSeparation {
    pub d: f64,
    pub tau: f64,
}

impl SpaceTimeSeparation {
    pub fn new(d: f64, tau: f64) -> Self {
        Self { d, tau }
    }
}

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
fn flush(v: f64) -> f64 {
    if v.abs() < UNDERFLOW_FLUSH {
        0.0
    } else {
        v
    }
}

/// Fundamental solution `U*(d, tau) = sqrt(alpha / (4 pi tau)) exp(-alpha d^2 / (4 tau))`
/// for `tau > 0`, zero otherwise.
pub fn fundamental_solution(sep: SpaceTimeSeparation, p: KernelParams) -> f64 {
    let SpaceTimeSeparation { d, tau } = sep;
    if tau <= 0.0 || tau.is_nan() {
        return 0.0;
    }
    let a = p.alpha;
    let exponent = -a * d * d / (4.0 * tau);
    let scale = (a / (4.0 * PI * tau)).sqrt();
    let v = if scale.is_finite() {
        scale * exponent.exp()
    } else {
        // subnormal lags: combine in the exponent to avoid inf * 0
        (exponent + 0.5 * (a.ln() - (4.0 * PI).ln() - tau.ln())).exp()
    };
    flush(v)
}

/// `dU*/dd`.
pub fn kernel_d(sep: SpaceTimeSeparation, p: KernelParams) -> f64 {
    let u = fundamental_solution(sep, p);
    if u == 0.0 {
        return 0.0;
    }
    flush(-p.alpha * sep.d / (2.0 * sep.tau) * u)
}

/// `d^2 U*/dd^2`. Equals `alpha * kernel_dt` away from the origin.
pub fn kernel_dd(sep: SpaceTimeSeparation, p: KernelParams) -> f64 {
    let u = fundamental_solution(sep, p);
    if u == 0.0 {
        return 0.0;
    }
    let a = p.alpha;
    let g = a * sep.d / (2.0 * sep.tau);
    flush((g * g - a / (2.0 * sep.tau)) * u)
}

/// `dU*/dtau`.
pub fn kernel_dt(sep: SpaceTimeSeparation, p: KernelParams) -> f64 {
    let u = fundamental_solution(sep, p);
    if u == 0.0 {
        return 0.0;
    }
    let SpaceTimeSeparation { d, tau } = sep;
    flush((p.alpha * d * d / (4.0 * tau * tau) - 0.5 / tau) * u)
}

/// Exact `int_0^tau U*(d, s) ds`.
pub fn primitive_i0(d: f64, tau: f64, p: KernelParams) -> f64 {
    if tau <= 0.0 || tau.is_nan() {
        return 0.0;
    }
    let a = p.alpha;
    let ad = d.abs();
    let z = a.sqrt() * ad / (2.0 * tau.sqrt());
    let v = (a * tau / PI).sqrt() * (-z * z).exp() - 0.5 * a * ad * erfc(z);
    flush(v.max(0.0))
}

/// Exact `int_0^tau dU*/dd (d, s) ds`, i.e. `dI0/dd`.
///
/// The limit is discontinuous at `d = 0` (jump `alpha` between the one-sided
/// values); the principal value `0` is returned there.
pub fn primitive_i1(d: f64, tau: f64, p: KernelParams) -> f64 {
    if tau <= 0.0 || tau.is_nan() || d == 0.0 {
        return 0.0;
    }
    let a = p.alpha;
    let z = a.sqrt() * d.abs() / (2.0 * tau.sqrt());
    flush(-d.signum() * 0.5 * a * erfc(z))
}

/// Exact `int_0^tau I0(d, s) ds`, the outer time integral for single layer entries.
pub fn primitive_j0(d: f64, tau: f64, p: KernelParams) -> f64 {
    if tau <= 0.0 || tau.is_nan() {
        return 0.0;
    }
    let sa = p.alpha.sqrt();
    let beta = 0.5 * sa * d.abs();
    let st = tau.sqrt();
    let z = beta / st;
    let b2 = beta * beta;
    let v = sa
        * ((2.0 / 3.0) * FRAC_1_SQRT_PI * st * (tau + b2) * (-z * z).exp()
            - beta * (tau + (2.0 / 3.0) * b2) * erfc(z));
    flush(v.max(0.0))
}

/// Exact `dJ0/dd`, the time-integrated primitive behind the double layer entries.
///
/// Returns the principal value `0` at `d = 0`.
pub fn primitive_j1(d: f64, tau: f64, p: KernelParams) -> f64 {
    if tau <= 0.0 || tau.is_nan() || d == 0.0 {
        return 0.0;
    }
    let a = p.alpha;
    let beta = 0.5 * a.sqrt() * d.abs();
    let st = tau.sqrt();
    let z = beta / st;
    let inner =
        2.0 * FRAC_1_SQRT_PI * beta * st * (-z * z).exp() - (tau + 2.0 * beta * beta) * erfc(z);
    // inner is minus a nonnegative integral of erfc
    flush(d.signum() * 0.5 * a * inner.min(0.0))
}

/// Inclusion-exclusion of a time primitive `F` over two elements:
/// `F(t2 - s1) - F(t1 - s1) - F(t2 - s2) + F(t1 - s2)` where `[t1, t2]` is
/// the test element and `[s1, s2]` the trial element.
#[inline]
pub(crate) fn corner_sum(
    f: impl Fn(f64) -> f64,
    (t1, t2): (f64, f64),
    (s1, s2): (f64, f64),
) -> f64 {
    f(t2 - s1) - f(t1 - s1) - f(t2 - s2) + f(t1 - s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn unit() -> KernelParams {
        KernelParams::new(1.0).unwrap()
    }

    #[test]
    fn rejects_non_positive_alpha() {
        assert!(KernelParams::new(0.0).is_err());
        assert!(KernelParams::new(-2.0).is_err());
        assert!(KernelParams::new(f64::NAN).is_err());
    }

    /// Maclaurin series of erf, summed with enough terms for |x| <= 3.
    fn erfc_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        1.0 - 2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erfc_reference_values() {
        assert_eq!(erfc(0.0), 1.0);
        assert!(erfc(10.0) < 1e-40);
        assert_relative_eq!(erfc(0.5), 0.479_500_122_2, epsilon = 1e-10);
        for i in -30..=30 {
            let x = i as f64 * 0.1;
            assert!((erfc(x) - erfc_series(x)).abs() < 1e-13, "x = {x}");
            assert!(erfc(x) > 0.0 && erfc(x) < 2.0);
        }
    }

    #[test]
    fn fundamental_solution_values() {
        let p = unit();
        let v = fundamental_solution(SpaceTimeSeparation::new(0.0, 1.0 / (4.0 * PI)), p);
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        assert_eq!(fundamental_solution(SpaceTimeSeparation::new(3.0, -0.5), p), 0.0);
        assert_eq!(fundamental_solution(SpaceTimeSeparation::new(0.0, 0.0), p), 0.0);
        // (4 pi)^{-1/2} e^{-1/4}
        let v = fundamental_solution(SpaceTimeSeparation::new(1.0, 1.0), p);
        assert_relative_eq!(v, 0.219_695_644_733_861, epsilon = 1e-14);
    }

    #[test]
    fn tiny_lags_do_not_produce_nan() {
        let p = unit();
        for tau in [1e-310, 1e-300, 1e-200] {
            let v = fundamental_solution(SpaceTimeSeparation::new(0.5, tau), p);
            assert_eq!(v, 0.0);
            let v0 = fundamental_solution(SpaceTimeSeparation::new(0.0, tau), p);
            assert!(v0.is_finite() && v0 > 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        let p = unit();
        assert_eq!(kernel_d(SpaceTimeSeparation::new(0.0, 0.7), p), 0.0);
        let v = kernel_dt(SpaceTimeSeparation::new(0.0, 1.0), p);
        assert_relative_eq!(v, -0.5 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(v, -0.141_047_395_886_939, epsilon = 1e-12);
    }

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let p = KernelParams::new(rng.gen_range(0.5..4.0)).unwrap();
            let d = rng.gen_range(-1.5..1.5);
            let tau = rng.gen_range(0.05..2.0);
            let s = SpaceTimeSeparation::new(d, tau);
            let h = 1e-5;
            let dd = fd(|x| fundamental_solution(SpaceTimeSeparation::new(x, tau), p), d, h);
            let dt = fd(|x| fundamental_solution(SpaceTimeSeparation::new(d, x), p), tau, h);
            let ddd = fd(|x| kernel_d(SpaceTimeSeparation::new(x, tau), p), d, h);
            assert_relative_eq!(kernel_d(s, p), dd, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(kernel_dt(s, p), dt, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(kernel_dd(s, p), ddd, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(
                kernel_dd(s, p),
                p.alpha() * kernel_dt(s, p),
                max_relative = 1e-12,
                epsilon = 1e-14
            );
        }
        let p = KernelParams::new(2.0).unwrap();
        let s = SpaceTimeSeparation::new(0.7, 0.3);
        let fd2 = {
            let h = 1e-4;
            let f = |x: f64| fundamental_solution(SpaceTimeSeparation::new(x, 0.3), p);
            (f(0.7 + h) - 2.0 * f(0.7) + f(0.7 - h)) / (h * h)
        };
        assert_relative_eq!(fd2, 2.0 * kernel_dt(s, p), max_relative = 1e-6);
    }

    #[test]
    fn primitive_closed_form_values() {
        let p = unit();
        assert_relative_eq!(primitive_i0(0.0, 1.0, p), FRAC_1_SQRT_PI, epsilon = 1e-15);
        assert_relative_eq!(primitive_i0(0.0, 1.0, p), 0.564_190, epsilon = 1e-6);
        assert_eq!(primitive_i0(0.3, 0.0, p), 0.0);
        assert_eq!(primitive_j0(0.3, -1.0, p), 0.0);
        assert_relative_eq!(primitive_j0(0.0, 1.0, p), 2.0 / (3.0 * PI.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(primitive_j0(0.0, 1.0, p), 0.376_126, epsilon = 1e-6);
        assert_relative_eq!(
            primitive_j0(0.0, 4.0, p),
            8.0 * primitive_j0(0.0, 1.0, p),
            max_relative = 1e-15
        );
        // e^{-1/4} / sqrt(pi) - erfc(1/2) / 2 evaluated by hand
        assert_relative_eq!(primitive_i0(1.0, 1.0, p), 0.199_641_228_4, epsilon = 1e-10);
    }

    #[test]
    fn primitives_are_time_antiderivatives() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let p = KernelParams::new(rng.gen_range(0.5..4.0)).unwrap();
            let d = rng.gen_range(-1.5..1.5);
            let tau = rng.gen_range(0.05..2.0);
            let h = 1e-5 * tau;
            let di0 = fd(|t| primitive_i0(d, t, p), tau, h);
            let dj0 = fd(|t| primitive_j0(d, t, p), tau, h);
            let di1 = fd(|t| primitive_i1(d, t, p), tau, h);
            let dj1 = fd(|t| primitive_j1(d, t, p), tau, h);
            let s = SpaceTimeSeparation::new(d, tau);
            assert_relative_eq!(di0, fundamental_solution(s, p), max_relative = 1e-6);
            assert_relative_eq!(dj0, primitive_i0(d, tau, p), max_relative = 1e-6);
            assert_relative_eq!(di1, kernel_d(s, p), max_relative = 1e-6, epsilon = 1e-10);
            assert_relative_eq!(dj1, primitive_i1(d, tau, p), max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn spatial_derivatives_of_primitives() {
        let p = KernelParams::new(1.7).unwrap();
        for (d, tau) in [(0.4, 0.3), (-0.9, 1.1), (1.0, 0.02)] {
            let h = 1e-6;
            assert_relative_eq!(
                fd(|x| primitive_i0(x, tau, p), d, h),
                primitive_i1(d, tau, p),
                max_relative = 1e-6
            );
            assert_relative_eq!(
                fd(|x| primitive_j0(x, tau, p), d, h),
                primitive_j1(d, tau, p),
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn scaling_invariance() {
        let p = KernelParams::new(1.3).unwrap();
        for lambda in [0.5, 2.0, 3.7] {
            for (d, tau) in [(0.2, 0.1), (-0.6, 0.9), (0.0, 0.4)] {
                let base = fundamental_solution(SpaceTimeSeparation::new(d, tau), p);
                let scaled =
                    fundamental_solution(SpaceTimeSeparation::new(lambda * d, lambda * lambda * tau), p);
                assert_relative_eq!(scaled, base / lambda, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn causality_everywhere() {
        let p = unit();
        for tau in [0.0, -1e-12, -3.0] {
            let s = SpaceTimeSeparation::new(0.4, tau);
            assert_eq!(fundamental_solution(s, p), 0.0);
            assert_eq!(kernel_d(s, p), 0.0);
            assert_eq!(kernel_dd(s, p), 0.0);
            assert_eq!(kernel_dt(s, p), 0.0);
            assert_eq!(primitive_i0(0.4, tau, p), 0.0);
            assert_eq!(primitive_i1(0.4, tau, p), 0.0);
            assert_eq!(primitive_j0(0.4, tau, p), 0.0);
            assert_eq!(primitive_j1(0.4, tau, p), 0.0);
        }
    }

    #[test]
    fn far_separations_flush_to_zero() {
        let p = unit();
        assert_eq!(primitive_i0(100.0, 1e-3, p), 0.0);
        assert_eq!(primitive_j0(100.0, 1e-3, p), 0.0);
        assert_eq!(primitive_j1(100.0, 1e-3, p), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn primitives_nonnegative_and_monotone(
            d in -3.0f64..3.0, tau in 1e-6f64..5.0, dt in 0.0f64..1.0, alpha in 0.1f64..30.0
        ) {
            let p = KernelParams::new(alpha).unwrap();
            let i_lo = primitive_i0(d, tau, p);
            let i_hi = primitive_i0(d, tau + dt, p);
            proptest::prop_assert!(i_lo >= 0.0 && i_hi >= i_lo);
            let j_lo = primitive_j0(d, tau, p);
            let j_hi = primitive_j0(d, tau + dt, p);
            proptest::prop_assert!(j_lo >= 0.0 && j_hi >= j_lo);
        }
    }
}
