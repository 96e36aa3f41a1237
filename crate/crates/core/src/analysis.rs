//! Condition numbers, discretisation errors and convergence rates.

use crate::error::{Error, Result};
use crate::galerkin::DiscreteFlux;
use crate::kernels::quadrature::GaussRule;
use crate::reference::SineSeries;
use nalgebra::DMatrix;
use std::fmt;
use std::str::FromStr;

/// Spectral ratios below this are reported as numerically singular.
pub const SINGULAR_RATIO: f64 = 1e-14;

/// Default Gauss order per element for `L2` errors.
pub const DEFAULT_ERROR_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KappaConvention {
    /// `sigma_max / sigma_min`.
    SingularValues,
    /// `max |lambda| / min |lambda|`.
    Eigenvalues,
}

impl KappaConvention {
    pub fn name(self) -> &'static str {
        match self {
            Self::SingularValues => "sv",
            Self::Eigenvalues => "eig",
        }
    }
}

impl fmt::Display for KappaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KappaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sv" | "svd" => Ok(Self::SingularValues),
            "eig" => Ok(Self::Eigenvalues),
            other => Err(Error::InvalidParameter(format!("unknown kappa convention '{other}'"))),
        }
    }
}

fn ratio(hi: f64, lo: f64) -> Result<f64> {
    if !(hi > 0.0) || !(lo >= SINGULAR_RATIO * hi) {
        return Err(Error::Singular {
            ratio: if hi > 0.0 { lo / hi } else { 0.0 },
        });
    }
    Ok(hi / lo)
}

/// Condition number of a dense square matrix under the chosen convention.
pub fn condition_number(a: &DMatrix<f64>, convention: KappaConvention) -> Result<f64> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    match convention {
        KappaConvention::SingularValues => {
            let s = a.singular_values();
            ratio(s.max(), s.min())
        }
        KappaConvention::Eigenvalues => {
            let ev = a.complex_eigenvalues();
            let moduli: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
            let hi = moduli.iter().copied().fold(0.0, f64::max);
            let lo = moduli.iter().copied().fold(f64::INFINITY, f64::min);
            ratio(hi, lo)
        }
    }
}

/// Smallest eigenvalue of the symmetric part `(A + A^T) / 2`.
pub fn ellipticity_margin(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// `||w_ref - w_h||_{L2(Sigma)}` by Gauss quadrature of the given order on
/// every element.
pub fn l2_error(w: &DiscreteFlux, reference: &SineSeries, gauss_order: usize) -> f64 {
    let rule = GaussRule::new(gauss_order);
    let c = w.coefficients();
    w.mesh()
        .elements()
        .map(|e| rule.integrate(|t| (reference.flux(e.side, t) - c[e.index]).powi(2), e.t_begin, e.t_end))
        .sum::<f64>()
        .sqrt()
}

/// Element means of the reference flux, the `L2` best approximation.
pub fn best_approximation(mesh: &crate::mesh::BoundaryMesh, reference: &SineSeries, gauss_order: usize) -> DiscreteFlux {
    let rule = GaussRule::new(gauss_order);
    let coeffs = nalgebra::DVector::from_iterator(
        mesh.len(),
        mesh.elements()
            .map(|e| rule.integrate(|t| reference.flux(e.side, t), e.t_begin, e.t_end) / e.size()),
    );
    DiscreteFlux::new(mesh.clone(), coeffs).expect("coefficient count matches the mesh")
}

/// Estimated orders `log2(e_{k-1} / e_k)`; `None` where an error is not positive.
pub fn eoc(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect()
}

/// One row of a refinement study.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyRecord {
    pub level: usize,
    pub n: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub l2_error: f64,
    pub eoc: Option<f64>,
    pub kappa_v_sv: Option<f64>,
    pub kappa_v_eig: Option<f64>,
    pub kappa_diag_sv: Option<f64>,
    pub kappa_diag_eig: Option<f64>,
    pub kappa_calderon_sv: Option<f64>,
    pub kappa_calderon_eig: Option<f64>,
    pub iters_none: Option<usize>,
    pub iters_diag: Option<usize>,
    pub iters_calderon: Option<usize>,
    pub margin_v: Option<f64>,
    pub margin_d: Option<f64>,
    pub seconds: f64,
}
