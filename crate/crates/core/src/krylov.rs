//! Full GMRES with right preconditioning and a dense LU reference solver.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Anything that can apply a square matrix to a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PreconditionerKind {
    Identity,
    Diagonal,
    Calderon,
}

impl PreconditionerKind {
    pub const ALL: [Self; 3] = [Self::Identity, Self::Diagonal, Self::Calderon];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "none",
            Self::Diagonal => "diag",
            Self::Calderon => "calderon",
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(Self::Identity),
            "diag" | "diagonal" => Ok(Self::Diagonal),
            "calderon" => Ok(Self::Calderon),
            other => Err(Error::InvalidParameter(format!("unknown preconditioner '{other}'"))),
        }
    }
}

/// Approximate inverse `P^{-1}` applied inside GMRES.
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    /// Inverse of the stored diagonal.
    Diagonal(DVector<f64>),
    /// `M^{-1} D M^{-1}` with diagonal mass `M` (stored inverted).
    Calderon {
        mass_inv: DVector<f64>,
        hypersingular: DMatrix<f64>,
    },
}

fn check_positive(v: &DVector<f64>, what: &str) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "{what} entry {i} must be positive, got {}",
            v[i]
        ))),
        None => Ok(()),
    }
}

impl Preconditioner {
    /// Diagonal (Jacobi) preconditioner from the diagonal of `a`.
    pub fn diagonal(a: &DMatrix<f64>) -> Result<Self> {
        let d = a.diagonal();
        check_positive(&d, "diagonal")?;
        Ok(Self::Diagonal(d))
    }

    pub fn calderon(mass: &DVector<f64>, hypersingular: DMatrix<f64>) -> Result<Self> {
        check_positive(mass, "mass")?;
        if !hypersingular.is_square() || hypersingular.nrows() != mass.len() {
            return Err(Error::DimensionMismatch {
                expected: mass.len(),
                actual: hypersingular.nrows(),
            });
        }
        Ok(Self::Calderon {
            mass_inv: mass.map(|m| 1.0 / m),
            hypersingular,
        })
    }

    pub fn kind(&self) -> PreconditionerKind {
        match self {
            Self::Identity => PreconditionerKind::Identity,
            Self::Diagonal(_) => PreconditionerKind::Diagonal,
            Self::Calderon { .. } => PreconditionerKind::Calderon,
        }
    }

    /// `P^{-1} r`.
    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Identity => r.clone(),
            Self::Diagonal(d) => r.component_div(d),
            Self::Calderon { .. } => apply_calderon(self, r),
        }
    }

    /// `P^{-1} A` as an explicit matrix.
    pub fn left_product(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Identity => a.clone(),
            Self::Diagonal(d) => {
                let mut out = a.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            Self::Calderon {
                mass_inv,
                hypersingular,
            } => {
                let mut scaled = a.clone();
                for (i, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= mass_inv[i];
                }
                let mut out = hypersingular * scaled;
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= mass_inv[i];
                }
                out
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::Identity => None,
            Self::Diagonal(d) => Some(d.len()),
            Self::Calderon { mass_inv, .. } => Some(mass_inv.len()),
        }
    }
}

/// `M^{-1} (D (M^{-1} r))`; other preconditioners fall back to [`Preconditioner::apply`].
pub fn apply_calderon(p: &Preconditioner, r: &DVector<f64>) -> DVector<f64> {
    match p {
        Preconditioner::Calderon {
            mass_inv,
            hypersingular,
        } => (hypersingular * r.component_mul(mass_inv)).component_mul(mass_inv),
        other => other.apply(r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// Arnoldi estimates of `||b - A x_k|| / ||b||`, starting at `k = 0`.
    pub relative_residual_history: Vec<f64>,
    /// True relative residual of the returned solution.
    pub final_relative_residual: f64,
    pub converged: bool,
    pub breakdown: bool,
}

/// Relative size of a Hessenberg subdiagonal entry, measured against the
/// largest Hessenberg entry so far, below which the Krylov space is taken
/// to be invariant.
const BREAKDOWN_RATIO: f64 = 1e-14;

/// Solves `A x = b` by non-restarted GMRES on `A P^{-1} y = b`, `x = P^{-1} y`,
/// starting from `x = 0`.
///
/// Arnoldi uses modified Gram-Schmidt with one reorthogonalisation pass.
/// Iteration stops once the true relative residual `||b - A x|| / ||b||`
/// reaches `tol`; the cheap Givens estimate only triggers that check.
pub fn gmres<A: LinearOperator + ?Sized>(
    a: &A,
    b: &DVector<f64>,
    config: &GmresConfig,
    p: &Preconditioner,
) -> Result<SolveReport> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    if let Some(m) = p.dim() {
        if m != n {
            return Err(Error::DimensionMismatch { expected: n, actual: m });
        }
    }
    if !(config.tol > 0.0 && config.tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must lie in (0, 1), got {}",
            config.tol
        )));
    }
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(SolveReport {
            solution: DVector::zeros(n),
            iterations: 0,
            relative_residual_history: vec![0.0],
            final_relative_residual: 0.0,
            converged: true,
            breakdown: false,
        });
    }

    let max_iter = config.max_iter.min(n.max(1));
    let mut basis: Vec<DVector<f64>> = vec![b / bnorm];
    // columns of the Hessenberg matrix, already rotated to upper triangular
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![bnorm];
    let mut history = vec![1.0];
    let mut h_scale = 0.0_f64;

    let assemble = |r: &Vec<Vec<f64>>, g: &[f64], basis: &[DVector<f64>]| {
        let k = r.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|j| r[j][i] * y[j]).sum();
            y[i] = (g[i] - s) / r[i][i];
        }
        let mut z = DVector::zeros(n);
        for (yi, v) in y.iter().zip(basis) {
            z.axpy(*yi, v, 1.0);
        }
        let x = p.apply(&z);
        let res = (b - a.apply(&x)).norm() / bnorm;
        (x, res)
    };

    let mut last = (DVector::zeros(n), 1.0);
    let mut breakdown = false;
    let mut converged = false;
    for j in 0..max_iter {
        let mut w = a.apply(&p.apply(&basis[j]));
        let mut h = vec![0.0; j + 2];
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = w.dot(v);
                h[i] += c;
                w.axpy(-c, v, 1.0);
            }
        }
        let sub = w.norm();
        h[j + 1] = sub;
        h_scale = h.iter().fold(h_scale, |m, x| m.max(x.abs()));

        for i in 0..j {
            let (c, s) = (cs[i], sn[i]);
            let t = c * h[i] + s * h[i + 1];
            h[i + 1] = -s * h[i] + c * h[i + 1];
            h[i] = t;
        }
        let rho = h[j].hypot(h[j + 1]);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (h[j] / rho, h[j + 1] / rho) };
        h[j] = rho;
        h[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[j]);
        g[j] *= c;
        h.truncate(j + 1);
        r.push(h);

        let estimate = g[j + 1].abs() / bnorm;
        history.push(estimate);
        breakdown = sub <= BREAKDOWN_RATIO * h_scale;
        if estimate <= config.tol || breakdown || j + 1 == max_iter {
            last = assemble(&r, &g, &basis);
            if last.1 <= config.tol {
                converged = true;
                breakdown = false;
                break;
            }
            if breakdown {
                log::warn!("GMRES breakdown after {} iterations", j + 1);
                break;
            }
        }
        if j + 1 < max_iter {
            basis.push(w / sub);
        }
    }
    let iterations = r.len();
    if !converged && !breakdown {
        log::warn!(
            "GMRES stopped after {iterations} iterations at relative residual {:.3e}",
            last.1
        );
    }
    Ok(SolveReport {
        solution: last.0,
        iterations,
        relative_residual_history: history,
        final_relative_residual: last.1,
        converged,
        breakdown,
    })
}

/// Relative pivot size below which [`direct_solve`] declares the matrix singular.
const PIVOT_RATIO: f64 = 1e-14;

/// Dense LU with partial pivoting.
pub fn direct_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().abs();
    let (lo, hi) = (diag.min(), diag.max());
    if !(hi > 0.0) || lo < PIVOT_RATIO * hi {
        return Err(Error::Singular {
            ratio: if hi > 0.0 { lo / hi } else { 0.0 },
        });
    }
    lu.solve(b)
        .ok_or_else(|| Error::Numerical("LU solve failed".into()))
}
