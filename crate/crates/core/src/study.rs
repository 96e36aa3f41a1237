//! Refinement studies, single solves and their table output.

use crate::analysis::{
    condition_number, ellipticity_margin, eoc, l2_error, KappaConvention, StudyRecord, DEFAULT_ERROR_ORDER,
};
use crate::error::{Error, Result};
use crate::galerkin::{
    assemble_rhs, assemble_second_bie_residual, evaluate_interior, mass_weighted_norm, DiscreteFlux, OperatorMatrices,
    Problem, QuadratureConfig,
};
use crate::kernels::KernelParams;
use crate::krylov::{direct_solve, gmres, GmresConfig, Preconditioner, PreconditionerKind};
use crate::mesh::{BoundaryMesh, Interval};
use crate::reference::{Example, SineSeries};
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub const MAX_UNIFORM_LEVEL: usize = 11;
pub const MAX_ADAPTIVE_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaSelection {
    SingularValues,
    Eigenvalues,
    Both,
}

impl KappaSelection {
    pub fn conventions(self) -> Vec<KappaConvention> {
        match self {
            Self::SingularValues => vec![KappaConvention::SingularValues],
            Self::Eigenvalues => vec![KappaConvention::Eigenvalues],
            Self::Both => vec![KappaConvention::SingularValues, KappaConvention::Eigenvalues],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SingularValues => "sv",
            Self::Eigenvalues => "eig",
            Self::Both => "both",
        }
    }
}

impl FromStr for KappaSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sv" => Ok(Self::SingularValues),
            "eig" => Ok(Self::Eigenvalues),
            "both" => Ok(Self::Both),
            other => Err(Error::InvalidParameter(format!("unknown kappa selection '{other}'"))),
        }
    }
}

/// Parses `none`, `diag`, `calderon` or `all` (comma separated lists allowed).
pub fn parse_preconditioners(s: &str) -> Result<Vec<PreconditionerKind>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            out.extend(PreconditionerKind::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::InvalidParameter("no preconditioner selected".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Uniform,
    Adaptive,
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: Example,
    pub alpha: f64,
    pub horizon: f64,
    /// Highest uniform level, or number of adaptive steps.
    pub levels: usize,
    pub tol: f64,
    pub preconditioners: Vec<PreconditionerKind>,
    pub theta: f64,
    pub kappa: KappaSelection,
    /// Condition numbers are skipped above this size.
    pub max_kappa_n: usize,
    /// Adaptive studies stop after the first step whose size exceeds this.
    pub max_n: Option<usize>,
    /// GMRES iteration cap; defaults to the system size.
    pub max_iter: Option<usize>,
    pub dump_matrices: bool,
    pub out_dir: Option<PathBuf>,
    /// Interior sample points `(x, t)` for single solves.
    pub points: Vec<(f64, f64)>,
    pub quadrature: QuadratureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            example: Example::One,
            alpha: 1.0,
            horizon: 1.0,
            levels: 8,
            tol: 1e-8,
            preconditioners: PreconditionerKind::ALL.to_vec(),
            theta: 0.5,
            kappa: KappaSelection::Both,
            max_kappa_n: 1024,
            max_n: None,
            max_iter: None,
            dump_matrices: false,
            out_dir: None,
            points: vec![(0.25, 0.1), (0.5, 0.3)],
            quadrature: QuadratureConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("invalid value '{value}' for '{key}'")))
}

fn parse_points(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (x, t) = p
                .split_once(',')
                .ok_or_else(|| Error::InvalidParameter(format!("point '{p}' must be 'x,t'")))?;
            Ok((parse_num("points", x)?, parse_num("points", t)?))
        })
        .collect()
}

impl ExperimentConfig {
    /// Sets one option by name; names match the command line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        match key.as_str() {
            "example" => self.example = Example::from_index(parse_num(&key, value)?)?,
            "alpha" => self.alpha = parse_num(&key, value)?,
            "horizon" | "t" => self.horizon = parse_num(&key, value)?,
            "levels" => self.levels = parse_num(&key, value)?,
            "tol" => self.tol = parse_num(&key, value)?,
            "precond" => self.preconditioners = parse_preconditioners(value)?,
            "theta" => self.theta = parse_num(&key, value)?,
            "kappa" => self.kappa = value.parse()?,
            "max-kappa-n" => self.max_kappa_n = parse_num(&key, value)?,
            "max-n" => self.max_n = Some(parse_num(&key, value)?),
            "max-iter" => self.max_iter = Some(parse_num(&key, value)?),
            "dump-matrices" => self.dump_matrices = parse_num(&key, value)?,
            "out" => self.out_dir = Some(PathBuf::from(value.trim())),
            "points" => self.points = parse_points(value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown option '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_key_values(text)?;
        Ok(cfg)
    }

    pub fn validate(&self, kind: StudyKind) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if self.preconditioners.is_empty() {
            return bad("no preconditioner selected".into());
        }
        match kind {
            StudyKind::Uniform | StudyKind::Single if self.levels > MAX_UNIFORM_LEVEL => {
                bad(format!("levels must be at most {MAX_UNIFORM_LEVEL}, got {}", self.levels))
            }
            StudyKind::Adaptive if self.levels > MAX_ADAPTIVE_STEPS => {
                bad(format!("adaptive steps must be at most {MAX_ADAPTIVE_STEPS}, got {}", self.levels))
            }
            _ => Ok(()),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let ex = self.example;
        Problem::with_initial(
            KernelParams::new(self.alpha)?,
            Interval::unit(),
            self.horizon,
            move |x| ex.initial_value(x),
        )
    }

    pub fn reference(&self) -> Result<SineSeries> {
        self.example.series(self.alpha)
    }

    /// Config echo for output headers.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let precs: Vec<&str> = self.preconditioners.iter().map(|p| p.name()).collect();
        vec![
            ("example".into(), format!("{} ({})", self.example.index(), self.example.description())),
            ("alpha".into(), format!("{}", self.alpha)),
            ("interval".into(), "(0, 1)".into()),
            ("horizon".into(), format!("{}", self.horizon)),
            ("dirichlet".into(), "g = 0".into()),
            ("levels".into(), self.levels.to_string()),
            ("tol".into(), format!("{:e}", self.tol)),
            ("preconditioners".into(), precs.join(",")),
            ("theta".into(), format!("{}", self.theta)),
            ("kappa".into(), self.kappa.name().into()),
            ("max_kappa_n".into(), self.max_kappa_n.to_string()),
            (
                "assumption".into(),
                "alpha is not fixed by the source tables; 1 is the default".into(),
            ),
            (
                "residual".into(),
                "GMRES stops on the true relative residual ||b - A x|| / ||b||, right preconditioning, x0 = 0".into(),
            ),
            ("kappa_definition".into(), "sv = sigma_max/sigma_min, eig = max|lambda|/min|lambda|".into()),
            ("reference".into(), "sine series solution".into()),
        ]
    }
}

fn build_preconditioner(kind: PreconditionerKind, ops: &OperatorMatrices) -> Result<Preconditioner> {
    match kind {
        PreconditionerKind::Identity => Ok(Preconditioner::Identity),
        PreconditionerKind::Diagonal => Preconditioner::diagonal(&ops.v),
        PreconditionerKind::Calderon => Preconditioner::calderon(&ops.mass, ops.d.clone()),
    }
}

fn kappa(a: &DMatrix<f64>, conv: KappaConvention, what: &str, level: usize) -> Option<f64> {
    match condition_number(a, conv) {
        Ok(k) => Some(k),
        Err(e) => {
            log::warn!("kappa({what}) [{conv}] at level {level}: {e}");
            None
        }
    }
}

/// Everything computed for one mesh.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub record: StudyRecord,
    pub flux: DiscreteFlux,
    pub operators: OperatorMatrices,
    pub rhs: nalgebra::DVector<f64>,
}

/// Assembles, solves with every configured preconditioner and evaluates
/// error and conditioning on one mesh.
pub fn analyse_mesh(
    cfg: &ExperimentConfig,
    mesh: &BoundaryMesh,
    prob: &Problem,
    series: &SineSeries,
    level: usize,
) -> Result<LevelResult> {
    let start = Instant::now();
    let ops = OperatorMatrices::assemble(mesh, prob.params);
    let rhs = assemble_rhs(mesh, prob, &cfg.quadrature)?;
    let n = mesh.len();
    let direct = direct_solve(&ops.v, &rhs).map_err(|e| e.at(format!("direct solve at level {level}")))?;
    let flux = DiscreteFlux::new(mesh.clone(), direct)?;

    let mut rec = StudyRecord {
        level,
        n,
        h_min: mesh.h_min(),
        h_max: mesh.h_max(),
        l2_error: l2_error(&flux, series, DEFAULT_ERROR_ORDER),
        ..Default::default()
    };

    let gcfg = GmresConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter.unwrap_or(n),
    };
    for &kind in &cfg.preconditioners {
        let p = build_preconditioner(kind, &ops)?;
        let rep = gmres(&ops.v, &rhs, &gcfg, &p)?;
        if !rep.converged {
            return Err(Error::Numerical(format!(
                "GMRES ({kind}) did not converge at level {level}: relative residual {:.3e} after {} iterations",
                rep.final_relative_residual, rep.iterations
            )));
        }
        let it = Some(rep.iterations);
        match kind {
            PreconditionerKind::Identity => rec.iters_none = it,
            PreconditionerKind::Diagonal => rec.iters_diag = it,
            PreconditionerKind::Calderon => rec.iters_calderon = it,
        }
        if n <= cfg.max_kappa_n {
            let prod = p.left_product(&ops.v);
            for conv in cfg.kappa.conventions() {
                let k = kappa(&prod, conv, kind.name(), level);
                match (kind, conv) {
                    (PreconditionerKind::Identity, KappaConvention::SingularValues) => rec.kappa_v_sv = k,
                    (PreconditionerKind::Identity, KappaConvention::Eigenvalues) => rec.kappa_v_eig = k,
                    (PreconditionerKind::Diagonal, KappaConvention::SingularValues) => rec.kappa_diag_sv = k,
                    (PreconditionerKind::Diagonal, KappaConvention::Eigenvalues) => rec.kappa_diag_eig = k,
                    (PreconditionerKind::Calderon, KappaConvention::SingularValues) => rec.kappa_calderon_sv = k,
                    (PreconditionerKind::Calderon, KappaConvention::Eigenvalues) => rec.kappa_calderon_eig = k,
                }
            }
        }
    }
    if n <= cfg.max_kappa_n {
        if !cfg.preconditioners.contains(&PreconditionerKind::Identity) {
            for conv in cfg.kappa.conventions() {
                let k = kappa(&ops.v, conv, "V", level);
                match conv {
                    KappaConvention::SingularValues => rec.kappa_v_sv = k,
                    KappaConvention::Eigenvalues => rec.kappa_v_eig = k,
                }
            }
        }
        rec.margin_v = Some(ellipticity_margin(&ops.v));
        rec.margin_d = Some(ellipticity_margin(&ops.d));
    }
    rec.seconds = start.elapsed().as_secs_f64();
    log::info!(
        "level {level}: N = {n}, error = {:.4e}, {:.2}s",
        rec.l2_error,
        rec.seconds
    );
    Ok(LevelResult {
        record: rec,
        flux,
        operators: ops,
        rhs,
    })
}

#[derive(Debug, Clone, Default)]
pub struct StudyOutput {
    pub records: Vec<StudyRecord>,
    pub meshes: Vec<BoundaryMesh>,
    pub meta: Vec<(String, String)>,
    pub notes: Vec<String>,
    /// `(name, matrix)` pairs kept when matrix dumps are requested.
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

fn fill_eoc(records: &mut [StudyRecord]) {
    let errs: Vec<f64> = records.iter().map(|r| r.l2_error).collect();
    for (r, e) in records.iter_mut().skip(1).zip(eoc(&errs)) {
        r.eoc = e;
    }
}

fn keep_matrices(out: &mut StudyOutput, level: usize, res: &LevelResult) {
    for (name, m) in [("V", &res.operators.v), ("K", &res.operators.k), ("D", &res.operators.d)] {
        out.matrices.push((format!("{name}_L{level}"), m.clone()));
    }
}

/// Uniform refinement `L = 0..=levels`.
pub fn run_uniform_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate(StudyKind::Uniform)?;
    let prob = cfg.problem()?;
    let series = cfg.reference()?;
    let mut out = StudyOutput {
        meta: cfg.metadata(),
        ..Default::default()
    };
    out.meta.push(("study".into(), "uniform".into()));
    for level in 0..=cfg.levels {
        let mesh = BoundaryMesh::uniform(Interval::unit(), cfg.horizon, level)?;
        let res = analyse_mesh(cfg, &mesh, &prob, &series, level)
            .map_err(|e| e.at(format!("uniform level {level}")))?;
        if cfg.dump_matrices {
            keep_matrices(&mut out, level, &res);
        }
        out.records.push(res.record);
        out.meshes.push(mesh);
    }
    fill_eoc(&mut out.records);
    Ok(out)
}

/// `||w_fine - w_coarse||_{L2(sigma_l)}` for each coarse element, where
/// `fine` lives on the uniform refinement of `coarse`'s mesh.
pub fn hierarchical_indicators(coarse: &DiscreteFlux, fine: &DiscreteFlux) -> Result<Vec<f64>> {
    let cm = coarse.mesh();
    let fm = fine.mesh();
    if fm.len() != 2 * cm.len() {
        return Err(Error::InvalidMesh("fine flux must live on the uniform refinement".into()));
    }
    let (wc, wf) = (coarse.coefficients(), fine.coefficients());
    Ok(cm
        .elements()
        .map(|e| {
            // uniform refinement maps element i to children 2i and 2i + 1
            (0..2)
                .map(|c| {
                    let child = fm.element(2 * e.index + c);
                    (wf[child.index] - wc[e.index]).powi(2) * child.size()
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

fn solve_direct(mesh: &BoundaryMesh, prob: &Problem, quad: &QuadratureConfig) -> Result<DiscreteFlux> {
    let v = crate::galerkin::assemble_v(mesh, prob.params);
    let f = assemble_rhs(mesh, prob, quad)?;
    DiscreteFlux::new(mesh.clone(), direct_solve(&v, &f)?)
}

/// Adaptive loop: solve, estimate with the two-level indicator, mark with
/// the maximum strategy, bisect.
pub fn run_adaptive_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate(StudyKind::Adaptive)?;
    let prob = cfg.problem()?;
    let series = cfg.reference()?;
    let mut out = StudyOutput {
        meta: cfg.metadata(),
        ..Default::default()
    };
    out.meta.push(("study".into(), "adaptive".into()));
    out.meta.push((
        "indicator".into(),
        "two-level: L2 norm on each element of the difference to the solution on the uniformly refined mesh".into(),
    ));
    out.meta.push(("marking".into(), "maximum strategy, eta >= theta * max eta".into()));
    let mut mesh = BoundaryMesh::uniform(Interval::unit(), cfg.horizon, 0)?;
    let mut best_error = f64::INFINITY;
    let mut since_best = 0;
    for step in 0..=cfg.levels {
        let res = analyse_mesh(cfg, &mesh, &prob, &series, step)
            .map_err(|e| e.at(format!("adaptive step {step}")))?;
        if res.record.l2_error < best_error {
            best_error = res.record.l2_error;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best == 3 {
                let msg = format!("error stagnated for 3 steps at step {step}");
                log::warn!("{msg}");
                out.notes.push(msg);
            }
        }
        if cfg.dump_matrices {
            keep_matrices(&mut out, step, &res);
        }
        let n = res.record.n;
        out.records.push(res.record);
        out.meshes.push(mesh.clone());
        if step == cfg.levels || cfg.max_n.is_some_and(|m| n > m) {
            break;
        }
        let fine = solve_direct(&mesh.refine_uniform(), &prob, &cfg.quadrature)?;
        let eta = hierarchical_indicators(&res.flux, &fine)?;
        mesh = mesh.refine_adaptive(&eta, cfg.theta)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct InteriorSample {
    pub x: f64,
    pub t: f64,
    pub computed: f64,
    pub reference: f64,
}

#[derive(Debug, Clone)]
pub struct SingleSolve {
    pub record: StudyRecord,
    pub flux: DiscreteFlux,
    pub samples: Vec<InteriorSample>,
    /// Mass-weighted norm of the second boundary integral equation residual.
    pub second_bie_residual: f64,
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

/// Solves on the uniform mesh of the given level and samples the
/// representation formula at `cfg.points`.
pub fn run_single_solve(cfg: &ExperimentConfig, level: usize) -> Result<SingleSolve> {
    cfg.validate(StudyKind::Single)?;
    if level > MAX_UNIFORM_LEVEL {
        return Err(Error::InvalidParameter(format!("level must be at most {MAX_UNIFORM_LEVEL}")));
    }
    let prob = cfg.problem()?;
    for &(x, t) in &cfg.points {
        if !(x > 0.0 && x < 1.0 && t > 0.0 && t <= cfg.horizon) {
            return Err(Error::InvalidParameter(format!(
                "point ({x}, {t}) lies outside (0, 1) x (0, {}]",
                cfg.horizon
            )));
        }
    }
    let series = cfg.reference()?;
    let mesh = BoundaryMesh::uniform(Interval::unit(), cfg.horizon, level)?;
    let res = analyse_mesh(cfg, &mesh, &prob, &series, level)?;
    let samples = cfg
        .points
        .iter()
        .map(|&(x, t)| {
            Ok(InteriorSample {
                x,
                t,
                computed: evaluate_interior(x, t, &res.flux, &prob, &cfg.quadrature)?,
                reference: series.interior(x, t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r = assemble_second_bie_residual(&mesh, &prob, &res.flux, &cfg.quadrature)?;
    let mut matrices = Vec::new();
    if cfg.dump_matrices {
        matrices.push((format!("V_L{level}"), res.operators.v.clone()));
        matrices.push((format!("K_L{level}"), res.operators.k.clone()));
        matrices.push((format!("D_L{level}"), res.operators.d.clone()));
    }
    Ok(SingleSolve {
        record: res.record,
        second_bie_residual: mass_weighted_norm(&mesh, &r),
        flux: res.flux,
        samples,
        matrices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Structural checks on the uniform meshes up to `min(levels, 6)`.
pub fn check_invariants(cfg: &ExperimentConfig) -> Result<Vec<InvariantCheck>> {
    cfg.validate(StudyKind::Uniform)?;
    let prob = cfg.problem()?;
    let top = cfg.levels.min(6);
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(InvariantCheck {
            name: name.into(),
            passed,
            detail,
        })
    };
    let mut residuals = Vec::new();
    for level in 0..=top {
        let mesh = BoundaryMesh::uniform(Interval::unit(), cfg.horizon, level)?;
        let ops = OperatorMatrices::assemble(&mesh, prob.params);
        let els: Vec<_> = mesh.elements().collect();
        let causal = els.iter().all(|l| {
            els.iter()
                .filter(|k| l.t_end <= k.t_begin)
                .all(|k| [&ops.v, &ops.k, &ops.d].iter().all(|m| m[(l.index, k.index)] == 0.0))
        });
        push("causality", causal, format!("level {level}"));
        let same_side = els
            .iter()
            .all(|l| els.iter().filter(|k| k.side == l.side).all(|k| ops.k[(l.index, k.index)] == 0.0));
        push("double layer vanishes on one side", same_side, format!("level {level}"));
        push(
            "adjoint double layer equals double layer",
            ops.adjoint_double_layer() == ops.k,
            format!("level {level}"),
        );
        let (mv, md) = (ellipticity_margin(&ops.v), ellipticity_margin(&ops.d));
        push("V symmetric part positive definite", mv > 0.0, format!("level {level}: {mv:.6e}"));
        push("D symmetric part positive definite", md > 0.0, format!("level {level}: {md:.6e}"));
        let rhs = assemble_rhs(&mesh, &prob, &cfg.quadrature)?;
        let x = direct_solve(&ops.v, &rhs)?;
        let gcfg = GmresConfig {
            tol: cfg.tol,
            max_iter: mesh.len(),
        };
        let mut agree = true;
        let mut worst = 0.0_f64;
        for kind in PreconditionerKind::ALL {
            let rep = gmres(&ops.v, &rhs, &gcfg, &build_preconditioner(kind, &ops)?)?;
            let monotone = rep.relative_residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10));
            let diff = (&rep.solution - &x).amax() / x.amax().max(f64::MIN_POSITIVE);
            worst = worst.max(diff);
            agree &= rep.converged && monotone && diff <= 1e3 * cfg.tol;
        }
        push("GMRES agrees with LU", agree, format!("level {level}: max relative difference {worst:.3e}"));
        if level >= 3 {
            let flux = DiscreteFlux::new(mesh.clone(), x)?;
            let r = assemble_second_bie_residual(&mesh, &prob, &flux, &cfg.quadrature)?;
            residuals.push((level, mass_weighted_norm(&mesh, &r)));
        }
    }
    if residuals.len() >= 2 {
        let decreasing = residuals.windows(2).all(|w| w[1].1 < w[0].1);
        let detail = residuals
            .iter()
            .map(|(l, r)| format!("L{l}: {r:.4e}"))
            .collect::<Vec<_>>()
            .join(", ");
        push("second integral equation residual decreases", decreasing, detail);
    }
    Ok(checks)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn fmt_opt_u(v: Option<usize>) -> String {
    v.map(|i| i.to_string()).unwrap_or_default()
}

pub const CSV_COLUMNS: [&str; 17] = [
    "L",
    "N",
    "h_min",
    "h_max",
    "error",
    "eoc",
    "kappa_V_sv",
    "kappa_V_eig",
    "it_none",
    "kappa_diag_sv",
    "kappa_diag_eig",
    "it_diag",
    "kappa_calderon_sv",
    "kappa_calderon_eig",
    "it_calderon",
    "margin_V",
    "margin_D",
];

/// CSV with `#`-prefixed metadata lines, a header row and 17 significant digits.
pub fn to_csv(records: &[StudyRecord], meta: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str(&CSV_COLUMNS.join(","));
    s.push('\n');
    for r in records {
        let row = [
            r.level.to_string(),
            r.n.to_string(),
            fmt_f(r.h_min),
            fmt_f(r.h_max),
            fmt_f(r.l2_error),
            fmt_opt(r.eoc),
            fmt_opt(r.kappa_v_sv),
            fmt_opt(r.kappa_v_eig),
            fmt_opt_u(r.iters_none),
            fmt_opt(r.kappa_diag_sv),
            fmt_opt(r.kappa_diag_eig),
            fmt_opt_u(r.iters_diag),
            fmt_opt(r.kappa_calderon_sv),
            fmt_opt(r.kappa_calderon_eig),
            fmt_opt_u(r.iters_calderon),
            fmt_opt(r.margin_v),
            fmt_opt(r.margin_d),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn md_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn md_it(v: Option<usize>) -> String {
    v.map(|i| i.to_string()).unwrap_or_else(|| "-".into())
}

fn kappa_pair(sv: Option<f64>, eig: Option<f64>) -> Option<f64> {
    sv.or(eig)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| format!("{}:", "-".repeat(w.saturating_sub(1).max(1)))).collect();
            let _ = writeln!(s, "| {} |", rule.join(" | "));
        }
    }
    s
}

/// Markdown table with the uniform study columns; kappa uses singular
/// values when available.
pub fn to_markdown_uniform(records: &[StudyRecord]) -> String {
    let mut rows = vec![[
        "L",
        "N",
        "‖w − w_h‖_L2(Σ)",
        "eoc",
        "κ(V_h)",
        "It.",
        "κ(C_V⁻¹V_h)",
        "It.",
    ]
    .map(String::from)
    .to_vec()];
    for r in records {
        rows.push(vec![
            r.level.to_string(),
            r.n.to_string(),
            format!("{:.3}", r.l2_error),
            md_opt(r.eoc, 3),
            md_opt(kappa_pair(r.kappa_v_sv, r.kappa_v_eig), 3),
            md_it(r.iters_none),
            md_opt(kappa_pair(r.kappa_calderon_sv, r.kappa_calderon_eig), 3),
            md_it(r.iters_calderon),
        ]);
    }
    aligned(&rows)
}

/// Markdown table with the adaptive study columns.
pub fn to_markdown_adaptive(records: &[StudyRecord]) -> String {
    let mut rows = vec![[
        "L",
        "N",
        "‖w − w_h‖_L2(Σ)",
        "κ(V_h)",
        "It.",
        "κ(diag(V_h)⁻¹V_h)",
        "It.",
        "κ(C_V⁻¹V_h)",
        "It.",
    ]
    .map(String::from)
    .to_vec()];
    for r in records {
        rows.push(vec![
            r.level.to_string(),
            r.n.to_string(),
            format!("{:.3}", r.l2_error),
            md_opt(kappa_pair(r.kappa_v_sv, r.kappa_v_eig), 2),
            md_it(r.iters_none),
            md_opt(kappa_pair(r.kappa_diag_sv, r.kappa_diag_eig), 3),
            md_it(r.iters_diag),
            md_opt(kappa_pair(r.kappa_calderon_sv, r.kappa_calderon_eig), 3),
            md_it(r.iters_calderon),
        ]);
    }
    aligned(&rows)
}

/// Space separated matrix rows with 17 significant digits.
pub fn matrix_to_text(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f(*v)).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Writes `table{index}.csv`, `table{index}.md`, `mesh_L*.txt`, `meta.txt`
/// and, when present, matrix dumps into `dir`.
pub fn write_study(dir: &Path, index: u32, out: &StudyOutput, markdown: &str) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(format!("table{index}.csv")), to_csv(&out.records, &out.meta))?;
    write_file(&dir.join(format!("table{index}.md")), markdown)?;
    for (rec, mesh) in out.records.iter().zip(&out.meshes) {
        write_file(&dir.join(format!("mesh_L{}.txt", rec.level)), mesh.to_text())?;
    }
    let mut meta = String::new();
    for (k, v) in &out.meta {
        let _ = writeln!(meta, "{k}: {v}");
    }
    for r in &out.records {
        let _ = writeln!(meta, "seconds_L{}: {:.3}", r.level, r.seconds);
    }
    for n in &out.notes {
        let _ = writeln!(meta, "note: {n}");
    }
    let _ = writeln!(meta, "version: {}", env!("CARGO_PKG_VERSION"));
    write_file(&dir.join("meta.txt"), meta)?;
    for (name, m) in &out.matrices {
        write_file(&dir.join(format!("{name}.txt")), matrix_to_text(m))?;
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_parsing() {
        let cfg = ExperimentConfig::from_key_values(
            "# comment\nexample = 2\nalpha=20\nlevels = 3 # inline\nprecond = diag,calderon\nkappa = sv\npoints = 0.2,0.1; 0.7,0.9\n",
        )
        .unwrap();
        assert_eq!(cfg.example, Example::Two);
        assert_eq!(cfg.alpha, 20.0);
        assert_eq!(cfg.levels, 3);
        assert_eq!(
            cfg.preconditioners,
            vec![PreconditionerKind::Diagonal, PreconditionerKind::Calderon]
        );
        assert_eq!(cfg.kappa, KappaSelection::SingularValues);
        assert_eq!(cfg.points, vec![(0.2, 0.1), (0.7, 0.9)]);
        assert!(matches!(
            ExperimentConfig::from_key_values("alpha 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_key_values("\nfoo = 1"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert_eq!(parse_preconditioners("all").unwrap(), PreconditionerKind::ALL.to_vec());
        assert!(parse_preconditioners("").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate(StudyKind::Uniform).is_ok());
        cfg.levels = 12;
        assert!(cfg.validate(StudyKind::Uniform).is_err());
        assert!(cfg.validate(StudyKind::Adaptive).is_ok());
        cfg.levels = 2;
        cfg.tol = 1.0;
        assert!(cfg.validate(StudyKind::Uniform).is_err());
        cfg.tol = 1e-8;
        cfg.theta = 0.0;
        assert!(cfg.validate(StudyKind::Adaptive).is_err());
    }

    #[test]
    fn single_level_uniform_study() {
        let cfg = ExperimentConfig {
            levels: 0,
            ..Default::default()
        };
        let out = run_uniform_study(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.n, 2);
        assert_eq!(r.iters_none, Some(1));
        assert_eq!(r.iters_calderon, Some(1));
        assert!(r.eoc.is_none());
        let csv = to_csv(&out.records, &out.meta);
        let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), CSV_COLUMNS.len());
        assert_eq!(lines[1].split(',').count(), CSV_COLUMNS.len());
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = ExperimentConfig {
            levels: 3,
            ..Default::default()
        };
        let a = run_uniform_study(&cfg).unwrap();
        let b = run_uniform_study(&cfg).unwrap();
        assert_eq!(to_csv(&a.records, &a.meta), to_csv(&b.records, &b.meta));
    }

    #[test]
    fn adaptive_sizes_increase() {
        let cfg = ExperimentConfig {
            example: Example::Two,
            levels: 5,
            ..Default::default()
        };
        let out = run_adaptive_study(&cfg).unwrap();
        assert_eq!(out.records.len(), 6);
        for w in out.records.windows(2) {
            assert!(w[1].n > w[0].n);
        }
    }

    #[test]
    fn full_marking_with_flat_indicators_is_uniform() {
        let mesh = BoundaryMesh::uniform(Interval::unit(), 1.0, 2).unwrap();
        let refined = mesh.refine_adaptive(&vec![1.0; mesh.len()], 1.0).unwrap();
        assert_eq!(refined, mesh.refine_uniform());
    }

    #[test]
    fn single_solve_rejects_outside_points() {
        let cfg = ExperimentConfig {
            points: vec![(1.5, 0.2)],
            ..Default::default()
        };
        assert!(run_single_solve(&cfg, 2).is_err());
        let cfg = ExperimentConfig {
            points: vec![(0.5, 0.0)],
            ..Default::default()
        };
        assert!(run_single_solve(&cfg, 2).is_err());
    }

    #[test]
    fn markdown_shape() {
        let cfg = ExperimentConfig {
            levels: 1,
            ..Default::default()
        };
        let out = run_uniform_study(&cfg).unwrap();
        let md = to_markdown_uniform(&out.records);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains("---") || lines[1].contains("-:"));
        assert!(lines.iter().all(|l| l.starts_with('|') && l.ends_with('|')));
    }
}
