use clap::{Args, Parser, Subcommand};
use heatbem::analysis::{best_approximation, DEFAULT_ERROR_ORDER};
use heatbem::study::{
    check_invariants, create_dir, matrix_to_text, run_adaptive_study, run_single_solve, run_uniform_study,
    to_markdown_adaptive, to_markdown_uniform, write_file, write_study, ExperimentConfig,
};
use heatbem::{Error, Result};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatbem", version, about = "Space-time boundary element studies for the 1D heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform refinement study (writes table1.*).
    StudyUniform(Options),
    /// Adaptive refinement study (writes table2.*).
    StudyAdaptive(Options),
    /// Single solve with interior samples.
    Solve {
        #[command(flatten)]
        options: Options,
        /// Uniform level of the mesh.
        #[arg(long, default_value_t = 6)]
        level: usize,
        /// Interior sample point `x,t`; repeatable.
        #[arg(long = "point", value_name = "X,T")]
        points: Vec<String>,
    },
    /// Structural checks on small uniform meshes.
    CheckInvariants(Options),
}

#[derive(Args, Clone, Default)]
struct Options {
    /// Plain-text `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    example: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Highest uniform level, or number of adaptive steps.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// none, diag, calderon or all (comma separated lists allowed).
    #[arg(long)]
    precond: Option<String>,
    /// Marking parameter of the maximum strategy.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_matrices: bool,
    /// sv, eig or both.
    #[arg(long)]
    kappa: Option<String>,
    /// Skip condition numbers above this system size.
    #[arg(long)]
    max_kappa_n: Option<usize>,
    /// Stop the adaptive loop after the first step with more unknowns.
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

fn build_config(opts: &Options, example: u32, levels: usize, out: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("example", &example.to_string())?;
    cfg.levels = levels;
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read config file {}: {e}", path.display()))
        })?;
        cfg.apply_key_values(&text)?;
    }
    let flags: [(&str, Option<String>); 11] = [
        ("example", opts.example.map(|v| v.to_string())),
        ("alpha", opts.alpha.map(|v| v.to_string())),
        ("levels", opts.levels.map(|v| v.to_string())),
        ("tol", opts.tol.map(|v| v.to_string())),
        ("precond", opts.precond.clone()),
        ("theta", opts.theta.map(|v| v.to_string())),
        ("kappa", opts.kappa.clone()),
        ("max-kappa-n", opts.max_kappa_n.map(|v| v.to_string())),
        ("max-n", opts.max_n.map(|v| v.to_string())),
        ("max-iter", opts.max_iter.map(|v| v.to_string())),
        ("out", opts.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if opts.dump_matrices {
        cfg.dump_matrices = true;
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from(out));
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn study_uniform(opts: &Options) -> Result<()> {
    let cfg = build_config(opts, 1, 8, "heatbem-out/uniform")?;
    let out = run_uniform_study(&cfg)?;
    let md = to_markdown_uniform(&out.records);
    write_study(&out_dir(&cfg), 1, &out, &md)?;
    print!("{md}");
    println!("wrote {}", out_dir(&cfg).display());
    Ok(())
}

fn study_adaptive(opts: &Options) -> Result<()> {
    let cfg = build_config(opts, 2, 13, "heatbem-out/adaptive")?;
    let out = run_adaptive_study(&cfg)?;
    let md = to_markdown_adaptive(&out.records);
    write_study(&out_dir(&cfg), 2, &out, &md)?;
    print!("{md}");
    for n in &out.notes {
        println!("note: {n}");
    }
    println!("wrote {}", out_dir(&cfg).display());
    Ok(())
}

fn solve(opts: &Options, level: usize, points: &[String]) -> Result<()> {
    let mut cfg = build_config(opts, 1, level, "heatbem-out/solve")?;
    if !points.is_empty() {
        cfg.set("points", &points.join(";"))?;
    }
    let res = run_single_solve(&cfg, level)?;
    let dir = out_dir(&cfg);
    create_dir(&dir)?;

    let series = cfg.reference()?;
    let best = best_approximation(res.flux.mesh(), &series, DEFAULT_ERROR_ORDER);
    let mut flux = String::from("index,side,t_begin,t_end,w_h,w_ref_mean\n");
    for e in res.flux.mesh().elements() {
        let _ = writeln!(
            flux,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.index,
            e.side.tag(),
            e.t_begin,
            e.t_end,
            res.flux.coefficients()[e.index],
            best.coefficients()[e.index]
        );
    }
    write_file(&dir.join("flux.csv"), flux)?;

    let mut interior = String::from("x,t,u_h,u_ref,abs_error\n");
    for s in &res.samples {
        let _ = writeln!(
            interior,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.x,
            s.t,
            s.computed,
            s.reference,
            (s.computed - s.reference).abs()
        );
    }
    write_file(&dir.join("interior.csv"), interior)?;
    write_file(&dir.join(format!("mesh_L{level}.txt")), res.flux.mesh().to_text())?;
    let mut meta = String::new();
    for (k, v) in cfg.metadata() {
        let _ = writeln!(meta, "{k}: {v}");
    }
    let _ = writeln!(meta, "level: {level}");
    let _ = writeln!(meta, "l2_error: {:.16e}", res.record.l2_error);
    let _ = writeln!(meta, "second_bie_residual: {:.16e}", res.second_bie_residual);
    write_file(&dir.join("meta.txt"), meta)?;
    for (name, m) in &res.matrices {
        write_file(&dir.join(format!("{name}.txt")), matrix_to_text(m))?;
    }

    println!("level {level}, N = {}", res.record.n);
    println!("L2 flux error: {:.6e}", res.record.l2_error);
    println!("second integral equation residual: {:.6e}", res.second_bie_residual);
    let iters = [
        ("none", res.record.iters_none),
        ("diag", res.record.iters_diag),
        ("calderon", res.record.iters_calderon),
    ];
    for (name, it) in iters {
        if let Some(it) = it {
            println!("GMRES iterations ({name}): {it}");
        }
    }
    for s in &res.samples {
        println!(
            "u({}, {}) = {:.10e} (reference {:.10e}, error {:.3e})",
            s.x,
            s.t,
            s.computed,
            s.reference,
            (s.computed - s.reference).abs()
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn invariants(opts: &Options) -> Result<bool> {
    let cfg = build_config(opts, 1, 6, "heatbem-out/invariants")?;
    let checks = check_invariants(&cfg)?;
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(all)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::StudyUniform(o) => study_uniform(o).map(|_| true),
        Command::StudyAdaptive(o) => study_adaptive(o).map(|_| true),
        Command::Solve { options, level, points } => solve(options, *level, points).map(|_| true),
        Command::CheckInvariants(o) => invariants(o),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
