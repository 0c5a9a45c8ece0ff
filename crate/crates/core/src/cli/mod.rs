//! Command-line front end: argument parsing, configuration merging, the
//! subcommand drivers, and exit-code policy (0 success, 1 invalid input,
//! 2 numerical failure).

pub mod config;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::collapse::{
    analytic_p, analytic_psi_field, analytic_trajectory, classify_outcome, collapse_time, collapsing_force,
    collapsing_potential, evolve_collapse_pointwise_with, CollapseError, CollapseEvent, CollapseParams,
    CollapseTrajectory, Outcome, PointwiseOptions, Sheet,
};
use crate::cqhj::{
    combined_evolve, discrete_plane_wave_energy, evolve_free, norms, reference_schrodinger, EvolutionConfig,
    EvolutionError, FieldEdges, ReferenceBoundary, Scheme, Snapshots,
};
use crate::experiments::{
    born_ensemble, builtin_records, constraints_table, equivalence_sweep, load_records, scaling_sweep, EnsembleConfig,
    EpsilonDistribution, EquivalenceCase, EquivalenceConfig, Execution, ExperimentError,
};
use crate::grid::{ComplexField, FieldKind, GridError, InitialState, PhysicalConstants, SpatialGrid};

use config::{
    resolve, BornArgs, CaseArg, CollapseArgs, CombinedArgs, ConstraintsArgs, DistributionArg, EdgesArg,
    EquivalenceArgs, ExecutionArg, FieldArgs, Initial, Method, RunConfig, ScalingArgs, SchemeArg,
};
use output::{write_outputs, Cell, CsvTable, Format, OutputError, Report};
use svg::{Plot, Series};

/// Environment variable consulted for the ensemble seed when neither the
/// command line nor the config file sets one.
pub const SEED_ENV: &str = "COLLAPSAR_SEED";

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Validation(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::NodeTooSmall { .. } | GridError::NonFinite { .. } | GridError::ZeroField => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CollapseError> for CliError {
    fn from(e: CollapseError) -> Self {
        match e {
            CollapseError::InvalidParams(_) | CollapseError::InvalidArgument(_) => CliError::Validation(e.to_string()),
            CollapseError::Grid(g) => g.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EvolutionError> for CliError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::InvalidConfig(_) | EvolutionError::StepTooLarge { .. } => {
                CliError::Validation(e.to_string())
            }
            EvolutionError::Grid(g) => g.into(),
            EvolutionError::Collapse(c) => c.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(_)
            | ExperimentError::InsufficientSpan { .. }
            | ExperimentError::FitDegenerate
            | ExperimentError::Records { .. } => CliError::Validation(e.to_string()),
            ExperimentError::Collapse(c) => c.into(),
            ExperimentError::Grid(g) => g.into(),
            ExperimentError::Evolution { label, source } => match CliError::from(source) {
                CliError::Validation(m) => CliError::Validation(format!("case `{label}`: {m}")),
                other => CliError::Numerical(format!("case `{label}`: {other}")),
            },
            ExperimentError::Diverged { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "collapsar", version, about = "Collapse dynamics of the complex momentum field")]
pub struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default collapsar-out).
    #[arg(long, global = true)]
    pub out_dir: Option<String>,
    /// Comma-separated output formats.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single pointwise collapse trajectory with wave-function snapshots.
    #[command(allow_negative_numbers = true)]
    Collapse(CollapseArgs),
    /// Free evolution of the momentum field, or the wave-function reference.
    #[command(allow_negative_numbers = true)]
    EvolveFree(FieldArgs),
    /// Free evolution plus the collapsing force at every node.
    #[command(allow_negative_numbers = true)]
    Combined(CombinedArgs),
    /// Outcome statistics over an ensemble of perturbations.
    #[command(allow_negative_numbers = true)]
    Born(BornArgs),
    /// Collapse time against g·q² with a log-log fit.
    #[command(allow_negative_numbers = true)]
    Scaling(ScalingArgs),
    /// Experimental constraints on the collapse time.
    #[command(allow_negative_numbers = true)]
    Constraints(ConstraintsArgs),
    /// Momentum-field evolution against the wave-function reference.
    #[command(allow_negative_numbers = true)]
    Equivalence(EquivalenceArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Collapse(_) => "collapse",
            Command::EvolveFree(_) => "evolve-free",
            Command::Combined(_) => "combined",
            Command::Born(_) => "born",
            Command::Scaling(_) => "scaling",
            Command::Constraints(_) => "constraints",
            Command::Equivalence(_) => "equivalence",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Collapse(a) => a.apply(cfg),
            Command::EvolveFree(a) => a.apply(cfg),
            Command::Combined(a) => a.apply(cfg),
            Command::Born(a) => a.apply(cfg),
            Command::Scaling(a) => a.apply(cfg),
            Command::Constraints(a) => a.apply(cfg),
            Command::Equivalence(a) => a.apply(cfg),
        }
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Fully resolved configuration, as written to the manifest.
    pub config: RunConfig,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            println!("{}", out.summary);
            if let Some(dir) = &out.config.out_dir {
                println!("wrote {} files to {dir}", out.files.len());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<RunOutput, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    if let Some(existing) = &cfg.command {
        if existing != name {
            return Err(CliError::Validation(format!(
                "--config: file is for `{existing}`, not `{name}`"
            )));
        }
    }
    cfg.command = Some(name.to_string());
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if let Some(formats) = &cli.format {
        cfg.formats = Some(formats.clone());
    }
    cli.command.apply(&mut cfg);
    let out_dir = resolve(&mut cfg.out_dir, "collapsar-out".to_string());
    let mut formats = resolve(&mut cfg.formats, Format::all());
    formats.sort();
    formats.dedup();
    cfg.formats = Some(formats.clone());

    let (report, summary) = match &cli.command {
        Command::Collapse(_) => run_collapse(&mut cfg)?,
        Command::EvolveFree(_) => run_field(&mut cfg, false)?,
        Command::Combined(_) => run_field(&mut cfg, true)?,
        Command::Born(_) => run_born(&mut cfg)?,
        Command::Scaling(_) => run_scaling(&mut cfg)?,
        Command::Constraints(_) => run_constraints(&mut cfg)?,
        Command::Equivalence(_) => run_equivalence(&mut cfg)?,
    };
    let dir = Path::new(&out_dir);
    let mut files = write_outputs(&report, &formats, dir)?;
    let manifest = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest, cfg.to_manifest()).map_err(|source| OutputError::Io {
        path: manifest.display().to_string(),
        source,
    })?;
    files.push(manifest);
    Ok(RunOutput {
        config: cfg,
        files,
        summary,
    })
}

fn invalid(flag: &str, expected: &str, got: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("--{flag}: expected {expected}, got {got}"))
}

fn positive(flag: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(flag, "a finite value > 0", v))
    }
}

fn finite(flag: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(flag, "a finite value", v))
    }
}

fn open_unit(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(invalid(flag, "a value in (0, 1)", v))
    }
}

fn at_least(flag: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(invalid(flag, &format!("an integer >= {min}"), v))
    }
}

fn constants(cfg: &mut RunConfig) -> Result<PhysicalConstants, CliError> {
    let hbar = positive("hbar", resolve(&mut cfg.hbar, 1.0))?;
    let mass = positive("mass", resolve(&mut cfg.mass, 1.0))?;
    Ok(PhysicalConstants::new(hbar, mass)?)
}

fn collapse_params(cfg: &mut RunConfig, g_default: f64, q_default: f64) -> Result<CollapseParams, CliError> {
    let g = positive("g", resolve(&mut cfg.g, g_default))?;
    let q = positive("q", resolve(&mut cfg.q, q_default))?;
    Ok(CollapseParams::new(g, q)?)
}

fn curve(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<(f64, f64)> {
    (0..samples)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            (x, f(x))
        })
        .collect()
}

/// Plots of V_c(p) and F_c(p) along real p ∈ [−2q, 2q].
pub fn force_law_plots(params: &CollapseParams, samples: usize) -> Vec<Plot> {
    let q = params.q();
    let potential = curve(|p| collapsing_potential(Complex64::new(p, 0.0), params).re, -2.0 * q, 2.0 * q, samples);
    let force = curve(|p| collapsing_force(Complex64::new(p, 0.0), params).re, -2.0 * q, 2.0 * q, samples);
    vec![
        Plot {
            name: "collapsing_potential".into(),
            title: "Collapsing potential".into(),
            x_label: "p".into(),
            y_label: "V_c".into(),
            series: vec![Series::line("V_c(p)", potential)],
            log_x: false,
            log_y: false,
        },
        Plot {
            name: "collapsing_force".into(),
            title: "Collapsing force".into(),
            x_label: "p".into(),
            y_label: "F_c".into(),
            series: vec![Series::line("F_c(p)", force)],
            log_x: false,
            log_y: false,
        },
    ]
}

fn event_label(traj: &CollapseTrajectory, t: f64) -> String {
    traj.events
        .iter()
        .filter(|e| e.time() == t)
        .map(CollapseEvent::label)
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Serialize)]
struct CollapseSummary {
    g: f64,
    q: f64,
    tau_c_nominal: f64,
    p0_re: f64,
    p0_im: f64,
    method: Method,
    outcome: Outcome,
    final_t: f64,
    final_re_p: f64,
    final_im_p: f64,
    converged_at: Option<f64>,
    singularity_at: Option<f64>,
    collapse_time: Option<f64>,
    convergence_delta: f64,
    singularity_factor: f64,
    events: Vec<CollapseEvent>,
}

fn run_collapse(cfg: &mut RunConfig) -> Result<(Report, String), CliError> {
    let c = constants(cfg)?;
    let params = collapse_params(cfg, 1.0, 1.0)?;
    let p0 = Complex64::new(
        finite("p0-re", resolve(&mut cfg.p0_re, 0.1))?,
        finite("p0-im", resolve(&mut cfg.p0_im, 0.0))?,
    );
    let t_max = positive("t-max", resolve(&mut cfg.t_max, 10.0 * params.tau_c_nominal()))?;
    let dt = positive("dt", resolve(&mut cfg.dt, t_max / 1000.0))?;
    let opts = PointwiseOptions {
        convergence_delta: open_unit("delta", resolve(&mut cfg.delta, 1e-6))?,
        rel_tol: positive("rel-tol", resolve(&mut cfg.rel_tol, 1e-10))?,
        singularity_factor: {
            let v = resolve(&mut cfg.singularity_factor, 100.0);
            if !(v.is_finite() && v > 1.0) {
                return Err(invalid("singularity-factor", "a finite value > 1", v));
            }
            v
        },
    };
    let method = resolve(&mut cfg.method, Method::Numeric);
    let n = at_least("n", resolve(&mut cfg.n, 256), SpatialGrid::MIN_NODES)?;
    let snapshots = at_least("snapshots", resolve(&mut cfg.snapshots, 5), 1)?;

    let traj = match method {
        Method::Numeric => evolve_collapse_pointwise_with(p0, &params, dt, t_max, &opts)?,
        Method::Analytic => analytic_trajectory(p0, &params, dt, t_max, &opts)?,
    };
    let outcome = classify_outcome(p0);

    let mut report = Report::default();
    let mut table = CsvTable::new("trajectory", vec!["t", "re_p", "im_p", "branch_sign", "event"]);
    for i in 0..traj.times.len() {
        let t = traj.times[i];
        table.push(vec![
            t.into(),
            traj.p_values[i].re.into(),
            traj.p_values[i].im.into(),
            (traj.branch_sign[i] as i64).into(),
            event_label(&traj, t).into(),
        ]);
    }
    report.tables.push(table);

    let collapse_t = match outcome {
        Outcome::Undetermined => None,
        _ => Some(collapse_time(p0, &params, opts.convergence_delta)?.t_c),
    };
    let (final_t, final_p) = traj.last().expect("trajectory has the initial sample");
    report.add_json(
        "summary",
        &CollapseSummary {
            g: params.g(),
            q: params.q(),
            tau_c_nominal: params.tau_c_nominal(),
            p0_re: p0.re,
            p0_im: p0.im,
            method,
            outcome,
            final_t,
            final_re_p: final_p.re,
            final_im_p: final_p.im,
            converged_at: traj.converged_at(),
            singularity_at: traj.singularity_at(),
            collapse_time: collapse_t,
            convergence_delta: opts.convergence_delta,
            singularity_factor: opts.singularity_factor,
            events: traj.events.clone(),
        },
    );

    let finite_points = |f: fn(Complex64) -> f64| -> Vec<(f64, f64)> {
        traj.times
            .iter()
            .zip(&traj.p_values)
            .map(|(&t, &p)| (t, f(p)))
            .filter(|(_, v)| v.is_finite())
            .collect()
    };
    report.plots.push(Plot {
        name: "p_t".into(),
        title: "Momentum at the probe point".into(),
        x_label: "t".into(),
        y_label: "p".into(),
        series: vec![
            Series::line("Re p", finite_points(|p| p.re)),
            Series::line("Im p", finite_points(|p| p.im)),
        ],
        log_x: false,
        log_y: false,
    });
    report.plots.extend(force_law_plots(&params, 401));

    // wave-function snapshots of the two-plane-wave state with ħk = q, ε = Re p0
    if p0.re.abs() < params.q() {
        let state = InitialState::new(params.q() / c.hbar, p0.re)?;
        let grid = SpatialGrid::canonical(state.k, n)?;
        let sheet = Sheet::from_outcome(outcome).unwrap_or(Sheet::Plus);
        let mut psi_table = CsvTable::new("psi_snapshots", vec!["t", "x", "re_psi", "im_psi", "abs_psi"]);
        let mut series = Vec::new();
        for s in 0..snapshots {
            let t = if snapshots == 1 {
                t_max
            } else {
                t_max * s as f64 / (snapshots - 1) as f64
            };
            let psi = analytic_psi_field(&grid, t, &state, &params, &c, sheet)?;
            let mut pts = Vec::with_capacity(grid.len());
            for (x, v) in grid.nodes().zip(psi.values()) {
                psi_table.push(vec![t.into(), x.into(), v.re.into(), v.im.into(), v.norm().into()]);
                pts.push((x, v.norm()));
            }
            series.push(Series::line(&format!("t = {t:.3}"), pts));
        }
        report.tables.push(psi_table);
        report.plots.push(Plot {
            name: "psi_abs".into(),
            title: "|psi(x, t)|".into(),
            x_label: "x".into(),
            y_label: "|psi|".into(),
            series,
            log_x: false,
            log_y: false,
        });
    }

    let summary = format!(
        "collapse: outcome {:?}, p({}) = {} {:+}i{}",
        outcome,
        final_t,
        final_p.re,
        final_p.im,
        match (traj.converged_at(), traj.singularity_at()) {
            (_, Some(ts)) => format!(", singularity at t = {ts}"),
            (Some(tc), None) => format!(", converged at t = {tc}"),
            _ => String::new(),
        }
    );
    Ok((report, summary))
}

/// Grid and initial fields for the field-evolution subcommands.
struct FieldSetup {
    grid: SpatialGrid,
    initial: Initial,
    p0: ComplexField,
    psi0: ComplexField,
    plane_k: Option<f64>,
}

fn field_setup(cfg: &mut RunConfig, c: &PhysicalConstants, default_initial: Initial) -> Result<FieldSetup, CliError> {
    let initial = resolve(&mut cfg.initial, default_initial);
    let (default_lo, default_hi, default_n, k) = match initial {
        Initial::Gaussian => (-10.0, 10.0, 1024, None),
        Initial::PlaneWave => {
            let k = finite("k", resolve(&mut cfg.k, 1.0))?;
            if k == 0.0 {
                return Err(invalid("k", "a nonzero wavenumber", k));
            }
            (-10.0, 10.0, 1024, Some(k))
        }
        Initial::State => {
            let k = positive("k", resolve(&mut cfg.k, 1.0))?;
            let edge = std::f64::consts::FRAC_PI_4 / k;
            (-edge, edge, 256, Some(k))
        }
    };
    let n = at_least("n", resolve(&mut cfg.n, default_n), SpatialGrid::MIN_NODES)?;
    let x_min = finite("x-min", resolve(&mut cfg.x_min, default_lo))?;
    let x_max = finite("x-max", resolve(&mut cfg.x_max, default_hi))?;
    if x_max <= x_min {
        return Err(invalid("x-max", &format!("a value above --x-min = {x_min}"), x_max));
    }
    let grid = SpatialGrid::new(x_min, x_max, n)?;
    let (p0, psi0) = match initial {
        Initial::Gaussian => {
            let sigma0 = positive("sigma0", resolve(&mut cfg.sigma0, 1.0))?;
            let k0 = finite("k0", resolve(&mut cfg.k0, 2.0))?;
            let x0 = finite("x0", resolve(&mut cfg.x0, 0.0))?;
            let p = ComplexField::from_fn(grid, FieldKind::MomentumField, |x| {
                Complex64::new(c.hbar * k0, c.hbar * (x - x0) / (2.0 * sigma0 * sigma0))
            });
            let psi = ComplexField::from_fn(grid, FieldKind::WaveFunction, |x| {
                Complex64::new(-(x - x0) * (x - x0) / (4.0 * sigma0 * sigma0), k0 * x).exp()
            });
            (p, psi)
        }
        Initial::PlaneWave => {
            let k = k.expect("set above");
            let p = ComplexField::from_fn(grid, FieldKind::MomentumField, |_| Complex64::new(c.hbar * k, 0.0));
            let psi = ComplexField::from_fn(grid, FieldKind::WaveFunction, |x| Complex64::new(0.0, k * x).exp());
            (p, psi)
        }
        Initial::State => {
            let k = k.expect("set above");
            if grid.nodes().any(|x| (k * x).abs() >= std::f64::consts::FRAC_PI_2) {
                return Err(CliError::Validation(format!(
                    "--x-min/--x-max: the two-plane-wave state needs |k·x| < π/2 on every node (k = {k})"
                )));
            }
            let eps = finite("epsilon", resolve(&mut cfg.epsilon, 0.05 * c.hbar * k))?;
            let state = InitialState::new(k, eps)?;
            let alpha = state.phase_shift(c).map_err(|e| CliError::Validation(format!("--epsilon: {e}")))?;
            let mut values = Vec::with_capacity(n);
            for x in grid.nodes() {
                values.push(state.field_momentum(x, c)?);
            }
            let p = ComplexField::new(grid, values, FieldKind::MomentumField)?;
            let psi = ComplexField::from_fn(grid, FieldKind::WaveFunction, |x| {
                Complex64::new(k * x, alpha).cos() * std::f64::consts::SQRT_2
            });
            (p, psi)
        }
    };
    Ok(FieldSetup {
        grid,
        initial,
        p0,
        psi0,
        plane_k: if initial == Initial::PlaneWave { k } else { None },
    })
}

#[derive(Serialize)]
struct FieldSummary {
    command: &'static str,
    scheme: SchemeArg,
    initial: Initial,
    n: usize,
    dx: f64,
    dt: f64,
    t_final: f64,
    snapshots: usize,
    max_abs_initial: f64,
    max_abs_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    norm_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    norm_final: Option<f64>,
    /// max over nodes of |p − p_pointwise| / q at the final time.
    #[serde(skip_serializing_if = "Option::is_none")]
    max_deviation_from_pointwise: Option<f64>,
}

fn snapshot_table(series: &Snapshots, kind: FieldKind) -> CsvTable {
    let header = match kind {
        FieldKind::WaveFunction => vec!["t", "x", "re_psi", "im_psi"],
        _ => vec!["t", "x", "re_p", "im_p"],
    };
    let mut table = CsvTable::new("field", header);
    for (t, f) in series.times.iter().zip(&series.fields) {
        for (x, v) in f.grid().nodes().zip(f.values()) {
            table.push(vec![(*t).into(), x.into(), v.re.into(), v.im.into()]);
        }
    }
    table
}

fn profile_plot(series: &Snapshots, label: &str) -> Plot {
    let first = &series.fields[0];
    let last = series.last().expect("non-empty");
    let t_end = *series.times.last().expect("non-empty");
    let pts = |f: &ComplexField, part: fn(&Complex64) -> f64| -> Vec<(f64, f64)> {
        f.grid().nodes().zip(f.values()).map(|(x, v)| (x, part(v))).collect()
    };
    Plot {
        name: "field".into(),
        title: format!("{label} at t = 0 and t = {t_end:.4}"),
        x_label: "x".into(),
        y_label: label.into(),
        series: vec![
            Series::line("Re, t = 0", pts(first, |v| v.re)),
            Series::line("Im, t = 0", pts(first, |v| v.im)),
            Series::line("Re, final", pts(last, |v| v.re)),
            Series::line("Im, final", pts(last, |v| v.im)),
        ],
        log_x: false,
        log_y: false,
    }
}

fn run_field(cfg: &mut RunConfig, combined: bool) -> Result<(Report, String), CliError> {
    let c = constants(cfg)?;
    let setup = field_setup(cfg, &c, if combined { Initial::State } else { Initial::Gaussian })?;
    let params = if combined {
        let q_default = match setup.initial {
            Initial::Gaussian => c.hbar * cfg.k0.unwrap_or(2.0).abs().max(f64::MIN_POSITIVE),
            _ => c.hbar * cfg.k.unwrap_or(1.0).abs(),
        };
        // collapse well ahead of the free dynamics
        Some(collapse_params(cfg, 100.0, q_default)?)
    } else {
        None
    };
    let scheme = resolve(&mut cfg.scheme, SchemeArg::Rk4);
    if combined && scheme == SchemeArg::Reference {
        return Err(invalid("scheme", "rk4 (combined mode is explicit only)", "reference"));
    }
    let safety = positive("safety", resolve(&mut cfg.safety, 0.2))?;
    let dx = setup.grid.dx();
    let dt = positive("dt", resolve(&mut cfg.dt, safety * dx * dx * c.mass / c.hbar))?;
    let t_default = match &params {
        Some(p) => 5.0 * p.tau_c_nominal(),
        None => 0.5,
    };
    let t_max = finite("t-max", resolve(&mut cfg.t_max, t_default))?;
    if t_max < 0.0 {
        return Err(invalid("t-max", "a value >= 0", t_max));
    }
    let steps = (t_max / dt).ceil() as usize;
    let stride = at_least("stride", resolve(&mut cfg.stride, (steps / 10).max(1)), 1)?;
    let edges = resolve(&mut cfg.edges, EdgesArg::OneSided);

    let mut evo = EvolutionConfig::new(dt, t_max);
    evo.safety = safety;
    evo.stride = stride;
    evo.edges = match edges {
        EdgesArg::OneSided => FieldEdges::OneSided,
        EdgesArg::Pinned => FieldEdges::Pinned,
    };
    evo.scheme = match scheme {
        SchemeArg::Rk4 => Scheme::MethodOfLinesRk4,
        SchemeArg::Reference => Scheme::Reference,
    };
    evo.boundary = match setup.plane_k {
        Some(k) => ReferenceBoundary::Stationary {
            energy: discrete_plane_wave_energy(k, dx, &c),
        },
        None => ReferenceBoundary::Reflecting,
    };

    let (series, kind) = match (&params, scheme) {
        (Some(p), _) => (combined_evolve(&setup.p0, &evo, p, &c)?, FieldKind::MomentumField),
        (None, SchemeArg::Rk4) => (evolve_free(&setup.p0, &evo, &c)?, FieldKind::MomentumField),
        (None, SchemeArg::Reference) => (reference_schrodinger(&setup.psi0, &evo, &c)?, FieldKind::WaveFunction),
    };
    let last = series.last().expect("initial snapshot");
    let t_final = *series.times.last().expect("initial snapshot");
    let (norm_initial, norm_final) = if kind == FieldKind::WaveFunction {
        let n = norms(&series);
        (n.first().copied(), n.last().copied())
    } else {
        (None, None)
    };
    let deviation = match &params {
        Some(p) => {
            let mut worst = 0.0_f64;
            for (p0, v) in setup.p0.values().iter().zip(last.values()) {
                if let Ok((exact, _)) = analytic_p(*p0, t_final, p) {
                    worst = worst.max((v - exact).norm() / p.q());
                }
            }
            Some(worst)
        }
        None => None,
    };
    let command = if combined { "combined" } else { "evolve-free" };
    let summary = FieldSummary {
        command,
        scheme,
        initial: setup.initial,
        n: setup.grid.len(),
        dx,
        dt,
        t_final,
        snapshots: series.len(),
        max_abs_initial: series.fields[0].max_abs(),
        max_abs_final: last.max_abs(),
        norm_initial,
        norm_final,
        max_deviation_from_pointwise: deviation,
    };
    let mut report = Report::default();
    report.tables.push(snapshot_table(&series, kind));
    report.add_json("summary", &summary);
    report.plots.push(profile_plot(&series, if kind == FieldKind::WaveFunction { "psi" } else { "p" }));
    if let Some(p) = &params {
        report.plots.extend(force_law_plots(p, 401));
    }
    let mut line = format!(
        "{command}: {} snapshots to t = {t_final}, max|field| {} -> {}",
        series.len(),
        summary.max_abs_initial,
        summary.max_abs_final
    );
    if let Some(d) = deviation {
        line.push_str(&format!(", max deviation from pointwise collapse {d:.3e}·q"));
    }
    Ok((report, line))
}

fn run_born(cfg: &mut RunConfig) -> Result<(Report, String), CliError> {
    let params = collapse_params(cfg, 1.0, 1.0)?;
    let k = positive("k", resolve(&mut cfg.k, 1.0))?;
    let state = InitialState::symmetric(k)?;
    if cfg.seed.is_none() {
        if let Ok(text) = std::env::var(SEED_ENV) {
            let seed = text
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::Validation(format!("{SEED_ENV}: expected an unsigned integer, got `{text}`")))?;
            cfg.seed = Some(seed);
        }
    }
    let seed = resolve(&mut cfg.seed, 0);
    if seed > i64::MAX as u64 {
        return Err(invalid("seed", &format!("an integer in [0, {}]", i64::MAX), seed));
    }
    let mut ens = EnsembleConfig::new(at_least("trials", resolve(&mut cfg.trials, 10_000), 1)?, seed);
    ens.epsilon_scale = positive("epsilon-scale", resolve(&mut cfg.epsilon_scale, 1e-3))?;
    ens.distribution = match resolve(&mut cfg.distribution, DistributionArg::Uniform) {
        DistributionArg::Uniform => EpsilonDistribution::Uniform,
        DistributionArg::Gaussian => EpsilonDistribution::Gaussian,
        DistributionArg::Degenerate => EpsilonDistribution::Degenerate,
    };
    ens.execution = match resolve(&mut cfg.execution, ExecutionArg::Parallel) {
        ExecutionArg::Serial => Execution::Serial,
        ExecutionArg::Parallel => Execution::Parallel,
    };
    ens.verify_stride = resolve(&mut cfg.verify_stride, 100);
    ens.mirror = resolve(&mut cfg.mirror, false);
    ens.probe_kx = finite("probe-kx", resolve(&mut cfg.probe_kx, std::f64::consts::FRAC_PI_8))?;
    let rep = born_ensemble(&ens, &params, &state)?;

    let mut report = Report::default();
    let mut table = CsvTable::new("born_counts", vec!["outcome", "count"]);
    table.push(vec!["plus".into(), rep.n_plus.into()]);
    table.push(vec!["minus".into(), rep.n_minus.into()]);
    table.push(vec!["undetermined".into(), rep.n_undetermined.into()]);
    report.tables.push(table);
    report.add_json("born_summary", &rep);
    let summary = format!(
        "born: {} trials, plus {}, minus {}, undetermined {}, fraction_plus {}",
        rep.n_trials,
        rep.n_plus,
        rep.n_minus,
        rep.n_undetermined,
        rep.fraction_plus.map_or("n/a".to_string(), |f| format!("{f:.4}"))
    );
    Ok((report, summary))
}

fn run_scaling(cfg: &mut RunConfig) -> Result<(Report, String), CliError> {
    let g_list = resolve(&mut cfg.g_list, vec![0.1, 0.3, 1.0, 3.0, 10.0]);
    let q_list = resolve(&mut cfg.q_list, vec![0.5, 1.0, 2.0]);
    for &g in &g_list {
        positive("g-list", g)?;
    }
    for &q in &q_list {
        positive("q-list", q)?;
    }
    let p0_ratio = open_unit("p0-ratio", resolve(&mut cfg.p0_ratio, 0.1))?;
    let delta = open_unit("delta", resolve(&mut cfg.delta, 1e-2))?;
    let fit = scaling_sweep(&g_list, &q_list, p0_ratio, delta)?;

    let mut report = Report::default();
    let mut table = CsvTable::new("scaling", vec!["g", "q", "rate", "t_c", "tau_c_nominal", "ratio"]);
    for p in &fit.points {
        table.push(vec![
            p.g.into(),
            p.q.into(),
            p.rate.into(),
            p.t_c.into(),
            (1.0 / p.rate).into(),
            (p.t_c * p.rate).into(),
        ]);
    }
    report.tables.push(table);
    report.add_json("scaling_fit", &fit);
    let lo = fit.points.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
    let hi = fit.points.iter().map(|p| p.rate).fold(0.0, f64::max);
    report.plots.push(Plot {
        name: "scaling".into(),
        title: "Collapse time against g q^2".into(),
        x_label: "g q^2".into(),
        y_label: "t_c".into(),
        series: vec![
            Series::scatter("measured", fit.points.iter().map(|p| (p.rate, p.t_c)).collect()),
            Series::line(
                &format!("fit, slope {:.4}", fit.slope),
                [lo, hi]
                    .iter()
                    .map(|&r| (r, (fit.intercept + fit.slope * r.ln()).exp()))
                    .collect(),
            ),
        ],
        log_x: true,
        log_y: true,
    });
    let summary = format!(
        "scaling: slope {:.6} ± {:.2e} over {:.2} decades ({} points)",
        fit.slope,
        fit.slope_stderr,
        fit.decades,
        fit.points.len()
    );
    Ok((report, summary))
}

fn run_constraints(cfg: &mut RunConfig) -> Result<(Report, String), CliError> {
    let records = match &cfg.records {
        Some(path) => load_records(Path::new(path))?,
        None => builtin_records(),
    };
    let rep = constraints_table(&records)?;
    let mut report = Report::default();
    let mut table = CsvTable::new(
        "constraints",
        vec!["name", "tau_m_s", "tau_E_s", "r", "kappa_bound", "reference_r"],
    );
    let mut lines = vec![format!(
        "{:<26} {:>12} {:>12} {:>12} {:>12}",
        "experiment", "tau_m [s]", "tau_E [s]", "r", "reference"
    )];
    for row in &rep.rows {
        table.push(vec![
            row.name.as_str().into(),
            row.tau_m_s.into(),
            row.tau_e_s.into(),
            row.r.into(),
            row.kappa_bound.into(),
            row.reference_r.map_or(Cell::Text(String::new()), Cell::Float),
        ]);
        lines.push(format!(
            "{:<26} {:>12.3e} {:>12.3e} {:>12.3e} {:>12}",
            row.name,
            row.tau_m_s,
            row.tau_e_s,
            row.r,
            row.reference_r.map_or(String::new(), |v| format!("{v:.0e}"))
        ));
    }
    lines.push(format!("most constraining absolute: {}", rep.most_constraining_absolute));
    lines.push(format!("most constraining relative: {}", rep.most_constraining_relative));
    report.tables.push(table);
    report.add_json("constraints", &rep);
    Ok((report, lines.join("\n")))
}

fn run_equivalence(cfg: &mut RunConfig) -> Result<(Report, String), CliError> {
    let c = constants(cfg)?;
    let defaults = EquivalenceConfig::default();
    let eq = EquivalenceConfig {
        x_min: finite("x-min", resolve(&mut cfg.x_min, defaults.x_min))?,
        x_max: finite("x-max", resolve(&mut cfg.x_max, defaults.x_max))?,
        n: at_least("n", resolve(&mut cfg.n, defaults.n), SpatialGrid::MIN_NODES)?,
        t_max: {
            let v = resolve(&mut cfg.t_max, defaults.t_max);
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("t-max", "a finite value >= 0", v));
            }
            v
        },
        dt_factor: positive("safety", resolve(&mut cfg.safety, defaults.dt_factor))?,
        stride: at_least("stride", resolve(&mut cfg.stride, defaults.stride), 1)?,
        window_floor: {
            let v = resolve(&mut cfg.window_floor, defaults.window_floor);
            if !(0.0..1.0).contains(&v) {
                return Err(invalid("window-floor", "a value in [0, 1)", v));
            }
            v
        },
        edge_margin: defaults.edge_margin,
    };
    let k = finite("k", resolve(&mut cfg.k, 2.0))?;
    let sigma0 = positive("sigma0", resolve(&mut cfg.sigma0, 1.0))?;
    let k0 = finite("k0", resolve(&mut cfg.k0, 2.0))?;
    let x0 = finite("x0", resolve(&mut cfg.x0, 0.0))?;
    let narrow = positive("narrow-sigma0", resolve(&mut cfg.narrow_sigma0, 0.1))?;
    let cases: Vec<EquivalenceCase> = resolve(&mut cfg.cases, vec![CaseArg::PlaneWave, CaseArg::Gaussian])
        .into_iter()
        .map(|case| match case {
            CaseArg::PlaneWave => EquivalenceCase::PlaneWave { k },
            CaseArg::Gaussian => EquivalenceCase::Gaussian { sigma0, k0, x0 },
            CaseArg::NarrowGaussian => EquivalenceCase::Gaussian { sigma0: narrow, k0, x0 },
        })
        .collect();
    let results = equivalence_sweep(&cases, &eq, &c)?;

    let mut report = Report::default();
    let mut table = CsvTable::new(
        "equivalence",
        vec!["label", "max_discrepancy", "scale", "compared_nodes", "snapshots"],
    );
    let mut lines = Vec::new();
    for r in &results {
        table.push(vec![
            r.label.as_str().into(),
            r.max_discrepancy.into(),
            r.scale.into(),
            r.compared_nodes.into(),
            r.snapshots.into(),
        ]);
        lines.push(format!("equivalence: {} max relative discrepancy {:.3e}", r.label, r.max_discrepancy));
    }
    report.tables.push(table);
    report.add_json("equivalence", &results);
    Ok((report, lines.join("\n")))
}
