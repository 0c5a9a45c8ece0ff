//! Desk-scale experiments built on the collapse model: outcome ensembles,
//! collapse-time scaling, the experimental constraints table, and the
//! momentum-field versus wave-function equivalence sweep.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collapse::{analytic_p, classify_outcome, collapse_time, CollapseError, CollapseParams, Outcome};
use crate::cqhj::{
    discrete_plane_wave_energy, evolve_free, reference_schrodinger, EvolutionConfig, EvolutionError,
    ReferenceBoundary,
};
use crate::grid::{first_derivative, ComplexField, FieldKind, GridError, InitialState, PhysicalConstants, SpatialGrid};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("fit is degenerate: all sample points share the same g·q²")]
    FitDegenerate,
    #[error("sweep needs >= {min_points} points over >= {min_decades} decades of g·q², got {points} over {decades:.3}")]
    InsufficientSpan {
        points: usize,
        decades: f64,
        min_points: usize,
        min_decades: f64,
    },
    #[error("case `{label}` diverged at t = {t}")]
    Diverged { label: String, t: f64 },
    #[error("case `{label}`: {source}")]
    Evolution {
        label: String,
        #[source]
        source: EvolutionError,
    },
    #[error("reading {path}: {message}")]
    Records { path: String, message: String },
    #[error(transparent)]
    Collapse(#[from] CollapseError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonDistribution {
    /// Uniform on [−scale, scale).
    Uniform,
    /// Normal with standard deviation `scale`.
    Gaussian,
    /// Point mass at ε = 0: the exactly symmetric state.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_trials: usize,
    pub epsilon_scale: f64,
    pub distribution: EpsilonDistribution,
    pub seed: u64,
    /// Probe phase k·x at which p0 = ε + i q tan(kx) is sampled.
    pub probe_kx: f64,
    /// Every `verify_stride`-th trial is also evolved to 20 τ_c on the closed
    /// form; 0 disables the check.
    pub verify_stride: usize,
    /// Flip the sign of every sampled ε.
    pub mirror: bool,
    pub execution: Execution,
}

impl EnsembleConfig {
    pub fn new(n_trials: usize, seed: u64) -> Self {
        Self {
            n_trials,
            epsilon_scale: 1e-3,
            distribution: EpsilonDistribution::Uniform,
            seed,
            probe_kx: std::f64::consts::FRAC_PI_8,
            verify_stride: 100,
            mirror: false,
            execution: Execution::Parallel,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_trials == 0 {
            return Err(ExperimentError::InvalidConfig("n_trials must be >= 1".into()));
        }
        if !(self.epsilon_scale.is_finite() && self.epsilon_scale > 0.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "epsilon_scale must be > 0, got {}",
                self.epsilon_scale
            )));
        }
        if !(self.probe_kx.is_finite() && self.probe_kx.cos().abs() > 1e-12) {
            return Err(ExperimentError::InvalidConfig(format!(
                "probe k·x = {} must be finite and away from a node of cos",
                self.probe_kx
            )));
        }
        Ok(())
    }

    /// ε of trial `index`, drawn from its own ChaCha8 stream.
    pub fn sample_epsilon(&self, index: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let eps = match self.distribution {
            EpsilonDistribution::Uniform => {
                Uniform::new(-self.epsilon_scale, self.epsilon_scale)
                    .expect("validated scale")
                    .sample(&mut rng)
            }
            EpsilonDistribution::Gaussian => Normal::new(0.0, self.epsilon_scale)
                .expect("validated scale")
                .sample(&mut rng),
            EpsilonDistribution::Degenerate => {
                // keep the stream position independent of the distribution
                let _: u64 = rng.random();
                0.0
            }
        };
        if self.mirror {
            -eps
        } else {
            eps
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Tally {
    plus: usize,
    minus: usize,
    undetermined: usize,
    verified: usize,
    mismatches: usize,
}

impl Tally {
    fn merge(self, o: Self) -> Self {
        Self {
            plus: self.plus + o.plus,
            minus: self.minus + o.minus,
            undetermined: self.undetermined + o.undetermined,
            verified: self.verified + o.verified,
            mismatches: self.mismatches + o.mismatches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_trials: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_undetermined: usize,
    /// n_plus / (n_plus + n_minus); absent when no trial was decided.
    pub fraction_plus: Option<f64>,
    /// Wilson score interval at 99% for `fraction_plus`.
    pub binomial_ci_99: Option<(f64, f64)>,
    pub verified: usize,
    pub verify_mismatches: usize,
    pub seed: u64,
    pub x_probe: f64,
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let phat = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (phat + z2 / (2.0 * nf)) / denom;
    let half = z * (phat * (1.0 - phat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Some(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Samples Re p0 per trial, classifies the outcome, and re-checks a
/// subsample against the closed-form state at 20 τ_c.
pub fn born_ensemble(
    cfg: &EnsembleConfig,
    params: &CollapseParams,
    state: &InitialState,
) -> Result<EnsembleReport, ExperimentError> {
    cfg.validate()?;
    let q = params.q();
    let x_probe = cfg.probe_kx / state.k;
    let imag = q * (state.k * x_probe).tan();
    let t_check = 20.0 * params.tau_c_nominal();
    let trial = |i: usize| -> Tally {
        let eps = cfg.sample_epsilon(i);
        let p0 = Complex64::new(eps, imag);
        let outcome = classify_outcome(p0);
        let mut t = Tally::default();
        match outcome {
            Outcome::Plus => t.plus = 1,
            Outcome::Minus => t.minus = 1,
            Outcome::Undetermined => t.undetermined = 1,
        }
        if cfg.verify_stride > 0 && i.is_multiple_of(cfg.verify_stride) {
            t.verified = 1;
            let agrees = match analytic_p(p0, t_check, params) {
                Ok((p, _)) => match outcome {
                    Outcome::Plus => p.re > 0.0,
                    Outcome::Minus => p.re < 0.0,
                    Outcome::Undetermined => p.re == 0.0,
                },
                Err(CollapseError::Singularity { .. }) => outcome == Outcome::Undetermined,
                Err(_) => false,
            };
            if !agrees {
                t.mismatches = 1;
            }
        }
        t
    };
    let tally = match cfg.execution {
        Execution::Serial => (0..cfg.n_trials).map(trial).fold(Tally::default(), Tally::merge),
        Execution::Parallel => (0..cfg.n_trials)
            .into_par_iter()
            .map(trial)
            .reduce(Tally::default, Tally::merge),
    };
    let decided = tally.plus + tally.minus;
    Ok(EnsembleReport {
        n_trials: cfg.n_trials,
        n_plus: tally.plus,
        n_minus: tally.minus,
        n_undetermined: tally.undetermined,
        fraction_plus: (decided > 0).then(|| tally.plus as f64 / decided as f64),
        binomial_ci_99: wilson_interval(tally.plus, decided, Z_99),
        verified: tally.verified,
        verify_mismatches: tally.mismatches,
        seed: cfg.seed,
        x_probe,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub g: f64,
    pub q: f64,
    pub rate: f64,
    pub t_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<ScalingPoint>,
    pub p0_ratio: f64,
    pub delta: f64,
    /// Slope of ln t_c against ln(g q²).
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub decades: f64,
}

pub const MIN_FIT_POINTS: usize = 8;
pub const MIN_FIT_DECADES: f64 = 2.0;

/// Ordinary least squares `y ≈ a + b x`, returning (b, a, stderr of b).
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, intercept, stderr))
}

/// Measures the collapse time with p0 = p0_ratio·q on every (g, q) pair and
/// fits ln t_c against ln(g q²).
pub fn scaling_sweep(g_list: &[f64], q_list: &[f64], p0_ratio: f64, delta: f64) -> Result<ScalingFit, ExperimentError> {
    if !(p0_ratio > 0.0 && p0_ratio < 1.0) {
        return Err(ExperimentError::InvalidConfig(format!("p0_ratio must lie in (0, 1), got {p0_ratio}")));
    }
    if g_list.is_empty() || q_list.is_empty() {
        return Err(ExperimentError::InvalidConfig("g and q lists must be non-empty".into()));
    }
    let mut points = Vec::with_capacity(g_list.len() * q_list.len());
    for &g in g_list {
        for &q in q_list {
            let params = CollapseParams::new(g, q)?;
            let t_c = collapse_time(Complex64::new(p0_ratio * q, 0.0), &params, delta)?.t_c;
            points.push(ScalingPoint { g, q, rate: params.rate(), t_c });
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.rate.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.t_c.ln()).collect();
    let (slope, intercept, slope_stderr) = fit_line(&x, &y).ok_or(ExperimentError::FitDegenerate)?;
    let lo = points.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.rate).fold(0.0, f64::max);
    let decades = (hi / lo).log10();
    if points.len() < MIN_FIT_POINTS || decades < MIN_FIT_DECADES {
        return Err(ExperimentError::InsufficientSpan {
            points: points.len(),
            decades,
            min_points: MIN_FIT_POINTS,
            min_decades: MIN_FIT_DECADES,
        });
    }
    Ok(ScalingFit {
        points,
        p0_ratio,
        delta,
        slope,
        intercept,
        slope_stderr,
        decades,
    })
}

/// One row of the experimental constraints table. The ratio is always
/// recomputed from the two times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub tau_m_s: f64,
    #[serde(rename = "tau_E_s")]
    pub tau_e_s: f64,
    /// Published order-of-magnitude ratio, kept for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_r: Option<f64>,
}

impl ExperimentRecord {
    pub fn new(name: &str, tau_m_s: f64, tau_e_s: f64, reference_r: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            tau_m_s,
            tau_e_s,
            reference_r,
        }
    }

    pub fn r(&self) -> f64 {
        self.tau_m_s / self.tau_e_s
    }
}

/// Built-in dataset: shortest probed time τ_m against the characteristic
/// energy time τ_E for seven experiments.
pub fn builtin_records() -> Vec<ExperimentRecord> {
    vec![
        ExperimentRecord::new("Photon polarization", 7.5e-14, 1e-15, Some(1e2)),
        ExperimentRecord::new("Neutron interferometry", 2.7e-2, 2.3e-12, Some(1e10)),
        ExperimentRecord::new("Quantum jumps", 1.0, 1e-15, Some(1e15)),
        ExperimentRecord::new("Nonlinearity test", 1.0, 1e-9, Some(1e9)),
        ExperimentRecord::new("Femtosecond optics", 1e-13, 7e-17, Some(1e3)),
        ExperimentRecord::new("Bose-Einstein condensate", 1e-4, 1.8e-3, Some(5e-2)),
        ExperimentRecord::new("EPR correlations", 5e-12, 1e-15, Some(5e3)),
    ]
}

/// Reads records from CSV with header `name,tau_m_s,tau_E_s[,reference_r]`.
pub fn load_records(path: &Path) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    let err = |message: String| ExperimentError::Records {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| err(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub name: String,
    pub tau_m_s: f64,
    #[serde(rename = "tau_E_s")]
    pub tau_e_s: f64,
    pub r: f64,
    pub kappa_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub rows: Vec<ConstraintRow>,
    /// Row with the shortest probed time.
    pub most_constraining_absolute: String,
    /// Row with the smallest ratio τ_m/τ_E.
    pub most_constraining_relative: String,
}

pub fn constraints_table(records: &[ExperimentRecord]) -> Result<ConstraintReport, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::InvalidConfig("no experiment records".into()));
    }
    for rec in records {
        if !(rec.tau_m_s > 0.0 && rec.tau_e_s > 0.0 && rec.tau_m_s.is_finite() && rec.tau_e_s.is_finite()) {
            return Err(ExperimentError::InvalidConfig(format!(
                "record `{}` needs positive finite times",
                rec.name
            )));
        }
    }
    let rows: Vec<ConstraintRow> = records
        .iter()
        .map(|rec| ConstraintRow {
            name: rec.name.clone(),
            tau_m_s: rec.tau_m_s,
            tau_e_s: rec.tau_e_s,
            r: rec.r(),
            kappa_bound: rec.r(),
            reference_r: rec.reference_r,
        })
        .collect();
    let argmin = |key: fn(&ConstraintRow) -> f64| {
        rows.iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .map(|r| r.name.clone())
            .expect("non-empty")
    };
    Ok(ConstraintReport {
        most_constraining_absolute: argmin(|r| r.tau_m_s),
        most_constraining_relative: argmin(|r| r.r),
        rows,
    })
}

/// Initial states for the equivalence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquivalenceCase {
    /// e^{ikx}.
    PlaneWave { k: f64 },
    /// exp(−(x − x0)²/(4σ0²) + i k0 x).
    Gaussian { sigma0: f64, k0: f64, x0: f64 },
}

impl EquivalenceCase {
    pub fn label(&self) -> String {
        match *self {
            Self::PlaneWave { k } => format!("plane_wave(k={k})"),
            Self::Gaussian { sigma0, k0, x0 } => format!("gaussian(sigma0={sigma0},k0={k0},x0={x0})"),
        }
    }

    fn psi0(&self, x: f64) -> Complex64 {
        match *self {
            Self::PlaneWave { k } => Complex64::new(0.0, k * x).exp(),
            Self::Gaussian { sigma0, k0, x0 } => {
                let d = x - x0;
                Complex64::new(-d * d / (4.0 * sigma0 * sigma0), k0 * x).exp()
            }
        }
    }

    fn p0(&self, x: f64, c: &PhysicalConstants) -> Complex64 {
        match *self {
            Self::PlaneWave { k } => Complex64::new(c.hbar * k, 0.0),
            Self::Gaussian { sigma0, k0, x0 } => {
                Complex64::new(c.hbar * k0, c.hbar * (x - x0) / (2.0 * sigma0 * sigma0))
            }
        }
    }

    /// Momentum scale that discrepancies are measured against.
    fn scale(&self, c: &PhysicalConstants) -> f64 {
        match *self {
            Self::PlaneWave { k } => c.hbar * k.abs(),
            Self::Gaussian { sigma0, k0, .. } => {
                if k0 != 0.0 {
                    c.hbar * k0.abs()
                } else {
                    c.hbar / sigma0
                }
            }
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let ok = match *self {
            Self::PlaneWave { k } => k.is_finite() && k != 0.0,
            Self::Gaussian { sigma0, k0, x0 } => sigma0 > 0.0 && sigma0.is_finite() && k0.is_finite() && x0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::InvalidConfig(format!("bad case {}", self.label())))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub t_max: f64,
    /// Step as a multiple of dx²·m/ħ.
    pub dt_factor: f64,
    /// Compare every `stride` steps.
    pub stride: usize,
    /// Nodes with |ψ_ref| below this fraction of max|ψ_ref| are left out.
    pub window_floor: f64,
    /// Nodes this close to either edge are left out.
    pub edge_margin: usize,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            n: 1024,
            t_max: 0.5,
            dt_factor: 0.2,
            stride: 50,
            window_floor: 1e-3,
            edge_margin: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceResult {
    pub label: String,
    /// max over compared nodes and times of |p_field − p_from_ψ| / scale.
    pub max_discrepancy: f64,
    pub scale: f64,
    pub compared_nodes: usize,
    pub snapshots: usize,
}

/// Evolves each case with the explicit momentum-field scheme and the
/// Crank–Nicolson reference, converts the reference to a momentum field on
/// its node-free window, and reports the worst relative gap.
pub fn equivalence_sweep(
    cases: &[EquivalenceCase],
    cfg: &EquivalenceConfig,
    c: &PhysicalConstants,
) -> Result<Vec<EquivalenceResult>, ExperimentError> {
    let grid = SpatialGrid::new(cfg.x_min, cfg.x_max, cfg.n)?;
    if !(cfg.dt_factor > 0.0 && cfg.window_floor >= 0.0 && cfg.window_floor < 1.0 && cfg.stride > 0) {
        return Err(ExperimentError::InvalidConfig("bad equivalence config".into()));
    }
    if 2 * cfg.edge_margin + 1 > grid.len() {
        return Err(ExperimentError::InvalidConfig("edge margin leaves no nodes".into()));
    }
    cases.iter().map(|case| run_case(case, &grid, cfg, c)).collect()
}

fn run_case(
    case: &EquivalenceCase,
    grid: &SpatialGrid,
    cfg: &EquivalenceConfig,
    c: &PhysicalConstants,
) -> Result<EquivalenceResult, ExperimentError> {
    case.validate()?;
    let label = case.label();
    let wrap = |e: EvolutionError| match e {
        EvolutionError::Diverged { t } => ExperimentError::Diverged { label: label.clone(), t },
        source => ExperimentError::Evolution { label: label.clone(), source },
    };
    let dx = grid.dx();
    let mut evo = EvolutionConfig::new(cfg.dt_factor * dx * dx * c.mass / c.hbar, cfg.t_max);
    evo.safety = cfg.dt_factor;
    evo.stride = cfg.stride;
    evo.boundary = match *case {
        EquivalenceCase::PlaneWave { k } => ReferenceBoundary::Stationary {
            energy: discrete_plane_wave_energy(k, dx, c),
        },
        EquivalenceCase::Gaussian { .. } => ReferenceBoundary::Reflecting,
    };

    let p0 = ComplexField::from_fn(*grid, FieldKind::MomentumField, |x| case.p0(x, c));
    let field = evolve_free(&p0, &evo, c).map_err(&wrap)?;
    let psi0 = ComplexField::from_fn(*grid, FieldKind::WaveFunction, |x| case.psi0(x));
    let reference = reference_schrodinger(&psi0, &evo, c).map_err(&wrap)?;

    let scale = case.scale(c);
    let mut worst = 0.0_f64;
    let mut compared = 0;
    let factor = Complex64::new(0.0, -c.hbar);
    for (p, psi) in field.fields.iter().zip(&reference.fields) {
        let values = psi.values();
        let peak = psi.max_abs();
        let dpsi = first_derivative(values, dx);
        for j in cfg.edge_margin..grid.len() - cfg.edge_margin {
            if values[j].norm() < cfg.window_floor * peak || values[j].norm() == 0.0 {
                continue;
            }
            let p_ref = factor * dpsi[j] / values[j];
            worst = worst.max((p.values()[j] - p_ref).norm() / scale);
            compared += 1;
        }
    }
    Ok(EquivalenceResult {
        label,
        max_discrepancy: worst,
        scale,
        compared_nodes: compared,
        snapshots: field.len(),
    })
}
