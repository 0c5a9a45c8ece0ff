//! Flat run configuration shared by the config file, the command line and the
//! emitted manifest.
//!
//! The file format is flat `key = value` TOML. Command-line flags override
//! file values; keys a run leaves unset are filled with that subcommand's
//! defaults before the manifest is written, so a manifest replays the run.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::output::Format;
use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Adaptive RK4 integration with event detection.
    Numeric,
    /// Closed-form trajectory.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    /// Gaussian packet exp(−(x−x0)²/4σ0² + i k0 x).
    Gaussian,
    /// Plane wave e^{ikx}.
    PlaneWave,
    /// Two-plane-wave state cos(kx + iα) with Re p = ε at x = 0.
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Rk4,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EdgesArg {
    OneSided,
    Pinned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionArg {
    Uniform,
    Gaussian,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionArg {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CaseArg {
    PlaneWave,
    Gaussian,
    NarrowGaussian,
}

/// Every configurable key. `None` means "not given"; the resolved manifest
/// has every key the subcommand uses filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub singularity_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<EdgesArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mirror: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_kx: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_ratio: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<CaseArg>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narrow_sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_floor: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
    }

    pub fn to_manifest(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

/// Fills `slot` with `default` when unset and returns the value.
pub fn resolve<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

macro_rules! overlay {
    ($args:expr, $cfg:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = Some(v); } )*
    };
}

#[derive(Debug, Clone, Args)]
pub struct PhysOpts {
    /// Reduced Planck constant (> 0).
    #[arg(long)]
    pub hbar: Option<f64>,
    /// Particle mass (> 0).
    #[arg(long)]
    pub mass: Option<f64>,
}

impl PhysOpts {
    pub fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self, cfg; hbar, mass);
    }
}

#[derive(Debug, Clone, Args)]
pub struct CollapseArgs {
    #[command(flatten)]
    pub phys: PhysOpts,
    /// Coupling g (> 0).
    #[arg(long)]
    pub g: Option<f64>,
    /// Target momentum q (> 0).
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p0_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p0_im: Option<f64>,
    /// Final time (default 10/(g q²)).
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Sampling interval (default t_max/1000).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Convergence threshold on |1 − |Re p|/q|.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Relative local error per integrator step.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Singularity once |p| exceeds this multiple of q.
    #[arg(long)]
    pub singularity_factor: Option<f64>,
    /// Grid nodes for wave-function snapshots.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of wave-function snapshots.
    #[arg(long)]
    pub snapshots: Option<usize>,
}

impl CollapseArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.phys.apply(cfg);
        overlay!(self, cfg; g, q, p0_re, p0_im, t_max, dt, delta, method, rel_tol, singularity_factor, n, snapshots);
    }
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    #[command(flatten)]
    pub phys: PhysOpts,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long, value_enum)]
    pub initial: Option<Initial>,
    /// Wavenumber of the plane-wave and two-plane-wave states.
    #[arg(long)]
    pub k: Option<f64>,
    /// Re p at x = 0 of the two-plane-wave state (|ε| < ħk).
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub edges: Option<EdgesArg>,
    /// Time step (default safety·dx²·m/ħ).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Explicit step limit as a multiple of dx²·m/ħ.
    #[arg(long)]
    pub safety: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Snapshot every this many steps.
    #[arg(long)]
    pub stride: Option<usize>,
}

impl FieldArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.phys.apply(cfg);
        overlay!(self, cfg; n, x_min, x_max, initial, k, epsilon, sigma0, k0, x0, scheme, edges, dt, safety, t_max, stride);
    }
}

#[derive(Debug, Clone, Args)]
pub struct CombinedArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long)]
    pub g: Option<f64>,
    /// Target momentum (default ħk).
    #[arg(long)]
    pub q: Option<f64>,
}

impl CombinedArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.field.apply(cfg);
        overlay!(self, cfg; g, q);
    }
}

#[derive(Debug, Clone, Args)]
pub struct BornArgs {
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Wavenumber of the two-plane-wave state.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Ensemble seed (falls back to COLLAPSAR_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon_scale: Option<f64>,
    #[arg(long, value_enum)]
    pub distribution: Option<DistributionArg>,
    #[arg(long, value_enum)]
    pub execution: Option<ExecutionArg>,
    /// Verify every this many trials against the closed form (0 = off).
    #[arg(long)]
    pub verify_stride: Option<usize>,
    /// Flip the sign of every sampled ε.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub mirror: Option<bool>,
    /// Probe phase k·x.
    #[arg(long, allow_hyphen_values = true)]
    pub probe_kx: Option<f64>,
}

impl BornArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self, cfg; g, q, k, trials, seed, epsilon_scale, distribution, execution, verify_stride, mirror, probe_kx);
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    /// Comma-separated couplings.
    #[arg(long, value_delimiter = ',')]
    pub g_list: Option<Vec<f64>>,
    /// Comma-separated target momenta.
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    /// p0/q, in (0, 1).
    #[arg(long)]
    pub p0_ratio: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

impl ScalingArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self, cfg; g_list, q_list, p0_ratio, delta);
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConstraintsArgs {
    /// CSV with header name,tau_m_s,tau_E_s[,reference_r]; defaults to the built-in rows.
    #[arg(long)]
    pub records: Option<String>,
}

impl ConstraintsArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self, cfg; records);
    }
}

#[derive(Debug, Clone, Args)]
pub struct EquivalenceArgs {
    #[command(flatten)]
    pub phys: PhysOpts,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub safety: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Skip nodes where |ψ| is below this fraction of its maximum.
    #[arg(long)]
    pub window_floor: Option<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub cases: Option<Vec<CaseArg>>,
    /// Plane-wave wavenumber.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub narrow_sigma0: Option<f64>,
}

impl EquivalenceArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        self.phys.apply(cfg);
        overlay!(self, cfg; n, x_min, x_max, t_max, safety, stride, window_floor, cases, k, sigma0, k0, x0, narrow_sigma0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let cfg = RunConfig {
            command: Some("born".into()),
            formats: Some(vec![Format::Csv, Format::Json]),
            g: Some(0.1),
            seed: Some(42),
            g_list: Some(vec![0.1, 1.0, 10.0]),
            distribution: Some(DistributionArg::Gaussian),
            mirror: Some(true),
            ..RunConfig::default()
        };
        let text = cfg.to_manifest();
        assert!(text.contains("distribution = \"gaussian\""));
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("gee = 1.0\n").is_err());
    }
}
