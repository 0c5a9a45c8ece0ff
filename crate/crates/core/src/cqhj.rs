//! Free evolution of the complex momentum field,
//! `p_t = −V' − p p'/m + (iħ/2m) p''`, its Hamiltonian density, a
//! Crank–Nicolson Schrödinger solver used as an independent reference, and
//! the combined mode that adds the pointwise collapsing force.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collapse::{collapsing_force, CollapseError, CollapseParams};
use crate::grid::{
    first_derivative, integrate_density, second_derivative, ComplexField, FieldKind, GridError, PhysicalConstants,
    SpatialGrid,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("dt = {dt:e} exceeds the explicit stability limit {limit:e} (safety·dx²·m/ħ)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("momentum field diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("tridiagonal solve degenerated at step {step}")]
    LinearSolveFailure { step: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Collapse(#[from] CollapseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit classic RK4 on the momentum field.
    MethodOfLinesRk4,
    /// Crank–Nicolson on the wave function.
    Reference,
}

/// Edge treatment of the explicit momentum-field schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldEdges {
    /// Every node evolves, using one-sided stencils near the edges. Exact for
    /// fields polynomial in x (e.g. Gaussian packets); for other fields the
    /// closure feeds an O(1)-in-dx error in from the edges.
    #[default]
    OneSided,
    /// The two outermost nodes on each side keep their initial values,
    /// acting as Dirichlet data for a field that extends past the grid.
    Pinned,
}

/// Edge treatment of the reference solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceBoundary {
    /// ψ = 0 on both edge nodes.
    Reflecting,
    /// Edge values keep their initial modulus and rotate with the discrete
    /// Crank–Nicolson phase of an eigenstate of the given energy, so a
    /// stationary state extending past the grid stays stationary.
    Stationary { energy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    /// Real external potential; `None` is V ≡ 0.
    pub potential: Option<ComplexField>,
    /// Explicit steps must satisfy dt ≤ safety·dx²·m/ħ.
    pub safety: f64,
    /// Snapshot every `stride` steps; the final state is always recorded.
    pub stride: usize,
    /// Divergence once max|p| exceeds this multiple of the initial scale.
    pub blowup_factor: f64,
    pub boundary: ReferenceBoundary,
    pub edges: FieldEdges,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self {
            dt,
            t_max,
            scheme: Scheme::MethodOfLinesRk4,
            potential: None,
            safety: 0.2,
            stride: 1,
            blowup_factor: 1e6,
            boundary: ReferenceBoundary::Reflecting,
            edges: FieldEdges::OneSided,
        }
    }

    /// Largest explicit step admitted on `grid`.
    pub fn step_limit(&self, grid: &SpatialGrid, c: &PhysicalConstants) -> f64 {
        self.safety * grid.dx() * grid.dx() * c.mass / c.hbar
    }

    /// Checks everything except the explicit step limit.
    fn validate_common(&self, grid: &SpatialGrid) -> Result<(), EvolutionError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EvolutionError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(EvolutionError::InvalidConfig(format!("t_max must be >= 0, got {}", self.t_max)));
        }
        if self.stride == 0 {
            return Err(EvolutionError::InvalidConfig("stride must be >= 1".into()));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(EvolutionError::InvalidConfig("blowup_factor must exceed 1".into()));
        }
        if let Some(v) = &self.potential {
            if v.grid() != grid {
                return Err(EvolutionError::InvalidConfig("potential lives on a different grid".into()));
            }
            if v.values().iter().any(|z| z.im != 0.0 || !z.re.is_finite()) {
                return Err(EvolutionError::InvalidConfig("potential must be real and finite".into()));
            }
        }
        Ok(())
    }

    pub fn validate_explicit(&self, grid: &SpatialGrid, c: &PhysicalConstants) -> Result<(), EvolutionError> {
        self.validate_common(grid)?;
        if !(self.safety > 0.0) {
            return Err(EvolutionError::InvalidConfig("safety must be > 0".into()));
        }
        let limit = self.step_limit(grid, c);
        if self.dt > limit {
            return Err(EvolutionError::StepTooLarge { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Uniform steps of at most `dt` covering `[0, t_max]`.
    fn steps(&self) -> (usize, f64) {
        let n = (self.t_max / self.dt).ceil() as usize;
        if n == 0 {
            (0, 0.0)
        } else {
            (n, self.t_max / n as f64)
        }
    }
}

/// Time-ordered snapshots of a field evolution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub fields: Vec<ComplexField>,
}

impl Snapshots {
    fn push(&mut self, t: f64, field: ComplexField) {
        self.times.push(t);
        self.fields.push(field);
    }

    pub fn last(&self) -> Option<&ComplexField> {
        self.fields.last()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_finite(values: &[Complex64]) -> Result<(), EvolutionError> {
    match values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        Some(index) => Err(EvolutionError::NonFinite { index }),
        None => Ok(()),
    }
}

fn potential_gradient(v: Option<&ComplexField>, dx: f64) -> Option<Vec<Complex64>> {
    v.map(|v| first_derivative(v.values(), dx))
}

fn free_rhs_values(
    p: &[Complex64],
    dv: Option<&[Complex64]>,
    dx: f64,
    c: &PhysicalConstants,
) -> Vec<Complex64> {
    let d1 = first_derivative(p, dx);
    let d2 = second_derivative(p, dx);
    let inv_m = 1.0 / c.mass;
    let diffusion = Complex64::new(0.0, 0.5 * c.hbar * inv_m);
    let mut out: Vec<Complex64> = p
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(pj, (d1j, d2j))| -(pj * d1j) * inv_m + diffusion * d2j)
        .collect();
    if let Some(dv) = dv {
        for (o, g) in out.iter_mut().zip(dv) {
            *o -= g;
        }
    }
    out
}

/// ∂p/∂t = −V' − p p'/m + (iħ/2m) p'' on every node.
pub fn cqhj_rhs(
    p: &ComplexField,
    potential: Option<&ComplexField>,
    c: &PhysicalConstants,
) -> Result<ComplexField, EvolutionError> {
    check_finite(p.values())?;
    let dx = p.grid().dx();
    let dv = potential_gradient(potential, dx);
    let out = free_rhs_values(p.values(), dv.as_deref(), dx, c);
    check_finite(&out)?;
    Ok(ComplexField::new(*p.grid(), out, FieldKind::MomentumField)?)
}

/// H = V + p²/2m − iħ p'/2m, whose negative gradient drives the field.
pub fn hamiltonian_field(
    p: &ComplexField,
    potential: Option<&ComplexField>,
    c: &PhysicalConstants,
) -> Result<ComplexField, EvolutionError> {
    check_finite(p.values())?;
    let d1 = first_derivative(p.values(), p.grid().dx());
    let half_inv_m = 0.5 / c.mass;
    let mut out: Vec<Complex64> = p
        .values()
        .iter()
        .zip(&d1)
        .map(|(pj, dj)| pj * pj * half_inv_m - Complex64::new(0.0, c.hbar * half_inv_m) * dj)
        .collect();
    if let Some(v) = potential {
        for (o, vj) in out.iter_mut().zip(v.values()) {
            *o += vj;
        }
    }
    check_finite(&out)?;
    Ok(ComplexField::new(*p.grid(), out, FieldKind::PotentialField)?)
}

fn max_abs(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Explicit RK4 driver shared by free and combined evolution.
fn integrate_explicit(
    p0: &ComplexField,
    cfg: &EvolutionConfig,
    c: &PhysicalConstants,
    force: Option<&CollapseParams>,
) -> Result<Snapshots, EvolutionError> {
    let grid = *p0.grid();
    cfg.validate_explicit(&grid, c)?;
    check_finite(p0.values())?;
    let dx = grid.dx();
    let dv = potential_gradient(cfg.potential.as_ref(), dx);
    let rhs = |p: &[Complex64]| {
        let mut r = free_rhs_values(p, dv.as_deref(), dx, c);
        if let Some(params) = force {
            for (rj, pj) in r.iter_mut().zip(p) {
                *rj += collapsing_force(*pj, params);
            }
        }
        if cfg.edges == FieldEdges::Pinned {
            let n = r.len();
            for j in [0, 1, n - 2, n - 1] {
                r[j] = Complex64::new(0.0, 0.0);
            }
        }
        r
    };
    let mut scale = max_abs(p0.values());
    if let Some(params) = force {
        scale = scale.max(params.q());
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let threshold = cfg.blowup_factor * scale;

    let (n_steps, h) = cfg.steps();
    let mut out = Snapshots::default();
    out.push(0.0, p0.clone());
    let mut p = p0.values().to_vec();
    let axpy = |base: &[Complex64], k: &[Complex64], a: f64| -> Vec<Complex64> {
        base.iter().zip(k).map(|(b, kj)| b + kj * a).collect()
    };
    for step in 1..=n_steps {
        let k1 = rhs(&p);
        let k2 = rhs(&axpy(&p, &k1, 0.5 * h));
        let k3 = rhs(&axpy(&p, &k2, 0.5 * h));
        let k4 = rhs(&axpy(&p, &k3, h));
        for (j, pj) in p.iter_mut().enumerate() {
            *pj += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        let t = if step == n_steps { cfg.t_max } else { step as f64 * h };
        let blown = p
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()) || v.norm() > threshold);
        if blown {
            return Err(EvolutionError::Diverged { t });
        }
        if step % cfg.stride == 0 || step == n_steps {
            out.push(t, ComplexField::new(grid, p.clone(), FieldKind::MomentumField)?);
        }
    }
    Ok(out)
}

/// RK4 method-of-lines evolution of the free CQHJ equation.
pub fn evolve_free(
    p0: &ComplexField,
    cfg: &EvolutionConfig,
    c: &PhysicalConstants,
) -> Result<Snapshots, EvolutionError> {
    integrate_explicit(p0, cfg, c, None)
}

/// Free CQHJ evolution plus the collapsing force applied at every node.
pub fn combined_evolve(
    p0: &ComplexField,
    cfg: &EvolutionConfig,
    params: &CollapseParams,
    c: &PhysicalConstants,
) -> Result<Snapshots, EvolutionError> {
    integrate_explicit(p0, cfg, c, Some(params))
}

/// Energy of e^{ikx} under the three-point discrete Hamiltonian used by the
/// reference solver, (ħ²/m)(1 − cos k dx)/dx².
pub fn discrete_plane_wave_energy(k: f64, dx: f64, c: &PhysicalConstants) -> f64 {
    c.hbar * c.hbar / c.mass * (1.0 - (k * dx).cos()) / (dx * dx)
}

/// Crank–Nicolson evolution of iħψ_t = −(ħ²/2m)ψ'' + Vψ with the three-point
/// Laplacian and Dirichlet edges given by `cfg.boundary`.
pub fn reference_schrodinger(
    psi0: &ComplexField,
    cfg: &EvolutionConfig,
    c: &PhysicalConstants,
) -> Result<Snapshots, EvolutionError> {
    let grid = *psi0.grid();
    cfg.validate_common(&grid)?;
    check_finite(psi0.values())?;
    let n = grid.len();
    let dx = grid.dx();
    let (n_steps, h) = cfg.steps();
    let kin = c.hbar * c.hbar / (2.0 * c.mass * dx * dx);
    let r = Complex64::new(0.0, h / (2.0 * c.hbar));
    let v: Vec<f64> = match &cfg.potential {
        Some(p) => p.values().iter().map(|z| z.re).collect(),
        None => vec![0.0; n],
    };

    let mut psi = psi0.values().to_vec();
    let edge_rotation = match cfg.boundary {
        ReferenceBoundary::Reflecting => {
            psi[0] = Complex64::new(0.0, 0.0);
            psi[n - 1] = Complex64::new(0.0, 0.0);
            Complex64::new(0.0, 0.0)
        }
        ReferenceBoundary::Stationary { energy } => (1.0 - r * energy) / (1.0 + r * energy),
    };

    let m = n - 2;
    let off = -r * kin;
    let diag: Vec<Complex64> = (1..n - 1).map(|j| 1.0 + r * (2.0 * kin + v[j])).collect();
    // forward-eliminated superdiagonal of the constant-coefficient system
    let mut c_prime = vec![Complex64::new(0.0, 0.0); m];
    let mut denom = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        let d = if i == 0 { diag[0] } else { diag[i] - off * c_prime[i - 1] };
        if !(d.norm() > 1e-300) {
            return Err(EvolutionError::LinearSolveFailure { step: 0 });
        }
        denom[i] = d;
        c_prime[i] = off / d;
    }

    let mut out = Snapshots::default();
    out.push(0.0, ComplexField::new(grid, psi.clone(), FieldKind::WaveFunction)?);
    let mut rhs = vec![Complex64::new(0.0, 0.0); m];
    let mut d_prime = vec![Complex64::new(0.0, 0.0); m];
    for step in 1..=n_steps {
        let left_new = psi[0] * edge_rotation;
        let right_new = psi[n - 1] * edge_rotation;
        for i in 0..m {
            let j = i + 1;
            let h_psi = (psi[j] * 2.0 - psi[j - 1] - psi[j + 1]) * kin + psi[j] * v[j];
            rhs[i] = psi[j] - r * h_psi;
        }
        rhs[0] -= off * left_new;
        rhs[m - 1] -= off * right_new;
        for i in 0..m {
            let prev = if i == 0 { Complex64::new(0.0, 0.0) } else { d_prime[i - 1] };
            d_prime[i] = (rhs[i] - off * prev) / denom[i];
        }
        for i in (0..m).rev() {
            let next = if i + 1 == m { Complex64::new(0.0, 0.0) } else { psi[i + 2] };
            psi[i + 1] = d_prime[i] - c_prime[i] * next;
        }
        psi[0] = left_new;
        psi[n - 1] = right_new;
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(EvolutionError::LinearSolveFailure { step });
        }
        if step % cfg.stride == 0 || step == n_steps {
            let t = if step == n_steps { cfg.t_max } else { step as f64 * h };
            out.push(t, ComplexField::new(grid, psi.clone(), FieldKind::WaveFunction)?);
        }
    }
    Ok(out)
}

/// ∫|ψ|² dx of every snapshot.
pub fn norms(series: &Snapshots) -> Vec<f64> {
    series.fields.iter().map(integrate_density).collect()
}
