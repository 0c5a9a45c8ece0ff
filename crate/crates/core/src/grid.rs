//! Uniform 1D grids, complex field containers, and the transform between a
//! wave function ψ and its complex momentum field p = (ħ/i) ψ'/ψ.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude below which a wave function value is treated as a node.
pub const DEFAULT_NODE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid physical constants: {0}")]
    InvalidConstants(String),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("grid node {index} at x = {x} lies within dx/2 of a node of cos(kx)")]
    GridNodeOnNode { index: usize, x: f64 },
    #[error("|psi| = {magnitude:e} at node {index} is below the node floor; p is singular there")]
    NodeTooSmall { index: usize, magnitude: f64 },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("field norm underflows")]
    ZeroField,
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self, GridError> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(GridError::InvalidConstants(format!("hbar must be > 0, got {hbar}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(GridError::InvalidConstants(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self { hbar, mass })
    }
}

/// Uniform grid `x_j = x_min + j dx`, `j = 0..n`, with both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl SpatialGrid {
    pub const MIN_NODES: usize = 8;

    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self, GridError> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(GridError::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(GridError::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n < Self::MIN_NODES {
            return Err(GridError::InvalidGrid(format!(
                "need at least {} nodes, got {n}",
                Self::MIN_NODES
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid on the open interval between two consecutive nodes of cos(kx),
    /// pulled in by two spacings at each end: (−π/2k + 2dx, π/2k − 2dx).
    ///
    /// Solving `dx = (π/k − 4dx)/(n − 1)` gives `dx = π/(k(n + 3))`.
    pub fn canonical(k: f64, n: usize) -> Result<Self, GridError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(GridError::InvalidGrid(format!("k must be > 0, got {k}")));
        }
        let dx = PI / (k * (n as f64 + 3.0));
        let half = FRAC_PI_2 / k;
        Self::new(-half + 2.0 * dx, half - 2.0 * dx, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.x(j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    WaveFunction,
    MomentumField,
    PotentialField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: SpatialGrid,
    values: Vec<Complex64>,
    kind: FieldKind,
}

impl ComplexField {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>, kind: FieldKind) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, kind })
    }

    pub fn from_fn(grid: SpatialGrid, kind: FieldKind, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values, kind }
    }

    pub fn zeros(grid: SpatialGrid, kind: FieldKind) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            kind,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            Some(index) => Err(GridError::NonFinite { index }),
            None => Ok(()),
        }
    }
}

/// Symmetric two-plane-wave state with wavenumber `k` and a real momentum
/// perturbation `epsilon` that breaks the ±q symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub k: f64,
    pub epsilon: f64,
}

impl InitialState {
    pub fn new(k: f64, epsilon: f64) -> Result<Self, GridError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(GridError::InvalidState(format!("k must be > 0, got {k}")));
        }
        if !epsilon.is_finite() {
            return Err(GridError::InvalidState("epsilon must be finite".into()));
        }
        Ok(Self { k, epsilon })
    }

    pub fn symmetric(k: f64) -> Result<Self, GridError> {
        Self::new(k, 0.0)
    }

    /// Measured momentum magnitude q = ħk.
    pub fn q(&self, c: &PhysicalConstants) -> f64 {
        c.hbar * self.k
    }

    /// Pointwise initial momentum `ε + i q tan(kx)`.
    pub fn probe_momentum(&self, x: f64, c: &PhysicalConstants) -> Complex64 {
        Complex64::new(self.epsilon, self.q(c) * (self.k * x).tan())
    }

    /// Imaginary phase shift α of the amplitude-imbalanced state
    /// ψ₀ ∝ cos(kx + iα) = (e^{−α} e^{ikx} + e^{α} e^{−ikx})/2, chosen so the
    /// momentum field at x = 0 is exactly ε. Needs |ε| < q.
    pub fn phase_shift(&self, c: &PhysicalConstants) -> Result<f64, GridError> {
        let ratio = self.epsilon / self.q(c);
        if ratio.abs() >= 1.0 {
            return Err(GridError::InvalidState(format!(
                "|epsilon| must be below q = {} for a field-level state, got {}",
                self.q(c),
                self.epsilon
            )));
        }
        Ok(-ratio.atanh())
    }

    /// Momentum field `i q tan(kx + iα)` of the amplitude-imbalanced state.
    /// Equals [`Self::probe_momentum`] when ε = 0; for ε ≠ 0 its real part
    /// has the sign of ε at every x and equals ε at x = 0.
    pub fn field_momentum(&self, x: f64, c: &PhysicalConstants) -> Result<Complex64, GridError> {
        let alpha = self.phase_shift(c)?;
        let theta = Complex64::new(self.k * x, alpha);
        Ok(Complex64::i() * self.q(c) * theta.tan())
    }
}

/// ψ_j = (e^{ikx_j} + e^{−ikx_j})/√2 = √2 cos(kx_j).
pub fn make_symmetric_psi(grid: &SpatialGrid, state: &InitialState) -> Result<ComplexField, GridError> {
    let half_period = PI / state.k;
    let quarter = FRAC_PI_2 / state.k;
    let tol = 0.5 * grid.dx();
    for (index, x) in grid.nodes().enumerate() {
        // distance to the nearest odd multiple of π/2k
        let m = ((x - quarter) / half_period).round();
        let nearest = quarter + m * half_period;
        if (x - nearest).abs() < tol {
            return Err(GridError::GridNodeOnNode { index, x });
        }
    }
    Ok(ComplexField::from_fn(*grid, FieldKind::WaveFunction, |x| {
        Complex64::new(SQRT_2 * (state.k * x).cos(), 0.0)
    }))
}

/// Σ_i w_i (f[pivot + dir·(start + i)] − f[pivot]). Working in differences
/// keeps one-sided stencils exactly zero on constants.
fn weighted_differences(f: &[Complex64], pivot: usize, dir: isize, w: &[f64], start: isize) -> Complex64 {
    let base = f[pivot];
    w.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (i, &wi)| {
        let idx = pivot as isize + dir * (start + i as isize);
        acc + (f[idx as usize] - base) * wi
    })
}

/// Fourth-order first derivative; one-sided five-point stencils on the two
/// nodes nearest each boundary.
pub fn first_derivative(f: &[Complex64], dx: f64) -> Vec<Complex64> {
    let n = f.len();
    assert!(n >= 5, "first_derivative needs at least 5 nodes");
    let s = 1.0 / (12.0 * dx);
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    d[0] = weighted_differences(f, 0, 1, &[48.0, -36.0, 16.0, -3.0], 1) * s;
    d[1] = weighted_differences(f, 1, 1, &[-3.0, 0.0, 18.0, -6.0, 1.0], -1) * s;
    for j in 2..n - 2 {
        // difference form keeps the derivative of a constant exactly zero
        d[j] = ((f[j + 1] - f[j - 1]) * 8.0 - (f[j + 2] - f[j - 2])) * s;
    }
    d[n - 1] = -weighted_differences(f, n - 1, -1, &[48.0, -36.0, 16.0, -3.0], 1) * s;
    d[n - 2] = -weighted_differences(f, n - 2, -1, &[-3.0, 0.0, 18.0, -6.0, 1.0], -1) * s;
    d
}

/// Fourth-order second derivative; one-sided six-point stencils near the
/// boundaries.
pub fn second_derivative(f: &[Complex64], dx: f64) -> Vec<Complex64> {
    let n = f.len();
    assert!(n >= 6, "second_derivative needs at least 6 nodes");
    let s = 1.0 / (12.0 * dx * dx);
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    d[0] = weighted_differences(f, 0, 1, &[-154.0, 214.0, -156.0, 61.0, -10.0], 1) * s;
    d[1] = weighted_differences(f, 1, 1, &[10.0, 0.0, -4.0, 14.0, -6.0, 1.0], -1) * s;
    for j in 2..n - 2 {
        let outer = (f[j + 2] - f[j]) + (f[j - 2] - f[j]);
        let inner = (f[j + 1] - f[j]) + (f[j - 1] - f[j]);
        d[j] = (inner * 16.0 - outer) * s;
    }
    d[n - 1] = weighted_differences(f, n - 1, -1, &[-154.0, 214.0, -156.0, 61.0, -10.0], 1) * s;
    d[n - 2] = weighted_differences(f, n - 2, -1, &[10.0, 0.0, -4.0, 14.0, -6.0, 1.0], -1) * s;
    d
}

/// p_j = (ħ/i) ψ'(x_j)/ψ(x_j).
pub fn psi_to_p(psi: &ComplexField, c: &PhysicalConstants) -> Result<ComplexField, GridError> {
    psi_to_p_with_floor(psi, c, DEFAULT_NODE_FLOOR)
}

pub fn psi_to_p_with_floor(
    psi: &ComplexField,
    c: &PhysicalConstants,
    node_floor: f64,
) -> Result<ComplexField, GridError> {
    psi.check_finite()?;
    if let Some((index, v)) = psi
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| v.norm() <= node_floor)
    {
        return Err(GridError::NodeTooSmall {
            index,
            magnitude: v.norm(),
        });
    }
    let dpsi = first_derivative(&psi.values, psi.grid.dx());
    let factor = Complex64::new(0.0, -c.hbar);
    let values = dpsi
        .iter()
        .zip(&psi.values)
        .map(|(d, v)| factor * (d / v))
        .collect();
    Ok(ComplexField {
        grid: psi.grid,
        values,
        kind: FieldKind::MomentumField,
    })
}

/// Cumulative trapezoid integral of `f`, starting at zero on node 0.
fn cumulative_trapezoid(f: &[Complex64], dx: f64) -> Vec<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(f.len());
    out.push(acc);
    for w in f.windows(2) {
        acc += (w[0] + w[1]) * (0.5 * dx);
        out.push(acc);
    }
    out
}

/// ψ(x_j) = anchor · exp((i/ħ) ∫_{x_0}^{x_j} p dx), anchored on the first node.
pub fn p_to_psi(
    p: &ComplexField,
    c: &PhysicalConstants,
    anchor_value: Complex64,
) -> Result<ComplexField, GridError> {
    p_to_psi_anchored(p, c, p.grid.x_min(), anchor_value)
}

/// Same as [`p_to_psi`], with ψ(x_anchor) = `anchor_value` at an arbitrary
/// point inside the grid (linear interpolation of p between nodes).
pub fn p_to_psi_anchored(
    p: &ComplexField,
    c: &PhysicalConstants,
    x_anchor: f64,
    anchor_value: Complex64,
) -> Result<ComplexField, GridError> {
    p.check_finite()?;
    let grid = p.grid;
    if !(x_anchor >= grid.x_min() && x_anchor <= grid.x_max()) {
        return Err(GridError::InvalidGrid(format!(
            "anchor x = {x_anchor} outside [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let dx = grid.dx();
    let phase = cumulative_trapezoid(&p.values, dx);
    let j = (((x_anchor - grid.x_min()) / dx).floor() as usize).min(grid.len() - 2);
    let h = x_anchor - grid.x(j);
    let p_at = p.values[j] + (p.values[j + 1] - p.values[j]) * (h / dx);
    let phase_anchor = phase[j] + (p.values[j] + p_at) * (0.5 * h);
    let i_over_hbar = Complex64::new(0.0, 1.0 / c.hbar);
    let values = phase
        .iter()
        .map(|ph| anchor_value * (i_over_hbar * (ph - phase_anchor)).exp())
        .collect();
    Ok(ComplexField {
        grid,
        values,
        kind: FieldKind::WaveFunction,
    })
}

/// Trapezoid estimate of ∫|ψ|² dx over the grid.
pub fn integrate_density(psi: &ComplexField) -> f64 {
    let v = &psi.values;
    let dx = psi.grid.dx();
    let interior: f64 = v[1..v.len() - 1].iter().map(|z| z.norm_sqr()).sum();
    dx * (interior + 0.5 * (v[0].norm_sqr() + v[v.len() - 1].norm_sqr()))
}

/// Rescales ψ so that (1/L) ∫ |ψ|² dx = 1, L = x_max − x_min. The global
/// phase is left untouched.
pub fn normalize_mean_square(psi: &ComplexField) -> Result<ComplexField, GridError> {
    psi.check_finite()?;
    let mean = integrate_density(psi) / psi.grid.length();
    if !(mean.is_finite() && mean >= f64::MIN_POSITIVE) {
        return Err(GridError::ZeroField);
    }
    let scale = 1.0 / mean.sqrt();
    Ok(ComplexField {
        grid: psi.grid,
        values: psi.values.iter().map(|v| v * scale).collect(),
        kind: psi.kind,
    })
}
