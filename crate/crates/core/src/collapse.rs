//! Pointwise collapse dynamics `dp/dt = g p (q² − p²)`: force and potential,
//! the closed-form trajectory with its square-root sheet, an adaptive
//! numerical integrator, the reconstructed wave function, outcome rules and
//! collapse-time estimates.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ComplexField, FieldKind, GridError, InitialState, PhysicalConstants, SpatialGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollapseError {
    #[error("invalid collapse parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory hits a pole at t* = {t_star} (purely imaginary initial momentum)")]
    Singularity { t_star: f64 },
    #[error("Re p0 is exactly zero; the trajectory never selects an outcome")]
    NeverConverges,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Coupling `g` and target momentum `q` of the collapsing force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseParams {
    g: f64,
    q: f64,
}

impl CollapseParams {
    pub fn new(g: f64, q: f64) -> Result<Self, CollapseError> {
        if !(g.is_finite() && g > 0.0) {
            return Err(CollapseError::InvalidParams(format!("g must be real and > 0, got {g}")));
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(CollapseError::InvalidParams(format!("q must be > 0, got {q}")));
        }
        Ok(Self { g, q })
    }

    /// Irreversibility requires a real coupling; complex values are refused.
    pub fn from_complex_coupling(g: Complex64, q: f64) -> Result<Self, CollapseError> {
        if g.im != 0.0 {
            return Err(CollapseError::InvalidParams(format!(
                "complex coupling g = {g} is not supported; g must be real"
            )));
        }
        Self::new(g.re, q)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Exponential rate g q².
    pub fn rate(&self) -> f64 {
        self.g * self.q * self.q
    }

    /// Nominal collapse time 1/(g q²).
    pub fn tau_c_nominal(&self) -> f64 {
        1.0 / self.rate()
    }
}

/// F_c = g p (q² − p²).
pub fn collapsing_force(p: Complex64, params: &CollapseParams) -> Complex64 {
    p * (params.q * params.q - p * p) * params.g
}

/// V_c = (g/4)(q² − p²)², the double well whose negative p-gradient is
/// [`collapsing_force`].
pub fn collapsing_potential(p: Complex64, params: &CollapseParams) -> Complex64 {
    let d = params.q * params.q - p * p;
    d * d * (0.25 * params.g)
}

/// B(t) = exp(g q² t), carried as ln B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BFactor {
    pub ln_b: f64,
}

impl BFactor {
    /// B itself; `inf` once ln B exceeds the f64 exponent range.
    pub fn value(&self) -> f64 {
        self.ln_b.exp()
    }

    /// 1/B, which never overflows.
    pub fn inverse(&self) -> f64 {
        (-self.ln_b).exp()
    }
}

pub fn b_factor(t: f64, params: &CollapseParams) -> BFactor {
    BFactor { ln_b: params.rate() * t }
}

/// Sheet of `1/√w`, `w = 1/p²`, on which a momentum value lies: +1 when p is
/// the principal root (Re p > 0), −1 otherwise. Purely imaginary p sits on
/// the cut and is assigned −sign(Im p).
pub fn sheet_sign(p: Complex64) -> i8 {
    if p.re > 0.0 || (p.re == 0.0 && p.im <= 0.0) {
        1
    } else {
        -1
    }
}

/// Time at which the trajectory of a purely imaginary `p0` reaches its pole,
/// `ln(1 + q²/|p0|²) / (2 g q²)`. `None` for any other `p0`.
pub fn pole_time(p0: Complex64, params: &CollapseParams) -> Option<f64> {
    if p0.re == 0.0 && p0.im != 0.0 {
        let ratio = params.q * params.q / (p0.im * p0.im);
        Some(ratio.ln_1p() / (2.0 * params.rate()))
    } else {
        None
    }
}

/// Closed-form momentum at time `t` together with its sheet sign.
///
/// Evaluated as `p = p0 / √u` with `u = p0²/q² + (1 − p0²/q²) e^{−2gq²t}`,
/// which is `p0² w` for the linear variable `w = 1/p²`. As t grows `u` moves
/// on a straight segment from 1 to p0²/q², so the principal root is continuous
/// in t unless p0² is a negative real (purely imaginary p0), where `u`
/// passes through zero at the pole.
pub fn analytic_p(p0: Complex64, t: f64, params: &CollapseParams) -> Result<(Complex64, i8), CollapseError> {
    if !(t >= 0.0) {
        return Err(CollapseError::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    if !(p0.re.is_finite() && p0.im.is_finite()) {
        return Err(CollapseError::InvalidArgument("p0 must be finite".into()));
    }
    if let Some(t_star) = pole_time(p0, params) {
        if t >= t_star {
            return Err(CollapseError::Singularity { t_star });
        }
    }
    if p0.re == 0.0 && p0.im == 0.0 {
        return Ok((p0, sheet_sign(p0)));
    }
    let q2 = params.q * params.q;
    let decay = (-2.0 * params.rate() * t).exp();
    let z = p0 * p0 / q2;
    let u = z + (1.0 - z) * decay;
    let p = if p0.re == 0.0 {
        // u is a positive real here; keep p exactly imaginary
        Complex64::new(0.0, p0.im / u.re.sqrt())
    } else {
        p0 / u.sqrt()
    };
    Ok((p, sheet_sign(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollapseEvent {
    SingularityDetected { t: f64 },
    BranchFlip { t: f64 },
    Converged { t: f64 },
}

impl CollapseEvent {
    pub fn time(&self) -> f64 {
        match *self {
            Self::SingularityDetected { t } | Self::BranchFlip { t } | Self::Converged { t } => t,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::SingularityDetected { .. } => "singularity",
            Self::BranchFlip { .. } => "branch_flip",
            Self::Converged { .. } => "converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapseTrajectory {
    pub times: Vec<f64>,
    pub p_values: Vec<Complex64>,
    pub branch_sign: Vec<i8>,
    pub events: Vec<CollapseEvent>,
}

impl CollapseTrajectory {
    fn push(&mut self, t: f64, p: Complex64) {
        let sign = sheet_sign(p);
        if let Some(&prev) = self.branch_sign.last() {
            if prev != sign {
                self.events.push(CollapseEvent::BranchFlip { t });
            }
        }
        self.times.push(t);
        self.p_values.push(p);
        self.branch_sign.push(sign);
    }

    pub fn last(&self) -> Option<(f64, Complex64)> {
        Some((*self.times.last()?, *self.p_values.last()?))
    }

    pub fn converged_at(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e {
            CollapseEvent::Converged { t } => Some(*t),
            _ => None,
        })
    }

    pub fn singularity_at(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e {
            CollapseEvent::SingularityDetected { t } => Some(*t),
            _ => None,
        })
    }

    /// Event label attached to sample `i`, if any event fired at its time.
    pub fn event_at(&self, i: usize) -> Option<&CollapseEvent> {
        let t = self.times[i];
        self.events.iter().find(|e| e.time() == t)
    }
}

/// Tuning of [`evolve_collapse_pointwise_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseOptions {
    /// Relative local error accepted per step.
    pub rel_tol: f64,
    /// Converged once |1 − |Re p|/q| drops below this.
    pub convergence_delta: f64,
    /// Singularity declared when |p| exceeds this multiple of q.
    pub singularity_factor: f64,
}

impl Default for PointwiseOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            convergence_delta: 1e-6,
            singularity_factor: 100.0,
        }
    }
}

fn rk4_step(p: Complex64, h: f64, params: &CollapseParams) -> Complex64 {
    let f = |y| collapsing_force(y, params);
    let k1 = f(p);
    let k2 = f(p + k1 * (0.5 * h));
    let k3 = f(p + k2 * (0.5 * h));
    let k4 = f(p + k3 * h);
    p + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

pub fn evolve_collapse_pointwise(
    p0: Complex64,
    params: &CollapseParams,
    dt: f64,
    t_max: f64,
) -> Result<CollapseTrajectory, CollapseError> {
    evolve_collapse_pointwise_with(p0, params, dt, t_max, &PointwiseOptions::default())
}

/// Integrates the collapse equation with classic RK4 under step-doubling
/// error control, sampling every `dt` up to `t_max`. Singular and converged
/// states are reported as events; a singularity truncates the trajectory.
pub fn evolve_collapse_pointwise_with(
    p0: Complex64,
    params: &CollapseParams,
    dt: f64,
    t_max: f64,
    opts: &PointwiseOptions,
) -> Result<CollapseTrajectory, CollapseError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CollapseError::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(CollapseError::InvalidArgument(format!("t_max must be >= 0, got {t_max}")));
    }
    if !(p0.re.is_finite() && p0.im.is_finite()) {
        return Err(CollapseError::InvalidArgument("p0 must be finite".into()));
    }
    let q = params.q;
    let blowup = opts.singularity_factor * q;
    let tau = params.tau_c_nominal();
    let h_min = 1e-14 * tau.max(t_max);

    let mut traj = CollapseTrajectory::default();
    let mut converged = false;
    let mut check_converged = |traj: &mut CollapseTrajectory, t: f64, p: Complex64| {
        if !converged && (1.0 - p.re.abs() / q).abs() < opts.convergence_delta {
            converged = true;
            traj.events.push(CollapseEvent::Converged { t });
        }
    };

    traj.push(0.0, p0);
    check_converged(&mut traj, 0.0, p0);

    let n_samples = (t_max / dt).ceil() as usize;
    let mut p = p0;
    let mut t = 0.0;
    let mut h = dt.min(0.1 * tau);
    for i in 1..=n_samples {
        let t_next = if i == n_samples { t_max } else { i as f64 * dt };
        while t < t_next {
            let step = h.min(t_next - t);
            let coarse = rk4_step(p, step, params);
            let fine = rk4_step(rk4_step(p, 0.5 * step, params), 0.5 * step, params);
            let diff = (fine - coarse).norm();
            let scale = fine.norm().max(f64::MIN_POSITIVE);
            let err = diff / scale;
            let finite = fine.re.is_finite() && fine.im.is_finite();
            if !finite || err > opts.rel_tol {
                h = 0.5 * step;
                if h < h_min {
                    traj.push(t, p);
                    traj.events.push(CollapseEvent::SingularityDetected { t });
                    return Ok(traj);
                }
                continue;
            }
            // local extrapolation of the step-doubled pair
            p = fine + (fine - coarse) / 15.0;
            t = if step == t_next - t { t_next } else { t + step };
            if p.norm() > blowup {
                traj.push(t, p);
                traj.events.push(CollapseEvent::SingularityDetected { t });
                return Ok(traj);
            }
            h = if err < opts.rel_tol / 32.0 { (2.0 * step).min(dt) } else { step };
        }
        traj.push(t, p);
        check_converged(&mut traj, t, p);
    }
    Ok(traj)
}

/// Closed-form trajectory sampled every `dt`, with the same event rules as the
/// numerical integrator. A pole inside `[0, t_max]` ends the record with a
/// singularity event at the pole time.
pub fn analytic_trajectory(
    p0: Complex64,
    params: &CollapseParams,
    dt: f64,
    t_max: f64,
    opts: &PointwiseOptions,
) -> Result<CollapseTrajectory, CollapseError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CollapseError::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let mut traj = CollapseTrajectory::default();
    let n_samples = (t_max / dt).ceil() as usize;
    let mut converged = false;
    for i in 0..=n_samples {
        let t = if i == n_samples { t_max } else { i as f64 * dt };
        match analytic_p(p0, t, params) {
            Ok((p, _)) => {
                traj.push(t, p);
                if !converged && (1.0 - p.re.abs() / params.q).abs() < opts.convergence_delta {
                    converged = true;
                    traj.events.push(CollapseEvent::Converged { t });
                }
            }
            Err(CollapseError::Singularity { t_star }) => {
                // the field runs off to ±i∞ along the imaginary axis
                traj.push(t_star, Complex64::new(0.0, f64::INFINITY.copysign(p0.im)));
                traj.events.push(CollapseEvent::SingularityDetected { t: t_star });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Plus,
    Minus,
    Undetermined,
}

/// Outcome selected by the sign of Re p0. Any nonzero real part decides.
pub fn classify_outcome(p0: Complex64) -> Outcome {
    if p0.re > 0.0 {
        Outcome::Plus
    } else if p0.re < 0.0 {
        Outcome::Minus
    } else {
        Outcome::Undetermined
    }
}

/// Square-root sheet of the reconstructed wave function: `Plus` tends to
/// e^{ikx}, `Minus` to e^{−ikx}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sheet {
    Plus,
    Minus,
}

impl Sheet {
    pub fn from_outcome(outcome: Outcome) -> Option<Self> {
        match outcome {
            Outcome::Plus => Some(Self::Plus),
            Outcome::Minus => Some(Self::Minus),
            Outcome::Undetermined => None,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }
}

/// `(cos θ + √(1/B² − sin²θ)) / (1 + 1/B)`, the wave-function bracket divided by B.
///
/// For a real θ the radicand turns negative once B|sin θ| > 1 and the root is
/// taken on `sheet`; for complex θ the radicand stays off the negative real
/// axis and the principal root is the continuous one.
fn wave_bracket(theta: Complex64, inv_b: f64, sheet: Sheet) -> Complex64 {
    if theta.im == 0.0 {
        let (s, c) = theta.re.sin_cos();
        let r = inv_b * inv_b - s * s;
        let root = if r >= 0.0 {
            Complex64::new(r.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, sheet.sign() * s.signum() * (-r).sqrt())
        };
        (Complex64::new(c, 0.0) + root) / (1.0 + inv_b)
    } else {
        let s = theta.sin();
        let r = Complex64::new(inv_b * inv_b, 0.0) - s * s;
        (theta.cos() + r.sqrt()) / (1.0 + inv_b)
    }
}

const NORMALIZATION_PANELS: usize = 1 << 14;

/// N(t) for the mean-square-one convention over (−π/2k, π/2k), by composite
/// Simpson quadrature.
pub fn wave_normalization(
    t: f64,
    state: &InitialState,
    params: &CollapseParams,
    c: &PhysicalConstants,
    sheet: Sheet,
) -> Result<f64, CollapseError> {
    let alpha = state.phase_shift(c)?;
    let inv_b = b_factor(t, params).inverse();
    let m = NORMALIZATION_PANELS;
    let h = std::f64::consts::PI / m as f64;
    let density = |j: usize| {
        let theta = Complex64::new(-FRAC_PI_2 + j as f64 * h, alpha);
        wave_bracket(theta, inv_b, sheet).norm_sqr()
    };
    let mut sum = density(0) + density(m);
    for j in 1..m {
        sum += density(j) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mean = sum * h / 3.0 / std::f64::consts::PI;
    Ok(1.0 / mean.sqrt())
}

/// Reconstructed wave function ψ(x, t) = N(t)[B cos kx + √(1 − B² sin²kx)]/(B + 1).
///
/// A nonzero `state.epsilon` evaluates the same expression at the shifted
/// phase kx + iα (see [`InitialState::field_momentum`]); the sheet is then
/// fixed by continuity and `sheet` is ignored. For ε = 0 `sheet` picks the
/// branch wherever B|sin kx| > 1. The expression solves the collapse
/// dynamics when `params.q` equals the state's ħk.
pub fn analytic_psi(
    x: f64,
    t: f64,
    state: &InitialState,
    params: &CollapseParams,
    c: &PhysicalConstants,
    sheet: Sheet,
) -> Result<Complex64, CollapseError> {
    let n = wave_normalization(t, state, params, c, sheet)?;
    let alpha = state.phase_shift(c)?;
    let inv_b = b_factor(t, params).inverse();
    Ok(wave_bracket(Complex64::new(state.k * x, alpha), inv_b, sheet) * n)
}

/// [`analytic_psi`] on every node of `grid`, sharing one normalization.
pub fn analytic_psi_field(
    grid: &SpatialGrid,
    t: f64,
    state: &InitialState,
    params: &CollapseParams,
    c: &PhysicalConstants,
    sheet: Sheet,
) -> Result<ComplexField, CollapseError> {
    let n = wave_normalization(t, state, params, c, sheet)?;
    let alpha = state.phase_shift(c)?;
    let inv_b = b_factor(t, params).inverse();
    Ok(ComplexField::from_fn(*grid, FieldKind::WaveFunction, |x| {
        wave_bracket(Complex64::new(state.k * x, alpha), inv_b, sheet) * n
    }))
}

/// Closed-form momentum field at time `t` from the state's field momentum.
pub fn analytic_p_field(
    grid: &SpatialGrid,
    t: f64,
    state: &InitialState,
    params: &CollapseParams,
    c: &PhysicalConstants,
) -> Result<ComplexField, CollapseError> {
    let values = grid
        .nodes()
        .map(|x| {
            let p0 = state.field_momentum(x, c)?;
            analytic_p(p0, t, params).map(|(p, _)| p)
        })
        .collect::<Result<Vec<_>, CollapseError>>()?;
    Ok(ComplexField::new(*grid, values, FieldKind::MomentumField)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseTime {
    pub t_c: f64,
    pub tau_c_nominal: f64,
}

impl CollapseTime {
    pub fn ratio(&self) -> f64 {
        self.t_c / self.tau_c_nominal
    }
}

/// Smallest t with |1 − |Re p(t)|/q| < delta on the closed form.
///
/// A coarse scan up to a guaranteed-converged bound brackets the first
/// crossing, which bisection then refines to floating-point resolution.
pub fn collapse_time(p0: Complex64, params: &CollapseParams, delta: f64) -> Result<CollapseTime, CollapseError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CollapseError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if p0.re == 0.0 {
        return Err(CollapseError::NeverConverges);
    }
    if !(p0.re.is_finite() && p0.im.is_finite()) {
        return Err(CollapseError::InvalidArgument("p0 must be finite".into()));
    }
    let q = params.q;
    let inside = |t: f64| -> Result<bool, CollapseError> {
        let (p, _) = analytic_p(p0, t, params)?;
        Ok((1.0 - p.re.abs() / q).abs() < delta)
    };
    let tau_c_nominal = params.tau_c_nominal();
    if inside(0.0)? {
        return Ok(CollapseTime { t_c: 0.0, tau_c_nominal });
    }
    // |p/q ∓ 1| ≤ |D| e^{−2gq²t} once that is small, D = q²/p0² − 1
    let d = (Complex64::new(q * q, 0.0) / (p0 * p0) - 1.0).norm();
    let mut upper = ((2.0 * d / delta).ln() / (2.0 * params.rate())).max(tau_c_nominal);
    while !inside(upper)? {
        upper *= 2.0;
        if !upper.is_finite() {
            return Err(CollapseError::NeverConverges);
        }
    }
    const SCAN: usize = 4096;
    let mut lo = 0.0;
    let mut hi = upper;
    for i in 1..=SCAN {
        let t = upper * i as f64 / SCAN as f64;
        if inside(t)? {
            hi = t;
            break;
        }
        lo = t;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if inside(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CollapseTime { t_c: hi, tau_c_nominal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> CollapseParams {
        CollapseParams::new(1.0, 1.0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn params_validation() {
        assert!(CollapseParams::new(0.0, 1.0).is_err());
        assert!(CollapseParams::new(1.0, -2.0).is_err());
        assert!(CollapseParams::new(f64::NAN, 1.0).is_err());
        assert!(CollapseParams::from_complex_coupling(c(1.0, 0.1), 1.0).is_err());
        let p = CollapseParams::from_complex_coupling(c(2.0, 0.0), 3.0).unwrap();
        assert_eq!(p.tau_c_nominal() * p.g() * p.q() * p.q(), 1.0);
    }

    #[test]
    fn force_values() {
        let p = unit();
        for z in [c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)] {
            assert_eq!(collapsing_force(z, &p), c(0.0, 0.0));
        }
        assert_abs_diff_eq!(collapsing_force(c(0.5, 0.0), &p).re, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn potential_values_and_gradient() {
        let p = unit();
        assert_eq!(collapsing_potential(c(1.0, 0.0), &p), c(0.0, 0.0));
        assert_eq!(collapsing_potential(c(-1.0, 0.0), &p), c(0.0, 0.0));
        assert_abs_diff_eq!(collapsing_potential(c(0.0, 0.0), &p).re, 0.25, epsilon = 1e-15);
        let h = 1e-5;
        let z = c(0.3, 0.0);
        let grad = (collapsing_potential(z + h, &p) - collapsing_potential(z - h, &p)) / (2.0 * h);
        assert!((-grad - collapsing_force(z, &p)).norm() < 1e-8);
    }

    #[test]
    fn b_factor_values() {
        let p = unit();
        assert_eq!(b_factor(0.0, &p).value(), 1.0);
        assert_abs_diff_eq!(b_factor(1.0, &p).value(), std::f64::consts::E, epsilon = 1e-15);
        let big = b_factor(1000.0, &p);
        assert_eq!(big.ln_b, 1000.0);
        assert_eq!(big.inverse(), 0.0_f64.max((-1000.0f64).exp()));
        assert!(big.inverse().is_finite());
    }

    #[test]
    fn analytic_p_at_zero_time_is_identity() {
        let p = CollapseParams::new(0.7, 1.3).unwrap();
        for z in [c(0.1, 0.0), c(-0.4, 2.0), c(1e-9, -3.0), c(0.0, 0.5), c(2.0, 0.0)] {
            let (v, _) = analytic_p(z, 0.0, &p).unwrap();
            assert!((v - z).norm() <= 1e-15 * z.norm());
        }
    }

    #[test]
    fn analytic_p_real_value() {
        let e = std::f64::consts::E;
        let expected = 0.1 * e / (0.01 * (e * e - 1.0) + 1.0f64).sqrt();
        let (v, sign) = analytic_p(c(0.1, 0.0), 1.0, &unit()).unwrap();
        assert_abs_diff_eq!(v.re, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v.re, 0.263_539, epsilon = 1e-6);
        assert_eq!(v.im, 0.0);
        assert_eq!(sign, 1);
    }

    #[test]
    fn analytic_p_matches_fine_rk4_oracle() {
        // fixed-step RK4 with 10^5 steps, independent of the closed form
        let p = unit();
        let mut y = 0.1_f64;
        let n = 100_000;
        let h = 1.0 / n as f64;
        let f = |y: f64| y * (1.0 - y * y);
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let (v, _) = analytic_p(c(0.1, 0.0), 1.0, &p).unwrap();
        assert_abs_diff_eq!(v.re, y, epsilon = 1e-13);
    }

    #[test]
    fn imaginary_start_hits_the_pole() {
        let t_star = 0.5 * 5f64.ln();
        assert_abs_diff_eq!(pole_time(c(0.0, 0.5), &unit()).unwrap(), t_star, epsilon = 1e-15);
        assert_abs_diff_eq!(t_star, 0.804_719, epsilon = 1e-6);
        match analytic_p(c(0.0, 0.5), 0.81, &unit()) {
            Err(CollapseError::Singularity { t_star: ts }) => assert_abs_diff_eq!(ts, t_star, epsilon = 1e-15),
            other => panic!("expected singularity, got {other:?}"),
        }
        let (before, _) = analytic_p(c(0.0, 0.5), 0.8, &unit()).unwrap();
        assert_eq!(before.re, 0.0);
        assert!(before.im > 10.0);
    }

    #[test]
    fn tiny_real_part_selects_outcome() {
        let p = unit();
        for (eps, target) in [(1e-8, 1.0), (-1e-8, -1.0)] {
            let (v, _) = analytic_p(c(eps, 0.7), 60.0, &p).unwrap();
            assert!((v.re - target).abs() < 1e-12, "{v}");
            assert!(v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn huge_times_do_not_overflow() {
        let (v, _) = analytic_p(c(0.3, -0.2), 1e6, &unit()).unwrap();
        assert_eq!(v, c(1.0, 0.0));
    }

    #[test]
    fn integrator_fixed_point() {
        let p = CollapseParams::new(2.0, 1.5).unwrap();
        let tr = evolve_collapse_pointwise(c(1.5, 0.0), &p, 0.1, 3.0).unwrap();
        assert!(tr.p_values.iter().all(|&z| z == c(1.5, 0.0)));
        assert_eq!(tr.converged_at(), Some(0.0));
    }

    #[test]
    fn integrator_matches_closed_form() {
        let p = unit();
        let tr = evolve_collapse_pointwise(c(0.1, 0.0), &p, 0.05, 1.0).unwrap();
        let (t, v) = tr.last().unwrap();
        assert_eq!(t, 1.0);
        let (exact, _) = analytic_p(c(0.1, 0.0), 1.0, &p).unwrap();
        assert!((v - exact).norm() < 1e-9);
    }

    #[test]
    fn integrator_detects_the_pole() {
        let tr = evolve_collapse_pointwise(c(0.0, 0.5), &unit(), 0.01, 2.0).unwrap();
        let ts = tr.singularity_at().expect("singularity event");
        assert!((ts - 0.5 * 5f64.ln()).abs() <= 1e-3, "{ts}");
        assert_eq!(*tr.times.last().unwrap(), ts);
    }

    #[test]
    fn integrator_rejects_bad_step() {
        assert!(evolve_collapse_pointwise(c(0.1, 0.0), &unit(), 0.0, 1.0).is_err());
    }

    #[test]
    fn analytic_trajectory_truncates_at_pole() {
        let tr = analytic_trajectory(c(0.0, 0.5), &unit(), 0.1, 2.0, &PointwiseOptions::default()).unwrap();
        assert_eq!(tr.times.len(), 10);
        assert_eq!(tr.singularity_at(), Some(0.5 * 5f64.ln()));
        assert_eq!(tr.event_at(9).map(CollapseEvent::label), Some("singularity"));
        assert!(tr.p_values[9].im.is_infinite());
        assert!(tr.p_values[..9].iter().all(|p| p.im.is_finite()));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_outcome(c(1e-300, 0.7)), Outcome::Plus);
        assert_eq!(classify_outcome(c(-1e-300, 0.7)), Outcome::Minus);
        assert_eq!(classify_outcome(c(0.0, 0.7)), Outcome::Undetermined);
        assert_eq!(classify_outcome(c(-0.0, 0.7)), Outcome::Undetermined);
    }

    #[test]
    fn collapse_time_bounds_and_scaling() {
        let p = unit();
        let ct = collapse_time(c(0.1, 0.0), &p, 0.01).unwrap();
        assert!(ct.ratio() >= 1.0 && ct.ratio() <= 10.0, "{}", ct.ratio());
        // closed form for real p0: e^{-2τ} = (1/(1−δ)² − 1)/(1/p0² − 1)
        let tau = -0.5 * ((1.0 / 0.99f64.powi(2) - 1.0) / (100.0 - 1.0)).ln();
        assert_abs_diff_eq!(ct.t_c, tau, epsilon = 1e-12);

        let doubled = collapse_time(c(0.1, 0.0), &CollapseParams::new(2.0, 1.0).unwrap(), 0.01).unwrap();
        assert_abs_diff_eq!(doubled.t_c, 0.5 * ct.t_c, epsilon = 1e-12);
        let rescaled = collapse_time(c(0.2, 0.0), &CollapseParams::new(1.0, 2.0).unwrap(), 0.01).unwrap();
        assert_abs_diff_eq!(rescaled.t_c, 0.25 * ct.t_c, epsilon = 1e-12);

        assert_eq!(collapse_time(c(0.0, 0.3), &p, 0.01), Err(CollapseError::NeverConverges));
        assert!(collapse_time(c(0.1, 0.0), &p, 1.5).is_err());
    }

    #[test]
    fn psi_at_zero_time_is_the_cosine_state() {
        let cs = PhysicalConstants::default();
        let state = InitialState::symmetric(1.0).unwrap();
        let p = unit();
        for x in [-1.2, -0.4, 0.0, 0.9] {
            let v = analytic_psi(x, 0.0, &state, &p, &cs, Sheet::Plus).unwrap();
            assert!((v - c(std::f64::consts::SQRT_2 * f64::cos(x), 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn psi_tends_to_plane_waves() {
        let cs = PhysicalConstants::default();
        let state = InitialState::symmetric(1.0).unwrap();
        let p = unit();
        for x in [-1.0, -0.3, 0.2, 1.1] {
            let plus = analytic_psi(x, 30.0, &state, &p, &cs, Sheet::Plus).unwrap();
            let minus = analytic_psi(x, 30.0, &state, &p, &cs, Sheet::Minus).unwrap();
            assert!((plus - c(0.0, x).exp()).norm() < 1e-9, "{plus}");
            assert!((minus - c(0.0, -x).exp()).norm() < 1e-9, "{minus}");
        }
    }
}
