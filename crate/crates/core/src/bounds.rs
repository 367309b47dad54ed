//! Closed-form stability coefficients and the integral inequalities behind them.
//!
//! For a family `x'' = f_λ(t, x, x')` whose right-hand side is `L`-Lipschitz in
//! `(x, x')` and `L'`-Lipschitz in `λ`, the state deviation obeys
//!
//! ```text
//! ‖x_λ(t) - x(t)‖ ≤ c1(t)‖Δx0‖ + c2(t)‖Δv0‖ + c3(t)‖Δλ‖
//!
//! k     = (2 + L T) / 2
//! c1(t) = 1 + (L / k²)(e^{kt} - 1 - t)
//! c2(t) = (e^{kt} - 1) / k
//! c3(t) = (L' / k²)(e^{kt} - 1 - t)
//! ```
//!
//! and the velocity deviation obeys `‖Δv0‖e^{kt} + (L‖Δx0‖ + L'‖Δλ‖)(e^{kt} - 1)/k`.
//! `e^{kt} - 1` is always evaluated with `expm1` so the coefficients keep full
//! relative precision near `t = 0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabilityError};
use crate::ode::NormKind;

/// Default composite-Simpson panel count for [`perov_bound`].
pub const DEFAULT_PEROV_PANELS: usize = 1024;

/// Lipschitz constants of a parametric right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzData {
    /// Constant in the state `(x, v)`.
    pub l: f64,
    /// Constant in the parameter `λ`.
    pub lp: f64,
}

impl LipschitzData {
    pub fn new(l: f64, lp: f64) -> Result<Self> {
        for (name, v) in [("L", l), ("L'", lp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(StabilityError::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self { l, lp })
    }
}

/// Evaluable coefficient functions for a fixed `(L, L', T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCoefficients {
    lip: LipschitzData,
    horizon: f64,
}

impl BoundCoefficients {
    pub fn lipschitz(&self) -> LipschitzData {
        self.lip
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Exponential rate `k = (2 + L T) / 2`.
    pub fn rate(&self) -> f64 {
        (2.0 + self.lip.l * self.horizon) / 2.0
    }

    /// `e^{kt} - 1 - t`
    fn growth_excess(&self, t: f64) -> f64 {
        (self.rate() * t).exp_m1() - t
    }

    pub fn c1(&self, t: f64) -> f64 {
        let k = self.rate();
        1.0 + self.lip.l / (k * k) * self.growth_excess(t)
    }

    pub fn c2(&self, t: f64) -> f64 {
        let k = self.rate();
        (k * t).exp_m1() / k
    }

    pub fn c3(&self, t: f64) -> f64 {
        let k = self.rate();
        self.lip.lp / (k * k) * self.growth_excess(t)
    }

    pub fn triple(&self, t: f64) -> (f64, f64, f64) {
        (self.c1(t), self.c2(t), self.c3(t))
    }

    /// Bound on the state deviation at time `t`.
    pub fn total(&self, t: f64, dx0: f64, dv0: f64, dlam: f64) -> f64 {
        self.c1(t) * dx0 + self.c2(t) * dv0 + self.c3(t) * dlam
    }

    /// Bound on the velocity deviation at time `t`.
    pub fn velocity(&self, t: f64, dx0: f64, dv0: f64, dlam: f64) -> f64 {
        let k = self.rate();
        let kt = k * t;
        dv0 * kt.exp() + (self.lip.l * dx0 + self.lip.lp * dlam) / k * kt.exp_m1()
    }
}

/// Coefficients of the main estimate for the given constants and horizon.
pub fn main_coefficients(lip: LipschitzData, horizon: f64) -> Result<BoundCoefficients> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(StabilityError::InvalidInput(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let lip = LipschitzData::new(lip.l, lip.lp)?;
    Ok(BoundCoefficients { lip, horizon })
}

/// Right-hand side of the velocity-deviation estimate.
pub fn velocity_bound(
    lip: LipschitzData,
    horizon: f64,
    t: f64,
    dx0: f64,
    dv0: f64,
    dlam: f64,
) -> Result<f64> {
    Ok(main_coefficients(lip, horizon)?.velocity(t, dx0, dv0, dlam))
}

/// Damped system `x'' + γx' + A_λx = 0` with cocoercive `A_λ`: the right-hand
/// side is `γ`-Lipschitz once `1/α_λ < γ`.
pub fn cocoercive_coefficients(gamma: f64, lp: f64, horizon: f64) -> Result<BoundCoefficients> {
    if !(gamma > 0.0) {
        return Err(StabilityError::InvalidInput(format!(
            "damping must be positive, got {gamma}"
        )));
    }
    main_coefficients(LipschitzData::new(gamma, lp)?, horizon)
}

/// RLC current equation on `[0, 1]`: `L = max(β, τ)`.
pub fn rlc_coefficients(beta: f64, tau: f64, lp: f64) -> Result<BoundCoefficients> {
    if !(beta > 0.0 && tau > 0.0) {
        return Err(StabilityError::InvalidInput(format!(
            "beta and tau must be positive, got beta = {beta}, tau = {tau}"
        )));
    }
    main_coefficients(LipschitzData::new(beta.max(tau), lp)?, 1.0)
}

/// Time-uniform constants bounding `‖z - z_λ‖∞` for a linear control system
/// with observation `z = C(x + x') + D u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcsConstants {
    pub c1: f64,
    pub c2: f64,
    /// Literal third constant, `β + 4‖C‖L'(1 - L')e^{kT}/(2 + LT)²`. Negative
    /// whenever `L' > 1`.
    pub c3: f64,
    /// `β + 4‖C‖L'(1 + L')e^{kT}/(2 + LT)²`, used for certification.
    pub c3_conservative: f64,
}

impl LcsConstants {
    /// Observation bound using the conservative third constant.
    pub fn total(&self, dx0: f64, dv0: f64, dlam: f64) -> f64 {
        self.c1 * dx0 + self.c2 * dv0 + self.c3_conservative * dlam
    }

    pub fn total_literal(&self, dx0: f64, dv0: f64, dlam: f64) -> f64 {
        self.c1 * dx0 + self.c2 * dv0 + self.c3 * dlam
    }
}

pub fn lcs_constants(norm_c: f64, l: f64, lp: f64, horizon: f64, beta: f64) -> LcsConstants {
    let s = 2.0 + l * horizon;
    let growth = (s * horizon / 2.0).exp();
    let c1 = norm_c * ((s - 2.0 * l) / s + 2.0 * l * (4.0 + l * horizon) / (s * s) * growth);
    let c2 = norm_c * (4.0 + l * horizon) / s * growth;
    let c3 = beta + 4.0 * norm_c * lp * (1.0 - lp) / (s * s) * growth;
    let c3_conservative = beta + 4.0 * norm_c * lp * (1.0 + lp) / (s * s) * growth;
    LcsConstants {
        c1,
        c2,
        c3,
        c3_conservative,
    }
}

/// Nonnegative coefficient function of the Perov inequality.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn function<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f(t),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// `u(t) ≤ c + ∫_{t0}^t (a(s)u(s) + b(s)u(s)^α) ds`
#[derive(Debug, Clone)]
pub struct PerovInput {
    pub c: f64,
    pub alpha: f64,
    pub a: Coefficient,
    pub b: Coefficient,
    pub t0: f64,
}

/// Evaluates the Perov upper bound at `t` with the default panel count.
pub fn perov_bound(p: &PerovInput, t: f64) -> Result<f64> {
    perov_bound_with_panels(p, t, DEFAULT_PEROV_PANELS)
}

/// Evaluates
///
/// ```text
/// { c^{1-α} e^{(1-α)∫a} + (1-α) ∫_{t0}^t b(s) e^{(1-α)∫_s^t a} ds }^{1/(1-α)}
/// ```
///
/// in closed form when `a` and `b` are constant, otherwise by composite Simpson
/// quadrature with `panels` panels for both the inner and outer integrals.
pub fn perov_bound_with_panels(p: &PerovInput, t: f64, panels: usize) -> Result<f64> {
    if !(p.alpha >= 0.0 && p.alpha < 1.0) {
        return Err(StabilityError::InvalidAlpha(p.alpha));
    }
    if !(p.c >= 0.0) {
        return Err(StabilityError::InvalidInput(format!(
            "c must be nonnegative, got {}",
            p.c
        )));
    }
    if !(t >= p.t0) {
        return Err(StabilityError::InvalidInput(format!(
            "t = {t} precedes t0 = {}",
            p.t0
        )));
    }
    if t == p.t0 {
        return Ok(p.c);
    }
    let q = 1.0 - p.alpha;
    let span = t - p.t0;
    let c_term = p.c.powf(q);

    let bracket = match (&p.a, &p.b) {
        (Coefficient::Constant(a), Coefficient::Constant(b)) => {
            let qa = q * a;
            // (1-α) b ∫ e^{(1-α)a(t-s)} ds = b (e^{(1-α)a Δ} - 1)/a, or (1-α) b Δ when a = 0
            let forcing = if qa == 0.0 {
                q * b * span
            } else {
                b * (qa * span).exp_m1() / a
            };
            c_term * (qa * span).exp() + forcing
        }
        _ => {
            let n = panels.max(2).next_multiple_of(2);
            let h = span / n as f64;
            let nodes: Vec<f64> = (0..=n).map(|j| p.t0 + h * j as f64).collect();
            // cumulative ∫_{t0}^{s_j} a, one Simpson panel per grid interval
            let mut cumulative = Vec::with_capacity(n + 1);
            cumulative.push(0.0);
            let mut acc = 0.0;
            let mut a_left = p.a.eval(nodes[0]);
            for j in 0..n {
                let a_mid = p.a.eval(nodes[j] + 0.5 * h);
                let a_right = p.a.eval(nodes[j + 1]);
                acc += h / 6.0 * (a_left + 4.0 * a_mid + a_right);
                cumulative.push(acc);
                a_left = a_right;
            }
            let total_a = acc;
            let integrand = |j: usize| p.b.eval(nodes[j]) * (q * (total_a - cumulative[j])).exp();
            let mut outer = integrand(0) + integrand(n);
            for j in 1..n {
                outer += if j % 2 == 1 { 4.0 } else { 2.0 } * integrand(j);
            }
            outer *= h / 3.0;
            c_term * (q * total_a).exp() + q * outer
        }
    };
    Ok(bracket.max(0.0).powf(1.0 / q))
}

/// Both sides of `∫₀ᵗ‖f‖‖f'‖ ≤ (t/2)∫₀ᵗ‖f'‖²` for a sampled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaGap {
    pub lhs: f64,
    pub rhs: f64,
}

impl LemmaGap {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.lhs <= self.rhs + tolerance
    }
}

/// Trapezoid evaluation of both sides of the lemma over the whole grid. When
/// `derivatives` is `None` they are estimated by second-order finite
/// differences.
pub fn lemma_gap(
    path: &[Vec<f64>],
    grid: &[f64],
    derivatives: Option<&[Vec<f64>]>,
    norm: NormKind,
) -> Result<LemmaGap> {
    if path.len() != grid.len() {
        return Err(StabilityError::DimMismatch(format!(
            "{} samples on a {}-point grid",
            path.len(),
            grid.len()
        )));
    }
    let min_points = if derivatives.is_some() { 2 } else { 3 };
    if grid.len() < min_points {
        return Err(StabilityError::InvalidInput(format!(
            "need at least {min_points} grid points"
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StabilityError::InvalidInput(
            "grid must be strictly increasing".into(),
        ));
    }
    let initial = norm.norm(&path[0]);
    if initial > 0.0 {
        return Err(StabilityError::BadInitial(initial));
    }

    let speeds: Vec<f64> = match derivatives {
        Some(d) => {
            if d.len() != grid.len() {
                return Err(StabilityError::DimMismatch(
                    "derivative samples differ from grid length".into(),
                ));
            }
            d.iter().map(|v| norm.norm(v)).collect()
        }
        None => finite_differences(path, grid)
            .iter()
            .map(|v| norm.norm(v))
            .collect(),
    };
    let sizes: Vec<f64> = path.iter().map(|v| norm.norm(v)).collect();

    let mut lhs = 0.0;
    let mut energy = 0.0;
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        lhs += 0.5 * h * (sizes[i] * speeds[i] + sizes[i + 1] * speeds[i + 1]);
        energy += 0.5 * h * (speeds[i] * speeds[i] + speeds[i + 1] * speeds[i + 1]);
    }
    let t = grid[grid.len() - 1] - grid[0];
    Ok(LemmaGap {
        lhs,
        rhs: 0.5 * t * energy,
    })
}

/// Second-order three-point derivative estimates on a possibly nonuniform grid.
fn finite_differences(path: &[Vec<f64>], grid: &[f64]) -> Vec<Vec<f64>> {
    let m = grid.len();
    let dim = path[0].len();
    let combine = |w: [f64; 3], idx: [usize; 3]| -> Vec<f64> {
        (0..dim)
            .map(|k| w[0] * path[idx[0]][k] + w[1] * path[idx[1]][k] + w[2] * path[idx[2]][k])
            .collect()
    };
    let mut out = Vec::with_capacity(m);
    {
        let (h1, h2) = (grid[1] - grid[0], grid[2] - grid[1]);
        out.push(combine(
            [
                -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
                (h1 + h2) / (h1 * h2),
                -h1 / (h2 * (h1 + h2)),
            ],
            [0, 1, 2],
        ));
    }
    for i in 1..m - 1 {
        let (h1, h2) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        out.push(combine(
            [
                -h2 / (h1 * (h1 + h2)),
                (h2 - h1) / (h1 * h2),
                h1 / (h2 * (h1 + h2)),
            ],
            [i - 1, i, i + 1],
        ));
    }
    {
        let (h1, h2) = (grid[m - 2] - grid[m - 3], grid[m - 1] - grid[m - 2]);
        out.push(combine(
            [
                h2 / (h1 * (h1 + h2)),
                -(h1 + h2) / (h1 * h2),
                (2.0 * h2 + h1) / (h2 * (h1 + h2)),
            ],
            [m - 3, m - 2, m - 1],
        ));
    }
    out
}
