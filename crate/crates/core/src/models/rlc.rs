//! RLC circuit currents: `x'' + τx' = g_λ(t, x)` on `[0, 1]`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{scalar_offset, Parameter, ParametricFamily};
use crate::bounds::LipschitzData;
use crate::error::{Result, StabilityError};
use crate::ode::{SecondOrderIvp, Trajectory, VectorState};

/// `g_λ(t, x)`
pub type Forcing = dyn Fn(f64, f64, &Parameter) -> f64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RlcVariant {
    /// Tuning circuit: current with a state-dependent source bounded by the envelope.
    #[default]
    Parallel,
    /// Capacitor charge `q'' + (R/L)q' + q/(LC) = V_λ(t)/L`.
    Series,
}

#[derive(Clone)]
pub struct RlcModel {
    /// `R / L` in 1/s.
    pub tau: f64,
    pub forcing: Arc<Forcing>,
    pub variant: RlcVariant,
    /// Envelope `w` with `|g_λ(s, x)| ≤ (τ/2) w(s) |x|`.
    pub envelope: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `max w = e^{-α₀}` with `α₀ > e`.
    pub alpha0: f64,
    /// Declared Lipschitz constant of `g_λ` in `x`.
    pub beta: f64,
    /// Declared Lipschitz constant of `g_λ` in `λ`.
    pub lp: f64,
    pub x0: f64,
    pub v0: f64,
    /// `(Δx0, Δv0)` per unit of `λ - λ̄`.
    pub initial_shift: Option<(f64, f64)>,
    pub lambda_bar: Parameter,
    pub neighborhood_radius: f64,
    /// Half-width of the `x` interval on which hypotheses are sampled.
    pub state_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl fmt::Debug for RlcModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RlcModel")
            .field("tau", &self.tau)
            .field("variant", &self.variant)
            .field("alpha0", &self.alpha0)
            .field("beta", &self.beta)
            .field("lp", &self.lp)
            .finish_non_exhaustive()
    }
}

impl RlcModel {
    /// Parallel circuit with `g_λ(t, x) = (τ/2) e^{-α₀} sin(x + λt) x`, constant
    /// envelope `e^{-α₀}` and initial data `x₀ = ẋ₀ = 0.5`.
    ///
    /// On `|x| ≤ ρ`, `t ∈ [0, 1]`: `|∂g/∂x| ≤ κ(1 + ρ)` and `|∂g/∂λ| ≤ κρ` with
    /// `κ = (τ/2)e^{-α₀}` and `ρ = |x₀| + R`.
    pub fn default_parallel(
        tau: f64,
        alpha0: f64,
        lambda_bar: f64,
        neighborhood_radius: f64,
    ) -> Self {
        let kappa = 0.5 * tau * (-alpha0).exp();
        let state_radius = 1.0;
        let forcing =
            move |t: f64, x: f64, lam: &Parameter| kappa * (x + lam.values()[0] * t).sin() * x;
        let level = (-alpha0).exp();
        Self {
            tau,
            forcing: Arc::new(forcing),
            variant: RlcVariant::Parallel,
            envelope: Arc::new(move |_| level),
            alpha0,
            beta: kappa * (1.0 + state_radius),
            lp: kappa * state_radius,
            x0: 0.0,
            v0: 0.0,
            initial_shift: None,
            lambda_bar: Parameter::scalar(lambda_bar),
            neighborhood_radius,
            state_radius,
            samples: 10_000,
            seed: 42,
        }
        .with_initial(0.5, 0.5)
    }

    /// Sets the initial data; for the parallel circuit also rescales `β` and
    /// `L'` to the reach `|x₀| + R`.
    pub fn with_initial(mut self, x0: f64, v0: f64) -> Self {
        self.x0 = x0;
        self.v0 = v0;
        if self.variant == RlcVariant::Parallel {
            let kappa = 0.5 * self.tau * (-self.alpha0).exp();
            let reach = x0.abs() + self.state_radius;
            self.beta = kappa * (1.0 + reach);
            self.lp = kappa * reach;
        }
        self
    }

    /// Series circuit charge with source `V_λ(t) = V₀ + (λ - λ̄)`: `τ = R/L`,
    /// `g_λ(t, q) = V_λ(t)/L - q/(LC)`, `β = 1/(LC)`, `L' = 1/L`.
    pub fn series(
        resistance: f64,
        inductance: f64,
        capacitance: f64,
        voltage: f64,
        lambda_bar: f64,
        neighborhood_radius: f64,
    ) -> Self {
        let forcing = move |_t: f64, q: f64, lam: &Parameter| {
            (voltage + lam.values()[0] - lambda_bar) / inductance - q / (inductance * capacitance)
        };
        Self {
            tau: resistance / inductance,
            forcing: Arc::new(forcing),
            variant: RlcVariant::Series,
            envelope: Arc::new(|_| 0.0),
            alpha0: 0.0,
            beta: 1.0 / (inductance * capacitance),
            lp: 1.0 / inductance,
            x0: 0.0,
            v0: 0.0,
            initial_shift: None,
            lambda_bar: Parameter::scalar(lambda_bar),
            neighborhood_radius,
            state_radius: 1.0,
            samples: 10_000,
            seed: 42,
        }
    }

    /// Declared constant of `g_λ(t, x) - τv` in `(x, v)`.
    pub fn lipschitz(&self) -> LipschitzData {
        LipschitzData {
            l: self.beta.max(self.tau),
            lp: self.lp,
        }
    }

    /// Checks the envelope hypotheses of the parallel circuit by sampling
    /// `(s, x, λ)` over `[0, 1] × [x0 - R, x0 + R] × neighborhood`. The series
    /// variant is globally Lipschitz and skips them.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(StabilityError::InvalidInput(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.variant == RlcVariant::Series {
            return Ok(());
        }
        if !(self.alpha0 > std::f64::consts::E) {
            return Err(StabilityError::HypothesisViolation(format!(
                "alpha0 = {} must exceed e",
                self.alpha0
            )));
        }
        let cap = (-self.alpha0).exp();
        let mut peak = 0.0_f64;
        for i in 0..=1000 {
            let w = (self.envelope)(i as f64 / 1000.0);
            if !(w > 0.0) {
                return Err(StabilityError::HypothesisViolation(format!(
                    "envelope must be positive, got {w} at s = {}",
                    i as f64 / 1000.0
                )));
            }
            peak = peak.max(w);
        }
        if peak > cap * (1.0 + 1e-12) {
            return Err(StabilityError::HypothesisViolation(format!(
                "max envelope {peak} exceeds e^-alpha0 = {cap}"
            )));
        }
        let center = self.lambda_bar.values()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.samples.max(1) {
            let s: f64 = rng.random_range(0.0..=1.0);
            let x = self.x0 + rng.random_range(-1.0..=1.0) * self.state_radius;
            let lam =
                Parameter::scalar(center + rng.random_range(-1.0..=1.0) * self.neighborhood_radius);
            let g = (self.forcing)(s, x, &lam);
            let limit = 0.5 * self.tau * (self.envelope)(s) * x.abs();
            if g.abs() > limit * (1.0 + 1e-12) + 1e-300 {
                return Err(StabilityError::HypothesisViolation(format!(
                    "|g| = {} exceeds envelope {limit} at s = {s}, x = {x}",
                    g.abs()
                )));
            }
        }
        Ok(())
    }
}

/// Family with right-hand side `g_λ(t, x) - τv` on `[0, 1]`, `L = max(β, τ)`.
pub fn rlc_family(m: &RlcModel) -> Result<ParametricFamily> {
    m.validate()?;
    let model = m.clone();
    let build = move |lam: &Parameter| -> Result<SecondOrderIvp> {
        let s = scalar_offset(lam, &model.lambda_bar)?;
        let (dx, dv) = model.initial_shift.unwrap_or((0.0, 0.0));
        let forcing = Arc::clone(&model.forcing);
        let tau = model.tau;
        let lam = lam.clone();
        SecondOrderIvp::new(
            Arc::new(move |t, x: &[f64], v: &[f64], out: &mut [f64]| {
                out[0] = forcing(t, x[0], &lam) - tau * v[0];
            }),
            VectorState::new(vec![model.x0 + s * dx])?,
            VectorState::new(vec![model.v0 + s * dv])?,
            1.0,
        )
    };
    let id = match m.variant {
        RlcVariant::Parallel => "rlc-parallel",
        RlcVariant::Series => "rlc-series",
    };
    Ok(ParametricFamily::new(
        id,
        m.lambda_bar.clone(),
        Arc::new(build),
        LipschitzData::new(m.beta.max(m.tau), m.lp)?,
        m.neighborhood_radius,
    )?
    .with_state_radius(m.state_radius))
}

/// Green's function of `x'' + τx'` with zero initial data:
/// `(1 - e^{τ(s - t)})/τ` for `s ≤ t`, else 0.
pub fn green_kernel(tau: f64, t: f64, s: f64) -> f64 {
    if s <= t {
        -(tau * (s - t)).exp_m1() / tau
    } else {
        0.0
    }
}

/// `max_t |x(t) - h(t) - ∫₀ᵗ G(t, s) g_λ(s, x(s)) ds|` by the trapezoid rule on
/// the trajectory grid, where `h(t) = x0 + v0(1 - e^{-τt})/τ` is the
/// free response (zero for the circuit's zero initial data).
pub fn rlc_integral_residual(traj: &Trajectory, m: &RlcModel, lambda: &Parameter) -> Result<f64> {
    if traj.dim() != 1 {
        return Err(StabilityError::GridMismatch(format!(
            "RLC trajectories are scalar, got dimension {}",
            traj.dim()
        )));
    }
    if (traj.horizon() - 1.0).abs() > 1e-12 {
        return Err(StabilityError::GridMismatch(format!(
            "RLC trajectories live on [0, 1], got horizon {}",
            traj.horizon()
        )));
    }
    let grid = traj.grid();
    let xs: Vec<f64> = traj.states().iter().map(|s| s[0]).collect();
    let x0 = xs[0];
    let v0 = traj.velocities()[0][0];
    let g: Vec<f64> = grid
        .iter()
        .zip(&xs)
        .map(|(s, x)| (m.forcing)(*s, *x, lambda))
        .collect();
    let mut worst = 0.0_f64;
    for (i, &t) in grid.iter().enumerate() {
        let mut integral = 0.0;
        for j in 0..i {
            let h = grid[j + 1] - grid[j];
            integral += 0.5
                * h
                * (green_kernel(m.tau, t, grid[j]) * g[j]
                    + green_kernel(m.tau, t, grid[j + 1]) * g[j + 1]);
        }
        let free = x0 + v0 * green_kernel(m.tau, t, 0.0);
        worst = worst.max((xs[i] - free - integral).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::integrate;

    #[test]
    fn green_kernel_values() {
        assert!((green_kernel(1.0, 1.0, 0.0) - (1.0 - (-1.0_f64).exp())).abs() < 1e-15);
        assert!((green_kernel(1.0, 1.0, 0.0) - 0.632_120_6).abs() < 1e-7);
        assert_eq!(green_kernel(2.0, 0.3, 0.7), 0.0);
        assert_eq!(green_kernel(2.0, 0.4, 0.4), 0.0);
    }

    #[test]
    fn default_model_passes_hypotheses() {
        let m = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2);
        m.validate().unwrap();
        let fam = rlc_family(&m).unwrap();
        assert_eq!(fam.lipschitz().l, 1.0);
        assert_eq!(fam.nominal().unwrap().horizon(), 1.0);
    }

    #[test]
    fn small_alpha0_is_rejected() {
        let m = RlcModel::default_parallel(1.0, 2.5, 0.0, 0.2);
        assert!(matches!(
            m.validate(),
            Err(StabilityError::HypothesisViolation(_))
        ));
    }

    #[test]
    fn oversized_forcing_is_rejected() {
        let mut m = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2);
        m.forcing = Arc::new(|_, x, _| 0.2 * x);
        assert!(matches!(
            rlc_family(&m),
            Err(StabilityError::HypothesisViolation(_))
        ));
    }

    #[test]
    fn declared_constants_dominate_sampled_derivatives() {
        let m = RlcModel::default_parallel(2.0, 3.0, 0.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..10_000 {
            let t: f64 = rng.random_range(0.0..=1.0);
            let x: f64 = rng.random_range(-1.0..=1.0);
            let lam: f64 = rng.random_range(-0.2..=0.2);
            let p = Parameter::scalar(lam);
            let dgdx = ((m.forcing)(t, x + h, &p) - (m.forcing)(t, x - h, &p)) / (2.0 * h);
            let dgdl = ((m.forcing)(t, x, &Parameter::scalar(lam + h))
                - (m.forcing)(t, x, &Parameter::scalar(lam - h)))
                / (2.0 * h);
            assert!(dgdx.abs() <= m.beta + 1e-8);
            assert!(dgdl.abs() <= m.lp + 1e-8);
        }
    }

    #[test]
    fn zero_forcing_stays_at_rest() {
        let mut m = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2).with_initial(0.0, 0.0);
        m.forcing = Arc::new(|_, _, _| 0.0);
        let fam = rlc_family(&m).unwrap();
        let traj = integrate(&fam.build(&Parameter::scalar(0.1)).unwrap(), 200).unwrap();
        assert!(traj.states().iter().all(|s| s[0] == 0.0));
        assert_eq!(
            rlc_integral_residual(&traj, &m, &Parameter::scalar(0.1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn integral_equation_holds_for_default_forcing() {
        let m = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2).with_initial(0.5, -0.3);
        let fam = rlc_family(&m).unwrap();
        let lam = Parameter::scalar(0.1);
        let traj = integrate(&fam.build(&lam).unwrap(), 2000).unwrap();
        let residual = rlc_integral_residual(&traj, &m, &lam).unwrap();
        assert!(residual <= 1e-4, "residual {residual}");
    }

    #[test]
    fn corrupted_trajectory_is_detected() {
        let mut m = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2);
        m.x0 = 0.5;
        let fam = rlc_family(&m).unwrap();
        let lam = Parameter::scalar(0.0);
        let traj = integrate(&fam.build(&lam).unwrap(), 500).unwrap();
        let mut states: Vec<VectorState> = traj.states().to_vec();
        for s in states.iter_mut().skip(1) {
            *s = VectorState::new(vec![s[0] + 0.1]).unwrap();
        }
        let bad = Trajectory::from_parts(
            traj.grid().to_vec(),
            states,
            traj.velocities().to_vec(),
            0.0,
        )
        .unwrap();
        assert!(rlc_integral_residual(&bad, &m, &lam).unwrap() > 1e-2);
    }

    #[test]
    fn series_variant_builds_charge_equation() {
        let m = RlcModel::series(2.0, 1.0, 0.5, 1.0, 0.0, 0.1);
        let fam = rlc_family(&m).unwrap();
        assert_eq!(fam.id(), "rlc-series");
        let ivp = fam.build(&Parameter::scalar(0.1)).unwrap();
        // q'' = V/L - q/(LC) - (R/L) q' with V = 1.1
        let out = ivp.eval(0.0, &[0.5], &[1.0]);
        assert!((out[0] - (1.1 - 1.0 - 2.0)).abs() < 1e-15);
        assert_eq!(fam.lipschitz().l, 2.0);
        assert_eq!(fam.lipschitz().lp, 1.0);
    }
}
