//! Second-order initial-value problems and their fixed-step integration.
//!
//! A problem `x'' = f(t, x, x')` is integrated by augmenting to the first-order
//! system `u' = (v, f(t, x, v))` on `u = (x, v)` and stepping it with the
//! classical four-stage Runge-Kutta method on a uniform grid. The global error
//! is estimated by re-solving with twice as many steps and comparing the two
//! solutions on the coarse grid.

use std::fmt;
use std::io::{self, Write};
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabilityError};
use crate::format_sci;

/// Vector norm used to measure states and deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormKind {
    /// `max_i |y_i|`
    #[default]
    #[serde(rename = "sup")]
    Sup,
    /// `(sum_i y_i^2)^(1/2)`
    #[serde(rename = "euclid", alias = "euclidean")]
    Euclidean,
}

impl NormKind {
    pub fn norm(self, y: &[f64]) -> f64 {
        match self {
            NormKind::Sup => y.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            NormKind::Euclidean => y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// `‖a - b‖` without allocating.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            NormKind::Sup => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())),
            NormKind::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NormKind::Sup => "sup",
            NormKind::Euclidean => "euclid",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for NormKind {
    type Err = StabilityError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(NormKind::Sup),
            "euclid" | "euclidean" => Ok(NormKind::Euclidean),
            other => Err(StabilityError::Config(format!("unknown norm `{other}`"))),
        }
    }
}

/// A finite real vector of fixed length.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct VectorState(Vec<f64>);

impl VectorState {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(StabilityError::InvalidInput("empty state vector".into()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(StabilityError::InvalidInput(format!(
                "state entry {i} is not finite"
            )));
        }
        Ok(VectorState(entries))
    }

    pub fn zeros(n: usize) -> Self {
        VectorState(vec![0.0; n.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for VectorState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for VectorState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        VectorState::new(v).map_err(serde::de::Error::custom)
    }
}

/// Right-hand side `f(t, x, v)` written into the output slice.
pub type SecondOrderRhs = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Right-hand side `g(t, u)` of a first-order system.
pub type FirstOrderRhs = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// `x'' = f(t, x, x')`, `x(0) = x0`, `x'(0) = v0` on `[0, T]`.
#[derive(Clone)]
pub struct SecondOrderIvp {
    rhs: Arc<SecondOrderRhs>,
    x0: VectorState,
    v0: VectorState,
    horizon: f64,
}

impl fmt::Debug for SecondOrderIvp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecondOrderIvp")
            .field("dim", &self.dim())
            .field("x0", &self.x0)
            .field("v0", &self.v0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl SecondOrderIvp {
    pub fn new(
        rhs: Arc<SecondOrderRhs>,
        x0: VectorState,
        v0: VectorState,
        horizon: f64,
    ) -> Result<Self> {
        if x0.len() != v0.len() {
            return Err(StabilityError::DimMismatch(format!(
                "x0 has length {}, v0 has length {}",
                x0.len(),
                v0.len()
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(StabilityError::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            rhs,
            x0,
            v0,
            horizon,
        })
    }

    /// Convenience constructor from a closure.
    pub fn from_fn<F>(rhs: F, x0: Vec<f64>, v0: Vec<f64>, horizon: f64) -> Result<Self>
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(
            Arc::new(rhs),
            VectorState::new(x0)?,
            VectorState::new(v0)?,
            horizon,
        )
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &VectorState {
        &self.x0
    }

    pub fn v0(&self) -> &VectorState {
        &self.v0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rhs(&self) -> &Arc<SecondOrderRhs> {
        &self.rhs
    }

    /// Evaluates `f(t, x, v)`.
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        (self.rhs)(t, x, v, &mut out);
        out
    }
}

/// `u' = g(t, u)`, `u(0) = u0` on `[0, T]`.
#[derive(Clone)]
pub struct FirstOrderSystem {
    pub rhs: Arc<FirstOrderRhs>,
    pub u0: Vec<f64>,
    pub horizon: f64,
}

impl FirstOrderSystem {
    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        (self.rhs)(t, u, &mut out);
        out
    }
}

/// Rewrites `x'' = f(t, x, x')` as `u' = (u_v, f(t, u_x, u_v))` with `u = (x, v)`.
pub fn augment(ivp: &SecondOrderIvp) -> FirstOrderSystem {
    let n = ivp.dim();
    let f = Arc::clone(&ivp.rhs);
    let rhs = move |t: f64, u: &[f64], du: &mut [f64]| {
        let (x, v) = u.split_at(n);
        let (dx, dv) = du.split_at_mut(n);
        dx.copy_from_slice(v);
        f(t, x, v, dv);
    };
    let mut u0 = Vec::with_capacity(2 * n);
    u0.extend_from_slice(&ivp.x0);
    u0.extend_from_slice(&ivp.v0);
    FirstOrderSystem {
        rhs: Arc::new(rhs),
        u0,
        horizon: ivp.horizon,
    }
}

/// Sampled solution of a second-order problem on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    states: Vec<VectorState>,
    velocities: Vec<VectorState>,
    err_est: f64,
}

impl Trajectory {
    /// Assembles a trajectory from samples, checking the grid and shape invariants.
    pub fn from_parts(
        grid: Vec<f64>,
        states: Vec<VectorState>,
        velocities: Vec<VectorState>,
        err_est: f64,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(StabilityError::InvalidInput(
                "trajectory needs at least two grid points".into(),
            ));
        }
        if grid[0] != 0.0 {
            return Err(StabilityError::InvalidInput(
                "trajectory grid must start at 0".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StabilityError::InvalidInput(
                "trajectory grid must be strictly increasing".into(),
            ));
        }
        if states.len() != grid.len() || velocities.len() != grid.len() {
            return Err(StabilityError::DimMismatch(
                "sample count differs from grid length".into(),
            ));
        }
        let n = states[0].len();
        if states.iter().chain(&velocities).any(|s| s.len() != n) {
            return Err(StabilityError::DimMismatch(
                "samples have differing dimensions".into(),
            ));
        }
        if !(err_est >= 0.0) {
            return Err(StabilityError::InvalidInput(
                "error estimate must be nonnegative".into(),
            ));
        }
        Ok(Self {
            grid,
            states,
            velocities,
            err_est,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[VectorState] {
        &self.states
    }

    pub fn velocities(&self) -> &[VectorState] {
        &self.velocities
    }

    pub fn err_est(&self) -> f64 {
        self.err_est
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid is nonempty")
    }

    pub fn final_state(&self) -> &VectorState {
        self.states.last().expect("grid is nonempty")
    }

    pub fn final_velocity(&self) -> &VectorState {
        self.velocities.last().expect("grid is nonempty")
    }

    /// Writes `t,x_1..x_n,v_1..v_n` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.dim();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x_{i}"));
        }
        for i in 1..=n {
            header.push_str(&format!(",v_{i}"));
        }
        writeln!(w, "{header}")?;
        for ((t, x), v) in self.grid.iter().zip(&self.states).zip(&self.velocities) {
            let mut line = format_sci(*t);
            for value in x.iter().chain(v.iter()) {
                line.push(',');
                line.push_str(&format_sci(*value));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Classical RK4 on a uniform grid of `steps` intervals; returns the grid and
/// the augmented states. Fails fast on the first non-finite stage value.
pub fn rk4_fixed(system: &FirstOrderSystem, steps: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = steps;
    let d = system.dim();
    let t_end = system.horizon;
    let h = t_end / m as f64;
    let mut grid = Vec::with_capacity(m + 1);
    let mut out = Vec::with_capacity(m + 1);
    let mut u = system.u0.clone();
    grid.push(0.0);
    out.push(u.clone());

    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for i in 0..m {
        let t = t_end * i as f64 / m as f64;
        (system.rhs)(t, &u, &mut k1);
        for j in 0..d {
            tmp[j] = u[j] + 0.5 * h * k1[j];
        }
        (system.rhs)(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..d {
            tmp[j] = u[j] + 0.5 * h * k2[j];
        }
        (system.rhs)(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..d {
            tmp[j] = u[j] + h * k3[j];
        }
        (system.rhs)(t + h, &tmp, &mut k4);
        for j in 0..d {
            u[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = if i + 1 == m {
            t_end
        } else {
            t_end * (i + 1) as f64 / m as f64
        };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(StabilityError::NonFiniteState { time: t_next });
        }
        grid.push(t_next);
        out.push(u.clone());
    }
    Ok((grid, out))
}

/// Integrates with `steps` uniform RK4 steps, estimating the global error in
/// the sup norm.
pub fn integrate(ivp: &SecondOrderIvp, steps: usize) -> Result<Trajectory> {
    integrate_with_norm(ivp, steps, NormKind::Sup)
}

/// Integrates with `steps` uniform RK4 steps. `err_est` is the largest
/// deviation (in `norm`, over position and velocity) between this solution
/// and one computed with `2 * steps` steps, sampled on the coarse grid.
pub fn integrate_with_norm(
    ivp: &SecondOrderIvp,
    steps: usize,
    norm: NormKind,
) -> Result<Trajectory> {
    if steps < 2 {
        return Err(StabilityError::InvalidInput(format!(
            "need at least 2 steps, got {steps}"
        )));
    }
    let n = ivp.dim();
    let system = augment(ivp);
    let (grid, coarse) = rk4_fixed(&system, steps)?;
    let (_, fine) = rk4_fixed(&system, 2 * steps)?;

    let err_est = coarse
        .iter()
        .zip(fine.iter().step_by(2))
        .map(|(c, f)| {
            let dx = norm.distance(&c[..n], &f[..n]);
            let dv = norm.distance(&c[n..], &f[n..]);
            dx.max(dv)
        })
        .fold(0.0_f64, f64::max);

    let mut states = Vec::with_capacity(coarse.len());
    let mut velocities = Vec::with_capacity(coarse.len());
    for u in coarse {
        states.push(VectorState(u[..n].to_vec()));
        velocities.push(VectorState(u[n..].to_vec()));
    }
    // RK4 reproduces the initial sample exactly; keep the caller's vectors.
    states[0] = ivp.x0.clone();
    velocities[0] = ivp.v0.clone();
    Ok(Trajectory {
        grid,
        states,
        velocities,
        err_est,
    })
}

/// Pointwise deviation between two trajectories on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    /// `‖a.x(t_i) - b.x(t_i)‖`
    pub state: Vec<f64>,
    pub state_sup: f64,
    /// `‖a.v(t_i) - b.v(t_i)‖`
    pub velocity: Vec<f64>,
    pub velocity_sup: f64,
}

/// Compares two trajectories sample by sample. The grids must be identical.
pub fn deviation(a: &Trajectory, b: &Trajectory, norm: NormKind) -> Result<Deviation> {
    if a.grid != b.grid {
        return Err(StabilityError::GridMismatch(format!(
            "grids differ ({} vs {} points)",
            a.grid.len(),
            b.grid.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(StabilityError::GridMismatch(format!(
            "dimensions differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let state: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| norm.distance(x, y))
        .collect();
    let velocity: Vec<f64> = a
        .velocities
        .iter()
        .zip(&b.velocities)
        .map(|(x, y)| norm.distance(x, y))
        .collect();
    let state_sup = state.iter().copied().fold(0.0, f64::max);
    let velocity_sup = velocity.iter().copied().fold(0.0, f64::max);
    Ok(Deviation {
        state,
        state_sup,
        velocity,
        velocity_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn oscillator(steps_horizon: f64) -> SecondOrderIvp {
        SecondOrderIvp::from_fn(
            |_, x, _, out| out[0] = -x[0],
            vec![1.0],
            vec![0.0],
            steps_horizon,
        )
        .unwrap()
    }

    #[test]
    fn augment_free_motion() {
        let ivp = SecondOrderIvp::from_fn(|_, _, _, out| out[0] = 0.0, vec![1.0], vec![2.0], 1.0)
            .unwrap();
        let sys = augment(&ivp);
        assert_eq!(sys.u0, vec![1.0, 2.0]);
        assert_eq!(sys.eval(0.3, &[5.0, -7.0]), vec![-7.0, 0.0]);
    }

    #[test]
    fn augment_oscillator() {
        let sys = augment(&oscillator(1.0));
        assert_eq!(sys.eval(0.0, &[0.25, 3.0]), vec![3.0, -0.25]);
    }

    #[test]
    fn augment_linear_control_system() {
        // x'' = A x + gamma x' + B u with A = [[0,-3],[1,-4]], gamma = 1, B = I, u = (1,1)
        let ivp = SecondOrderIvp::from_fn(
            |_, x, v, out| {
                out[0] = -3.0 * x[1] + v[0] + 1.0;
                out[1] = x[0] - 4.0 * x[1] + v[1] + 1.0;
            },
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let sys = augment(&ivp);
        assert_eq!(sys.u0, vec![1.0, 1.0, 0.0, 1.0]);
        let du = sys.eval(0.0, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(du, vec![3.0, 4.0, -6.0 + 3.0 + 1.0, 1.0 - 8.0 + 4.0 + 1.0]);
    }

    #[test]
    fn damped_free_particle_matches_closed_form() {
        let ivp = SecondOrderIvp::from_fn(|_, _, v, out| out[0] = -v[0], vec![0.0], vec![1.0], 1.0)
            .unwrap();
        let traj = integrate(&ivp, 1000).unwrap();
        let exact = 1.0 - (-1.0_f64).exp();
        assert_abs_diff_eq!(traj.final_state()[0], exact, epsilon = 1e-9);
        assert_abs_diff_eq!(exact, 0.632_120_6, epsilon = 1e-7);
    }

    #[test]
    fn oscillator_half_period() {
        let traj = integrate(&oscillator(PI), 2000).unwrap();
        assert_abs_diff_eq!(traj.final_state()[0], -1.0, epsilon = 1e-8);
        assert!(traj.err_est() < 1e-8);
    }

    #[test]
    fn free_motion_is_exact() {
        let ivp = SecondOrderIvp::from_fn(
            |_, _, _, out| out.fill(0.0),
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        // dyadic step: no rounding at all
        let traj = integrate(&ivp, 8).unwrap();
        assert_eq!(traj.final_state().as_slice(), &[1.0, 2.0]);
        let traj = integrate(&ivp, 7).unwrap();
        assert_eq!(traj.grid().last(), Some(&1.0));
        assert!((traj.final_state()[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn trajectory_starts_at_initial_data() {
        let traj = integrate(&oscillator(2.0), 10).unwrap();
        assert_eq!(traj.states()[0].as_slice(), &[1.0]);
        assert_eq!(traj.velocities()[0].as_slice(), &[0.0]);
        assert_eq!(traj.grid()[0], 0.0);
        assert_eq!(traj.horizon(), 2.0);
        assert!(traj.grid().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        // x' = x^2 from x(0) = 1 blows up at t = 1.
        let ivp = SecondOrderIvp::from_fn(
            |_, x, _, out| out[0] = 1e300 * x[0] * x[0],
            vec![1.0],
            vec![1.0],
            2.0,
        )
        .unwrap();
        match integrate(&ivp, 100) {
            Err(StabilityError::NonFiniteState { time }) => assert!(time > 0.0 && time <= 2.0),
            other => panic!("expected NonFiniteState, got {other:?}"),
        }
    }

    #[test]
    fn rejects_too_few_steps_and_bad_dims() {
        assert!(integrate(&oscillator(1.0), 1).is_err());
        assert!(SecondOrderIvp::from_fn(|_, _, _, _| {}, vec![1.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(SecondOrderIvp::from_fn(|_, _, _, _| {}, vec![1.0], vec![1.0], 0.0).is_err());
        assert!(VectorState::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn deviation_of_identical_and_shifted() {
        let a = integrate(&oscillator(1.0), 20).unwrap();
        let d = deviation(&a, &a, NormKind::Sup).unwrap();
        assert!(d.state.iter().all(|v| *v == 0.0));
        assert_eq!(d.state_sup, 0.0);

        let shifted = Trajectory::from_parts(
            a.grid().to_vec(),
            a.states()
                .iter()
                .map(|s| VectorState::new(vec![s[0] + 0.125]).unwrap())
                .collect(),
            a.velocities().to_vec(),
            0.0,
        )
        .unwrap();
        let d = deviation(&a, &shifted, NormKind::Euclidean).unwrap();
        assert_abs_diff_eq!(d.state_sup, 0.125, epsilon = 1e-15);
        assert_eq!(d.velocity_sup, 0.0);
    }

    #[test]
    fn deviation_rejects_mismatched_grids() {
        let a = integrate(&oscillator(1.0), 20).unwrap();
        let b = integrate(&oscillator(1.0), 21).unwrap();
        assert!(matches!(
            deviation(&a, &b, NormKind::Sup),
            Err(StabilityError::GridMismatch(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let ivp = SecondOrderIvp::from_fn(
            |_, _, _, out| out.fill(0.0),
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let csv = integrate(&ivp, 2).unwrap().to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x_1,x_2,v_1,v_2"));
        let row: Vec<f64> = lines
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.5, 1.0, 1.5, 0.0, 1.0]);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("sup".parse::<NormKind>().unwrap(), NormKind::Sup);
        assert_eq!("euclid".parse::<NormKind>().unwrap(), NormKind::Euclidean);
        assert!("l1".parse::<NormKind>().is_err());
    }
}
