//! Perturbation sweeps: integrate a family at several parameter values,
//! measure deviations from the nominal trajectory, and compare them with the
//! closed-form bounds.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{main_coefficients, LcsConstants, LipschitzData};
use crate::error::{Result, StabilityError};
use crate::format_sci;
use crate::models::{observe, Parameter, ParametricFamily};
use crate::ode::{deviation, integrate_with_norm, NormKind, SecondOrderIvp, Trajectory};

/// Header of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str =
    "lambda,dev_x,dev_v,dev_z,bound_x,bound_v,bound_z,margin_x,margin_v,margin_z,status";

/// Slack floor added to every bound comparison.
pub const MIN_SLACK: f64 = 1e-8;

/// Tolerance before a sampled constant counts as exceeding the declared one.
pub const BREACH_TOLERANCE: f64 = 1e-9;

/// `max(1e-8, 10·(err_nominal + err_perturbed))`
pub fn slack(nominal_err: f64, perturbed_err: f64) -> f64 {
    MIN_SLACK.max(10.0 * (nominal_err + perturbed_err))
}

/// Region sampled by [`estimate_lipschitz`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingBox {
    pub horizon: f64,
    pub x_center: Vec<f64>,
    pub v_center: Vec<f64>,
    pub state_radius: f64,
    pub lambda_center: Parameter,
    pub lambda_radius: f64,
}

impl SamplingBox {
    /// `[0, T] × B(x0, r) × B(v0, r) × B(λ̄, ρ)` around the nominal problem.
    pub fn for_family(family: &ParametricFamily) -> Result<Self> {
        let nominal = family.nominal()?;
        Ok(Self {
            horizon: nominal.horizon(),
            x_center: nominal.x0().to_vec(),
            v_center: nominal.v0().to_vec(),
            state_radius: family.state_radius(),
            lambda_center: family.lambda_bar().clone(),
            lambda_radius: family.neighborhood_radius(),
        })
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("horizon", self.horizon),
            ("state radius", self.state_radius),
            ("parameter radius", self.lambda_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(StabilityError::DegenerateBox(format!("{name} is {v}")));
            }
        }
        if self.x_center.len() != self.v_center.len() || self.x_center.is_empty() {
            return Err(StabilityError::DegenerateBox("empty state box".into()));
        }
        Ok(())
    }
}

impl fmt::Display for SamplingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t in [0, {}], x in B({:?}, {r}), v in B({:?}, {r}), lambda in B({:?}, {})",
            self.horizon,
            self.x_center,
            self.v_center,
            self.lambda_center.values(),
            self.lambda_radius,
            r = self.state_radius,
        )
    }
}

/// Sampled lower bounds on the Lipschitz constants of a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub l_hat: f64,
    pub lp_hat: f64,
    pub samples: usize,
    #[serde(rename = "box")]
    pub sampling_box: String,
}

fn draw_box(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + radius * rng.random_range(-1.0..=1.0))
        .collect()
}

/// Running maxima of the state and parameter difference quotients over
/// `samples` i.i.d. draws. Draws are consumed in a fixed order, so the sample
/// stream for a larger count extends the stream for a smaller one.
///
/// States are drawn from the largest coordinate box inside the `norm` ball of
/// radius `state_radius`: half-width `r` for the sup norm, `r/√n` for the
/// Euclidean norm.
pub fn estimate_lipschitz(
    family: &ParametricFamily,
    sampling_box: &SamplingBox,
    samples: usize,
    seed: u64,
    norm: NormKind,
) -> Result<LipschitzEstimate> {
    if samples < 2 {
        return Err(StabilityError::InvalidInput(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    sampling_box.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut l_hat, mut lp_hat) = (0.0_f64, 0.0_f64);
    let center = sampling_box.lambda_center.values();
    let half_width = match norm {
        NormKind::Sup => sampling_box.state_radius,
        NormKind::Euclidean => {
            sampling_box.state_radius / (sampling_box.x_center.len() as f64).sqrt()
        }
    };
    for _ in 0..samples {
        let t = rng.random_range(0.0..=sampling_box.horizon);
        let lam = Parameter::new(draw_box(&mut rng, center, sampling_box.lambda_radius))?;
        let lam2 = Parameter::new(draw_box(&mut rng, center, sampling_box.lambda_radius))?;
        let x = draw_box(&mut rng, &sampling_box.x_center, half_width);
        let v = draw_box(&mut rng, &sampling_box.v_center, half_width);
        let x2 = draw_box(&mut rng, &sampling_box.x_center, half_width);
        let v2 = draw_box(&mut rng, &sampling_box.v_center, half_width);

        let ivp = family.build(&lam)?;
        let f = ivp.eval(t, &x, &v);
        let gap = norm.distance(&x, &x2) + norm.distance(&v, &v2);
        if gap > 0.0 {
            l_hat = l_hat.max(norm.distance(&f, &ivp.eval(t, &x2, &v2)) / gap);
        }
        let dlam = lam.distance(&lam2);
        if dlam > 0.0 {
            let f2 = family.build(&lam2)?.eval(t, &x, &v);
            lp_hat = lp_hat.max(norm.distance(&f, &f2) / dlam);
        }
    }
    Ok(LipschitzEstimate {
        l_hat,
        lp_hat,
        samples,
        sampling_box: sampling_box.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub steps: usize,
    pub norm: NormKind,
    pub seed: u64,
    /// Samples for the Lipschitz estimate; 0 skips estimation.
    pub lipschitz_samples: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            norm: NormKind::Sup,
            seed: 42,
            lipschitz_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// Some margin is below `-slack`.
    Violation,
    Failed {
        code: String,
        message: String,
    },
}

impl RowStatus {
    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::Violation => "violation".into(),
            RowStatus::Failed { code, .. } => format!("failed:{code}"),
        }
    }
}

impl Serialize for RowStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

/// Measured deviations, bounds and margins for one parameter value.
///
/// `margin_x` and `margin_v` are the smallest `bound(t_i) - deviation(t_i)`
/// over the grid, so they certify the bound at every grid time, not just
/// at `T`. `margin_z` is `bound_z - dev_z` since the observation bound is
/// uniform in time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowValues {
    pub dev_x: f64,
    pub dev_v: f64,
    pub dev_z: Option<f64>,
    pub bound_x: f64,
    pub bound_v: f64,
    pub bound_z: Option<f64>,
    pub bound_z_literal: Option<f64>,
    pub margin_x: f64,
    pub margin_v: f64,
    pub margin_z: Option<f64>,
    pub slack: f64,
    pub dx0: f64,
    pub dv0: f64,
    pub dlam: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: Parameter,
    pub status: RowStatus,
    pub values: Option<RowValues>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeta {
    pub model: String,
    pub steps: usize,
    pub norm: NormKind,
    pub seed: u64,
    pub horizon: f64,
    pub lambda_bar: Parameter,
    pub neighborhood_radius: f64,
    pub declared: LipschitzData,
    pub estimate: Option<LipschitzEstimate>,
    /// Sampled constants exceed the declared ones.
    pub lipschitz_breach: bool,
    pub observation_constants: Option<LcsConstants>,
    pub nominal_err_est: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(format_sci).unwrap_or_default()
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let mut status = row.status.label();
            if self.meta.lipschitz_breach {
                status.push_str(";lipschitz_breach");
            }
            let cells = match &row.values {
                Some(v) => [
                    format_sci(v.dev_x),
                    format_sci(v.dev_v),
                    opt_sci(v.dev_z),
                    format_sci(v.bound_x),
                    format_sci(v.bound_v),
                    opt_sci(v.bound_z),
                    format_sci(v.margin_x),
                    format_sci(v.margin_v),
                    opt_sci(v.margin_z),
                ],
                None => Default::default(),
            };
            out.push_str(&row.lambda.label());
            for c in cells {
                out.push(',');
                out.push_str(&c);
            }
            out.push(',');
            out.push_str(&status);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Nominal {
    ivp: SecondOrderIvp,
    traj: Trajectory,
    z: Option<Vec<Vec<f64>>>,
}

/// Integrates the nominal problem once and every `λ` on the shared grid, then
/// fills deviations, bounds and margins. Row failures are recorded rather than
/// aborting the sweep; only a failing nominal problem is fatal.
pub fn sweep(
    family: &ParametricFamily,
    lambdas: &[Parameter],
    options: &SweepOptions,
) -> Result<SweepReport> {
    let norm = options.norm;
    let ivp = family.nominal()?;
    let traj = integrate_with_norm(&ivp, options.steps, norm)?;
    let z = match family.observation() {
        Some(obs) => Some(observe(
            &traj,
            &obs.c,
            &(obs.d_of)(family.lambda_bar()),
            obs.control.as_ref(),
        )?),
        None => None,
    };
    let nominal = Nominal { ivp, traj, z };
    let lip = family.lipschitz();
    let coefficients = main_coefficients(lip, nominal.ivp.horizon())?;

    let estimate = if options.lipschitz_samples >= 2 {
        let sampling_box = SamplingBox::for_family(family)?;
        Some(estimate_lipschitz(
            family,
            &sampling_box,
            options.lipschitz_samples,
            options.seed,
            norm,
        )?)
    } else {
        None
    };
    let lipschitz_breach = estimate.as_ref().is_some_and(|e| {
        e.l_hat > lip.l + BREACH_TOLERANCE || e.lp_hat > lip.lp + BREACH_TOLERANCE
    });

    let rows: Vec<SweepRow> = lambdas
        .par_iter()
        .map(|lam| {
            let result = sweep_row(family, &nominal, lam, options, &coefficients);
            match result {
                Ok(values) => {
                    let violated = values.margin_x < -values.slack
                        || values.margin_v < -values.slack
                        || values.margin_z.is_some_and(|m| m < -values.slack);
                    SweepRow {
                        lambda: lam.clone(),
                        status: if violated {
                            RowStatus::Violation
                        } else {
                            RowStatus::Ok
                        },
                        values: Some(values),
                    }
                }
                Err(e) => SweepRow {
                    lambda: lam.clone(),
                    status: RowStatus::Failed {
                        code: e.code().into(),
                        message: e.to_string(),
                    },
                    values: None,
                },
            }
        })
        .collect();

    Ok(SweepReport {
        meta: SweepMeta {
            model: family.id().to_string(),
            steps: options.steps,
            norm,
            seed: options.seed,
            horizon: nominal.ivp.horizon(),
            lambda_bar: family.lambda_bar().clone(),
            neighborhood_radius: family.neighborhood_radius(),
            declared: lip,
            estimate,
            lipschitz_breach,
            observation_constants: family.observation().map(|o| o.constants),
            nominal_err_est: nominal.traj.err_est(),
            notes: Vec::new(),
        },
        rows,
    })
}

fn sweep_row(
    family: &ParametricFamily,
    nominal: &Nominal,
    lam: &Parameter,
    options: &SweepOptions,
    coefficients: &crate::bounds::BoundCoefficients,
) -> Result<RowValues> {
    let norm = options.norm;
    if !family.contains(lam) {
        return Err(StabilityError::InvalidInput(format!(
            "λ = {:?} lies outside the neighborhood of radius {}",
            lam.values(),
            family.neighborhood_radius()
        )));
    }
    let ivp = family.build(lam)?;
    let traj = integrate_with_norm(&ivp, options.steps, norm)?;
    let dev = deviation(&traj, &nominal.traj, norm)?;
    let dx0 = norm.distance(ivp.x0(), nominal.ivp.x0());
    let dv0 = norm.distance(ivp.v0(), nominal.ivp.v0());
    let dlam = lam.distance(family.lambda_bar());

    let horizon = traj.horizon();
    let mut margin_x = f64::INFINITY;
    let mut margin_v = f64::INFINITY;
    for (i, &t) in traj.grid().iter().enumerate() {
        margin_x = margin_x.min(coefficients.total(t, dx0, dv0, dlam) - dev.state[i]);
        margin_v = margin_v.min(coefficients.velocity(t, dx0, dv0, dlam) - dev.velocity[i]);
    }

    let (dev_z, bound_z, bound_z_literal, margin_z) =
        match (family.observation(), nominal.z.as_ref()) {
            (Some(obs), Some(z_nominal)) => {
                let z = observe(&traj, &obs.c, &(obs.d_of)(lam), obs.control.as_ref())?;
                let dev_z = z
                    .iter()
                    .zip(z_nominal)
                    .map(|(a, b)| norm.distance(a, b))
                    .fold(0.0, f64::max);
                let bound = obs.constants.total(dx0, dv0, dlam);
                (
                    Some(dev_z),
                    Some(bound),
                    Some(obs.constants.total_literal(dx0, dv0, dlam)),
                    Some(bound - dev_z),
                )
            }
            _ => (None, None, None, None),
        };

    Ok(RowValues {
        dev_x: dev.state_sup,
        dev_v: dev.velocity_sup,
        dev_z,
        bound_x: coefficients.total(horizon, dx0, dv0, dlam),
        bound_v: coefficients.velocity(horizon, dx0, dv0, dlam),
        bound_z,
        bound_z_literal,
        margin_x,
        margin_v,
        margin_z,
        slack: slack(nominal.traj.err_est(), traj.err_est()),
        dx0,
        dv0,
        dlam,
    })
}

/// Certification outcome for a report.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    /// A margin fell below `-slack`.
    Violation {
        row: usize,
        lambda: Parameter,
        column: &'static str,
        deviation: f64,
        bound: f64,
        margin: f64,
        slack: f64,
    },
    /// A row could not be computed.
    RowFailed {
        row: usize,
        lambda: Parameter,
        code: String,
        message: String,
    },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("PASS"),
            Verdict::Violation {
                row,
                lambda,
                column,
                deviation,
                bound,
                margin,
                slack,
            } => write!(
                f,
                "FAIL row {row} (lambda {:?}) column {column}: deviation {deviation:e}, bound {bound:e}, margin {margin:e} < -slack {slack:e}",
                lambda.values()
            ),
            Verdict::RowFailed {
                row,
                lambda,
                code,
                message,
            } => write!(
                f,
                "FAIL row {row} (lambda {:?}) {code}: {message}",
                lambda.values()
            ),
        }
    }
}

/// PASS iff every computed margin is at least `-slack` and no row failed.
pub fn certify(report: &SweepReport) -> Verdict {
    for (i, row) in report.rows.iter().enumerate() {
        let values = match (&row.status, &row.values) {
            (RowStatus::Failed { code, message }, _) => {
                return Verdict::RowFailed {
                    row: i,
                    lambda: row.lambda.clone(),
                    code: code.clone(),
                    message: message.clone(),
                }
            }
            (_, None) => {
                return Verdict::RowFailed {
                    row: i,
                    lambda: row.lambda.clone(),
                    code: "MISSING_VALUES".into(),
                    message: "row has no computed values".into(),
                }
            }
            (_, Some(v)) => v,
        };
        let columns = [
            (
                "x",
                Some(values.dev_x),
                Some(values.bound_x),
                Some(values.margin_x),
            ),
            (
                "v",
                Some(values.dev_v),
                Some(values.bound_v),
                Some(values.margin_v),
            ),
            ("z", values.dev_z, values.bound_z, values.margin_z),
        ];
        for (column, dev, bound, margin) in columns {
            if let (Some(deviation), Some(bound), Some(margin)) = (dev, bound, margin) {
                if margin < -values.slack {
                    return Verdict::Violation {
                        row: i,
                        lambda: row.lambda.clone(),
                        column,
                        deviation,
                        bound,
                        margin,
                        slack: values.slack,
                    };
                }
            }
        }
    }
    Verdict::Pass
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_family() -> ParametricFamily {
        let build = |lam: &Parameter| {
            let shift = lam.values()[0];
            SecondOrderIvp::from_fn(|_, _, _, out| out.fill(0.0), vec![shift], vec![0.0], 1.0)
        };
        ParametricFamily::new(
            "free",
            Parameter::scalar(0.0),
            std::sync::Arc::new(build),
            LipschitzData::new(0.0, 0.0).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn slack_has_a_floor() {
        assert_eq!(slack(0.0, 0.0), MIN_SLACK);
        assert_eq!(slack(1e-6, 2e-6), 10.0 * 3e-6);
    }

    #[test]
    fn status_labels() {
        assert_eq!(RowStatus::Ok.label(), "ok");
        assert_eq!(RowStatus::Violation.label(), "violation");
        let failed = RowStatus::Failed {
            code: "NONFINITE_STATE".into(),
            message: String::new(),
        };
        assert_eq!(failed.label(), "failed:NONFINITE_STATE");
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let fam = free_family();
        let mut b = SamplingBox::for_family(&fam).unwrap();
        b.state_radius = 0.0;
        let err = estimate_lipschitz(&fam, &b, 10, 1, NormKind::Sup).unwrap_err();
        assert_eq!(err.code(), "DEGENERATE_BOX");
    }

    #[test]
    fn shifted_free_motion_is_tight() {
        let opts = SweepOptions {
            steps: 16,
            lipschitz_samples: 0,
            ..SweepOptions::default()
        };
        let report = sweep(&free_family(), &[Parameter::scalar(0.5)], &opts).unwrap();
        let v = report.rows[0].values.as_ref().unwrap();
        assert_eq!((v.dev_x, v.bound_x, v.margin_x), (0.5, 0.5, 0.0));
        assert_eq!(v.dev_z, None);
        let csv = report.to_csv();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with(",,ok"), "{line}");
        assert_eq!(line.split(',').count(), SWEEP_CSV_HEADER.split(',').count());
        assert!(certify(&report).is_pass());
    }
}
