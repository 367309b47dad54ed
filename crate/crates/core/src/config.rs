//! JSON model configuration.
//!
//! ```json
//! {"model": "lcs", "T": 1.0, "gamma": 1.0,
//!  "matrices": {"A": [[0, -3], [1, -4]], "C": [[1, 1], [1, 1]]},
//!  "x0": [1, 1], "v0": [0, 1], "lambda_bar": 0.0,
//!  "lambdas": [0.2, 0.1, 0.05, 0.01], "perturb_initial": false,
//!  "r": 0.5, "steps": 1000, "norm": "sup"}
//! ```
//!
//! Unknown keys are rejected. [`ModelConfig::resolve`] fills every default so
//! the resolved document reproduces the same run when parsed again.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StabilityError};
use crate::harness::SweepOptions;
use crate::models::{
    cocoercive_family, lcs_family, matrix_from_rows, matrix_rows, rlc_family, CocoerciveModel,
    LcsModel, LcsPerturbation, Parameter, ParametricFamily, RlcModel, RlcVariant,
};
use crate::ode::{NormKind, VectorState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lcs,
    Rlc,
    Cocoercive,
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrices {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
}

/// Derivatives of the perturbed data with respect to `λ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Matrices>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_initial: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_samples: Option<usize>,
    /// Constant control vector (linear control systems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<f64>>,
    /// `R / L` (RLC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<RlcVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resistance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacitance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<f64>,
}

fn err(msg: impl Into<String>) -> StabilityError {
    StabilityError::Config(msg.into())
}

fn matrix(rows: &Option<Rows>, name: &str) -> Result<DMatrix<f64>> {
    let rows = rows
        .as_ref()
        .ok_or_else(|| err(format!("missing matrix {name}")))?;
    matrix_from_rows(rows).map_err(|e| err(format!("matrix {name}: {e}")))
}

fn identity_rows(n: usize) -> Rows {
    matrix_rows(&DMatrix::identity(n, n))
}

fn ones(n: usize, value: f64) -> Vec<f64> {
    vec![value; n]
}

const DEFAULT_LAMBDAS: [f64; 4] = [0.2, 0.1, 0.05, 0.01];

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| err(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The default configuration for a model kind.
    pub fn defaults(model: ModelKind) -> Self {
        ModelConfig {
            model,
            horizon: None,
            gamma: None,
            matrices: None,
            x0: None,
            v0: None,
            lambda_bar: None,
            lambdas: None,
            perturb_initial: None,
            perturbation: None,
            neighborhood_radius: None,
            r: None,
            steps: None,
            norm: None,
            seed: None,
            lipschitz_samples: None,
            control: None,
            tau: None,
            alpha0: None,
            variant: None,
            resistance: None,
            inductance: None,
            capacitance: None,
            voltage: None,
        }
        .resolve()
        .expect("built-in defaults are valid")
    }

    /// Fills every unset field with its default and checks field consistency.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let lambda_bar = *c.lambda_bar.get_or_insert(0.0);
        let lambdas = c
            .lambdas
            .get_or_insert_with(|| DEFAULT_LAMBDAS.to_vec())
            .clone();
        if lambdas.is_empty() {
            return Err(err("lambdas must be nonempty"));
        }
        let perturb_initial = *c.perturb_initial.get_or_insert(false);
        c.r.get_or_insert(0.5);
        c.steps.get_or_insert(1000);
        c.norm.get_or_insert(NormKind::Sup);
        c.seed.get_or_insert(42);
        c.lipschitz_samples.get_or_insert(10_000);
        if c.neighborhood_radius.is_none() {
            let widest = lambdas
                .iter()
                .map(|l| (l - lambda_bar).abs())
                .fold(0.0, f64::max);
            c.neighborhood_radius = Some(if widest > 0.0 { widest } else { 0.2 });
        }

        match c.model {
            ModelKind::Lcs => {
                c.horizon.get_or_insert(1.0);
                c.gamma.get_or_insert(1.0);
                let m = c.matrices.get_or_insert_with(Matrices::default);
                m.a.get_or_insert_with(|| vec![vec![0.0, -3.0], vec![1.0, -4.0]]);
                let n = m.a.as_ref().map_or(0, Vec::len);
                m.b.get_or_insert_with(|| vec![vec![0.0; n]; n]);
                m.c.get_or_insert_with(|| vec![vec![1.0; n]; n]);
                let (crows, bcols) = (
                    m.c.as_ref().map_or(0, Vec::len),
                    m.b.as_ref().and_then(|b| b.first()).map_or(0, Vec::len),
                );
                m.d.get_or_insert_with(|| vec![vec![0.0; bcols]; crows]);
                c.x0.get_or_insert_with(|| ones(n, 1.0));
                c.v0.get_or_insert_with(|| {
                    let mut v = vec![0.0; n];
                    if let Some(last) = v.last_mut() {
                        *last = 1.0;
                    }
                    v
                });
                c.control.get_or_insert_with(|| ones(bcols, 1.0));
                let p = c
                    .perturbation
                    .get_or_insert_with(PerturbationConfig::default);
                p.a.get_or_insert_with(|| identity_rows(n));
                p.b.get_or_insert_with(|| {
                    if bcols == n {
                        identity_rows(n)
                    } else {
                        vec![vec![0.0; bcols]; n]
                    }
                });
                p.d.get_or_insert_with(|| {
                    if bcols == crows {
                        identity_rows(crows)
                    } else {
                        vec![vec![0.0; bcols]; crows]
                    }
                });
                p.x0.get_or_insert_with(|| ones(n, if perturb_initial { 1.0 } else { 0.0 }));
                p.v0.get_or_insert_with(|| ones(n, 0.0));
            }
            ModelKind::Cocoercive => {
                c.horizon.get_or_insert(1.0);
                c.gamma.get_or_insert(3.0);
                let m = c.matrices.get_or_insert_with(Matrices::default);
                m.a.get_or_insert_with(|| vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
                let n = m.a.as_ref().map_or(0, Vec::len);
                if m.b.is_some() || m.c.is_some() || m.d.is_some() {
                    return Err(err("cocoercive models take only matrix A"));
                }
                c.x0.get_or_insert_with(|| ones(n, 1.0));
                c.v0.get_or_insert_with(|| ones(n, 0.0));
                let p = c
                    .perturbation
                    .get_or_insert_with(PerturbationConfig::default);
                if p.b.is_some() || p.d.is_some() {
                    return Err(err("cocoercive perturbations take only A, x0, v0"));
                }
                p.a.get_or_insert_with(|| identity_rows(n));
                p.x0.get_or_insert_with(|| ones(n, if perturb_initial { 1.0 } else { 0.0 }));
                p.v0.get_or_insert_with(|| ones(n, 0.0));
            }
            ModelKind::Rlc => {
                if c.horizon.is_some_and(|t| t != 1.0) {
                    return Err(err("RLC models live on [0, 1]; T must be 1"));
                }
                c.horizon = Some(1.0);
                if c.matrices.is_some() || c.gamma.is_some() || c.control.is_some() {
                    return Err(err("RLC models take no matrices, gamma or control"));
                }
                let variant = *c.variant.get_or_insert(RlcVariant::Parallel);
                let start = match variant {
                    RlcVariant::Parallel => 0.5,
                    RlcVariant::Series => 0.0,
                };
                c.x0.get_or_insert_with(|| vec![start]);
                c.v0.get_or_insert_with(|| vec![start]);
                let p = c
                    .perturbation
                    .get_or_insert_with(PerturbationConfig::default);
                if p.a.is_some() || p.b.is_some() || p.d.is_some() {
                    return Err(err("RLC perturbations take only x0, v0"));
                }
                p.x0.get_or_insert_with(|| vec![if perturb_initial { 1.0 } else { 0.0 }]);
                p.v0.get_or_insert_with(|| vec![0.0]);
                match variant {
                    RlcVariant::Parallel => {
                        c.tau.get_or_insert(1.0);
                        c.alpha0.get_or_insert(3.0);
                    }
                    RlcVariant::Series => {
                        c.resistance.get_or_insert(2.0);
                        c.inductance.get_or_insert(1.0);
                        c.capacitance.get_or_insert(0.5);
                        c.voltage.get_or_insert(1.0);
                    }
                }
            }
        }
        Ok(c)
    }

    pub fn lambda_bar(&self) -> Parameter {
        Parameter::scalar(self.lambda_bar.unwrap_or(0.0))
    }

    pub fn lambdas(&self) -> Result<Vec<Parameter>> {
        let resolved = self.resolve()?;
        resolved
            .lambdas
            .unwrap_or_default()
            .into_iter()
            .map(|l| Parameter::new(vec![l]).map_err(|e| err(e.to_string())))
            .collect()
    }

    pub fn sweep_options(&self) -> Result<SweepOptions> {
        let r = self.resolve()?;
        Ok(SweepOptions {
            steps: r.steps.unwrap_or(1000),
            norm: r.norm.unwrap_or_default(),
            seed: r.seed.unwrap_or(42),
            lipschitz_samples: r.lipschitz_samples.unwrap_or(10_000),
        })
    }

    /// Builds the parametric family described by this configuration.
    pub fn build_family(&self) -> Result<ParametricFamily> {
        let c = self.resolve()?;
        let vec_state = |v: &Option<Vec<f64>>, name: &str| -> Result<VectorState> {
            VectorState::new(v.clone().unwrap_or_default()).map_err(|e| err(format!("{name}: {e}")))
        };
        let lambda_bar = c.lambda_bar.unwrap_or(0.0);
        let radius = c.neighborhood_radius.unwrap_or(0.2);
        let horizon = c.horizon.unwrap_or(1.0);
        let r = c.r.unwrap_or(0.5);
        let pert = c.perturbation.clone().unwrap_or_default();
        match c.model {
            ModelKind::Lcs => {
                let m = c.matrices.clone().unwrap_or_default();
                let control = c.control.clone().unwrap_or_default();
                let model = LcsModel {
                    a: matrix(&m.a, "A")?,
                    b: matrix(&m.b, "B")?,
                    c: matrix(&m.c, "C")?,
                    d: matrix(&m.d, "D")?,
                    gamma: c.gamma.unwrap_or(1.0),
                    control: Arc::new(move |_| control.clone()),
                    x0: vec_state(&c.x0, "x0")?,
                    v0: vec_state(&c.v0, "v0")?,
                    perturbation: LcsPerturbation {
                        a: matrix(&pert.a, "perturbation.A")?,
                        b: matrix(&pert.b, "perturbation.B")?,
                        d: matrix(&pert.d, "perturbation.D")?,
                        x0: pert.x0.clone().unwrap_or_default(),
                        v0: pert.v0.clone().unwrap_or_default(),
                    },
                    lambda_bar: Parameter::scalar(lambda_bar),
                    neighborhood_radius: radius,
                    horizon,
                    r,
                    norm: c.norm.unwrap_or_default(),
                };
                lcs_family(&model)
            }
            ModelKind::Cocoercive => {
                let m = c.matrices.clone().unwrap_or_default();
                let u0 = vec_state(&c.x0, "x0")?;
                let v0 = vec_state(&c.v0, "v0")?;
                let (dx, dv) = (
                    pert.x0.clone().unwrap_or_default(),
                    pert.v0.clone().unwrap_or_default(),
                );
                if dx.len() != u0.len() || dv.len() != u0.len() {
                    return Err(err("perturbation.x0/v0 must match the state dimension"));
                }
                let mut model = CocoerciveModel::affine(
                    matrix(&m.a, "A")?,
                    matrix(&pert.a, "perturbation.A")?,
                    c.gamma.unwrap_or(3.0),
                    u0,
                    v0,
                    lambda_bar,
                    radius,
                    horizon,
                );
                model.initial_shift = Some((dx, dv));
                model.state_radius = r;
                model.seed = c.seed.unwrap_or(42);
                model.norm = c.norm.unwrap_or_default();
                cocoercive_family(&model)
            }
            ModelKind::Rlc => {
                let scalar = |v: &Option<Vec<f64>>, name: &str| -> Result<f64> {
                    match v.as_deref() {
                        Some([x]) => Ok(*x),
                        _ => Err(err(format!("{name} must have exactly one entry for RLC"))),
                    }
                };
                let mut model = match c.variant.unwrap_or_default() {
                    RlcVariant::Parallel => RlcModel::default_parallel(
                        c.tau.unwrap_or(1.0),
                        c.alpha0.unwrap_or(3.0),
                        lambda_bar,
                        radius,
                    ),
                    RlcVariant::Series => RlcModel::series(
                        c.resistance.unwrap_or(2.0),
                        c.inductance.unwrap_or(1.0),
                        c.capacitance.unwrap_or(0.5),
                        c.voltage.unwrap_or(1.0),
                        lambda_bar,
                        radius,
                    ),
                };
                model = model.with_initial(scalar(&c.x0, "x0")?, scalar(&c.v0, "v0")?);
                model.initial_shift = Some((
                    scalar(&pert.x0, "perturbation.x0")?,
                    scalar(&pert.v0, "perturbation.v0")?,
                ));
                model.seed = c.seed.unwrap_or(42);
                rlc_family(&model)
            }
        }
    }
}
