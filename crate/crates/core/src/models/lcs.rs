//! Second-order linear control systems
//!
//! ```text
//! x'' = A_λ x + γ x' + B_λ u(t)
//! z   = C(x + x') + D_λ u(t)
//! ```
//!
//! with `A_λ, B_λ, D_λ` and the initial data affine in the scalar `s = λ - λ̄`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{
    induced_norm, mat_vec, scalar_offset, ControlFn, Observation, Parameter, ParametricFamily,
};
use crate::bounds::{lcs_constants, LcsConstants, LipschitzData};
use crate::error::{Result, StabilityError};
use crate::ode::{NormKind, SecondOrderIvp, VectorState};

/// Derivatives of the perturbed data with respect to `s = λ - λ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcsPerturbation {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Clone)]
pub struct LcsModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub gamma: f64,
    pub control: Arc<ControlFn>,
    pub x0: VectorState,
    pub v0: VectorState,
    pub perturbation: LcsPerturbation,
    pub lambda_bar: Parameter,
    pub neighborhood_radius: f64,
    pub horizon: f64,
    /// Radius of the state ball assumed to contain the trajectories.
    pub r: f64,
    /// Norm the declared constants refer to.
    pub norm: NormKind,
}

impl fmt::Debug for LcsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LcsModel")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("d", &self.d)
            .field("gamma", &self.gamma)
            .field("x0", &self.x0)
            .field("v0", &self.v0)
            .field("perturbation", &self.perturbation)
            .field("lambda_bar", &self.lambda_bar)
            .field("neighborhood_radius", &self.neighborhood_radius)
            .field("horizon", &self.horizon)
            .field("r", &self.r)
            .finish_non_exhaustive()
    }
}

/// Perturbed data at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct LcsInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl LcsModel {
    /// The two-dimensional benchmark: `A = [[0, -3], [1, -4]]`, `C` all ones,
    /// `B = D = 0`, constant control `(1, 1)`, `x0 = (1, 1)`, `v0 = (0, 1)`,
    /// `A_λ = A + λI`, `B_λ = D_λ = λI`, `λ̄ = 0`, with `γ = 1`, `T = 1`,
    /// `r = 0.5` and neighborhood radius 0.2. With `perturb_initial`,
    /// `x_{0,λ} = (1 + λ, 1 + λ)`.
    pub fn fig3(perturb_initial: bool) -> Self {
        let eye = DMatrix::identity(2, 2);
        Self {
            a: DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 1.0, -4.0]),
            b: DMatrix::zeros(2, 2),
            c: DMatrix::from_element(2, 2, 1.0),
            d: DMatrix::zeros(2, 2),
            gamma: 1.0,
            control: Arc::new(|_| vec![1.0, 1.0]),
            x0: VectorState::new(vec![1.0, 1.0]).expect("finite"),
            v0: VectorState::new(vec![0.0, 1.0]).expect("finite"),
            perturbation: LcsPerturbation {
                a: eye.clone(),
                b: eye.clone(),
                d: eye,
                x0: if perturb_initial {
                    vec![1.0, 1.0]
                } else {
                    vec![0.0, 0.0]
                },
                v0: vec![0.0, 0.0],
            },
            lambda_bar: Parameter::scalar(0.0),
            neighborhood_radius: 0.2,
            horizon: 1.0,
            r: 0.5,
            norm: NormKind::Sup,
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn at(&self, lambda: &Parameter) -> Result<LcsInstance> {
        let s = scalar_offset(lambda, &self.lambda_bar)?;
        Ok(self.at_offset(s))
    }

    fn at_offset(&self, s: f64) -> LcsInstance {
        let p = &self.perturbation;
        LcsInstance {
            a: &self.a + &p.a * s,
            b: &self.b + &p.b * s,
            d: &self.d + &p.d * s,
            x0: self.x0.iter().zip(&p.x0).map(|(x, d)| x + s * d).collect(),
            v0: self.v0.iter().zip(&p.v0).map(|(x, d)| x + s * d).collect(),
        }
    }

    /// `α = max ‖A_λ‖` over the neighborhood; attained at an endpoint since
    /// the norm is convex in `s`.
    pub fn alpha(&self) -> f64 {
        let rho = self.neighborhood_radius;
        induced_norm(&self.at_offset(-rho).a, self.norm)
            .max(induced_norm(&self.at_offset(rho).a, self.norm))
    }

    /// Exact Lipschitz constant of `B_λ` and `D_λ` in `λ`.
    pub fn beta(&self) -> f64 {
        induced_norm(&self.perturbation.b, self.norm)
            .max(induced_norm(&self.perturbation.d, self.norm))
    }

    /// `max ‖u(t)‖` on a 1001-point grid of `[0, T]`.
    pub fn control_bound(&self) -> f64 {
        (0..=1000)
            .map(|i| {
                self.norm
                    .norm(&(self.control)(self.horizon * i as f64 / 1000.0))
            })
            .fold(0.0, f64::max)
    }

    /// `L = max(α, γ)` and `L' = ‖∂A/∂λ‖(r + ‖x0‖) + β·max‖u‖`, which is
    /// `r + ‖x0‖ + β` for `∂A/∂λ = I` and `‖u‖ ≤ 1`.
    pub fn lipschitz(&self) -> LipschitzData {
        let shift = induced_norm(&self.perturbation.a, self.norm);
        LipschitzData {
            l: self.alpha().max(self.gamma),
            lp: shift * (self.r + self.norm.norm(&self.x0)) + self.beta() * self.control_bound(),
        }
    }

    pub fn observation_constants(&self) -> LcsConstants {
        let lip = self.lipschitz();
        lcs_constants(
            induced_norm(&self.c, self.norm),
            lip.l,
            lip.lp,
            self.horizon,
            self.beta() * self.control_bound(),
        )
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.dim();
        let p = &self.perturbation;
        let square = |name: &str, m: &DMatrix<f64>| {
            if m.nrows() == n && m.ncols() == n {
                Ok(())
            } else {
                Err(StabilityError::DimMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )))
            }
        };
        square("A", &self.a)?;
        square("A perturbation", &p.a)?;
        square("C", &self.c)?;
        if self.b.nrows() != n || p.b.shape() != self.b.shape() {
            return Err(StabilityError::DimMismatch("B shape".into()));
        }
        if self.d.nrows() != self.c.nrows()
            || self.d.ncols() != self.b.ncols()
            || p.d.shape() != self.d.shape()
        {
            return Err(StabilityError::DimMismatch("D shape".into()));
        }
        if self.v0.len() != n || p.x0.len() != n || p.v0.len() != n {
            return Err(StabilityError::DimMismatch("initial data length".into()));
        }
        if !(self.gamma >= 0.0 && self.r > 0.0 && self.horizon > 0.0) {
            return Err(StabilityError::InvalidInput(
                "need gamma ≥ 0, r > 0 and T > 0".into(),
            ));
        }
        Ok(())
    }

    /// `‖u‖∞ ≤ 1` on a 1001-point grid of `[0, T]`.
    pub fn check_control(&self) -> Result<()> {
        for i in 0..=1000 {
            let t = self.horizon * i as f64 / 1000.0;
            let u = (self.control)(t);
            if u.len() != self.b.ncols() {
                return Err(StabilityError::DimMismatch(format!(
                    "control has length {}, B has {} columns",
                    u.len(),
                    self.b.ncols()
                )));
            }
            let size = NormKind::Sup.norm(&u);
            if size > 1.0 {
                return Err(StabilityError::HypothesisViolation(format!(
                    "‖u(t)‖ = {size} > 1 at t = {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Family with right-hand side `A_λx + γv + B_λu(t)` and the observation
/// attached. Declares `L = max(α, γ)`, `L' = r + ‖x0‖ + β`.
pub fn lcs_family(m: &LcsModel) -> Result<ParametricFamily> {
    m.check_shapes()?;
    m.check_control()?;
    let model = m.clone();
    let build = move |lam: &Parameter| -> Result<SecondOrderIvp> {
        let inst = model.at(lam)?;
        let gamma = model.gamma;
        let control = Arc::clone(&model.control);
        let (a, b) = (inst.a, inst.b);
        SecondOrderIvp::new(
            Arc::new(move |t, x: &[f64], v: &[f64], out: &mut [f64]| {
                let ax = mat_vec(&a, x);
                let bu = mat_vec(&b, &control(t));
                for i in 0..out.len() {
                    out[i] = ax[i] + gamma * v[i] + bu[i];
                }
            }),
            VectorState::new(inst.x0)?,
            VectorState::new(inst.v0)?,
            model.horizon,
        )
    };
    let d_of = {
        let model = m.clone();
        move |lam: &Parameter| {
            model
                .at(lam)
                .map(|i| i.d)
                .unwrap_or_else(|_| model.d.clone())
        }
    };
    let observation = Observation {
        c: m.c.clone(),
        d_of: Arc::new(d_of),
        control: Arc::clone(&m.control),
        constants: m.observation_constants(),
    };
    Ok(ParametricFamily::new(
        "lcs",
        m.lambda_bar.clone(),
        Arc::new(build),
        m.lipschitz(),
        m.neighborhood_radius,
    )?
    .with_state_radius(m.r)
    .with_observation(observation))
}
