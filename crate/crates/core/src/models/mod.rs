//! Parametric problem families and the hypothesis checks that back their
//! declared Lipschitz constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{LcsConstants, LipschitzData};
use crate::error::{Result, StabilityError};
use crate::ode::{NormKind, SecondOrderIvp, Trajectory};

pub mod cocoercive;
pub mod lcs;
pub mod rlc;

pub use cocoercive::{
    cocoercive_family, validate_cocoercivity, CocoerciveModel, CocoercivityCheck,
};
pub use lcs::{lcs_family, LcsModel, LcsPerturbation};
pub use rlc::{green_kernel, rlc_family, rlc_integral_residual, RlcModel, RlcVariant};

/// A point of the parameter space, measured in the sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(StabilityError::InvalidInput(
                "parameter must be a nonempty finite vector".into(),
            ));
        }
        Ok(Parameter(values))
    }

    pub fn scalar(value: f64) -> Self {
        Parameter(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Parameter) -> f64 {
        NormKind::Sup.distance(&self.0, &other.0)
    }

    /// Label used in report rows: the value itself, or `;`-joined components.
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|v| crate::format_sci(*v))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Scalar offset `λ - λ̄` for the built-in one-parameter families.
pub(crate) fn scalar_offset(lambda: &Parameter, lambda_bar: &Parameter) -> Result<f64> {
    if lambda.dim() != 1 || lambda_bar.dim() != 1 {
        return Err(StabilityError::DimMismatch(format!(
            "built-in families take a scalar parameter, got dimension {}",
            lambda.dim()
        )));
    }
    Ok(lambda.0[0] - lambda_bar.0[0])
}

pub type BuildFn = dyn Fn(&Parameter) -> Result<SecondOrderIvp> + Send + Sync;
pub type ControlFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;
pub type MatrixOfParameter = dyn Fn(&Parameter) -> DMatrix<f64> + Send + Sync;

/// Observation `z = C(x + x') + D_λ u(t)` attached to a linear control family.
#[derive(Clone)]
pub struct Observation {
    pub c: DMatrix<f64>,
    pub d_of: Arc<MatrixOfParameter>,
    pub control: Arc<ControlFn>,
    /// Time-uniform constants bounding the observation deviation.
    pub constants: LcsConstants,
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observation")
            .field("c", &self.c)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

/// `λ ↦ S(f_λ, x_{0,λ}, v_{0,λ})` around a base value `λ̄`, together with the
/// Lipschitz constants declared for the neighborhood `‖λ - λ̄‖ ≤ radius`.
#[derive(Clone)]
pub struct ParametricFamily {
    id: String,
    lambda_bar: Parameter,
    build: Arc<BuildFn>,
    lip: LipschitzData,
    neighborhood_radius: f64,
    state_radius: f64,
    observation: Option<Observation>,
}

impl fmt::Debug for ParametricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricFamily")
            .field("id", &self.id)
            .field("lambda_bar", &self.lambda_bar)
            .field("lip", &self.lip)
            .field("neighborhood_radius", &self.neighborhood_radius)
            .field("state_radius", &self.state_radius)
            .field("observation", &self.observation)
            .finish_non_exhaustive()
    }
}

impl ParametricFamily {
    pub fn new(
        id: impl Into<String>,
        lambda_bar: Parameter,
        build: Arc<BuildFn>,
        lip: LipschitzData,
        neighborhood_radius: f64,
    ) -> Result<Self> {
        if !(neighborhood_radius.is_finite() && neighborhood_radius > 0.0) {
            return Err(StabilityError::InvalidInput(format!(
                "neighborhood radius must be positive, got {neighborhood_radius}"
            )));
        }
        let family = Self {
            id: id.into(),
            lambda_bar,
            build,
            lip,
            neighborhood_radius,
            state_radius: 1.0,
            observation: None,
        };
        family.nominal()?;
        Ok(family)
    }

    /// Radius of the state box used when sampling Lipschitz constants.
    pub fn with_state_radius(mut self, r: f64) -> Self {
        self.state_radius = r;
        self
    }

    pub fn with_observation(mut self, observation: Observation) -> Self {
        self.observation = Some(observation);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lambda_bar(&self) -> &Parameter {
        &self.lambda_bar
    }

    pub fn lipschitz(&self) -> LipschitzData {
        self.lip
    }

    pub fn neighborhood_radius(&self) -> f64 {
        self.neighborhood_radius
    }

    pub fn state_radius(&self) -> f64 {
        self.state_radius
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.observation.as_ref()
    }

    pub fn build(&self, lambda: &Parameter) -> Result<SecondOrderIvp> {
        if lambda.dim() != self.lambda_bar.dim() {
            return Err(StabilityError::DimMismatch(format!(
                "parameter has dimension {}, family expects {}",
                lambda.dim(),
                self.lambda_bar.dim()
            )));
        }
        (self.build)(lambda)
    }

    pub fn nominal(&self) -> Result<SecondOrderIvp> {
        (self.build)(&self.lambda_bar)
    }

    pub fn contains(&self, lambda: &Parameter) -> bool {
        lambda.dim() == self.lambda_bar.dim()
            && lambda.distance(&self.lambda_bar) <= self.neighborhood_radius * (1.0 + 1e-12)
    }
}

/// Builds a matrix from row-major nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(StabilityError::DimMismatch(
            "matrix rows must be nonempty and of equal length".into(),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StabilityError::InvalidInput(
            "matrix entry is not finite".into(),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Nested row-major representation of a matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Operator norm induced by the sup norm: the largest absolute row sum.
pub fn induced_sup_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Operator norm induced by `norm`: largest absolute row sum for the sup norm,
/// largest singular value for the Euclidean norm.
pub fn induced_norm(m: &DMatrix<f64>, norm: NormKind) -> f64 {
    match norm {
        NormKind::Sup => induced_sup_norm(m),
        NormKind::Euclidean => m.clone().svd(false, false).singular_values.max(),
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// Observation path `z_i = C(x(t_i) + v(t_i)) + D u(t_i)` on the trajectory grid.
pub fn observe(
    traj: &Trajectory,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    control: &ControlFn,
) -> Result<Vec<Vec<f64>>> {
    let n = traj.dim();
    if c.ncols() != n {
        return Err(StabilityError::DimMismatch(format!(
            "C has {} columns, state has dimension {n}",
            c.ncols()
        )));
    }
    if d.nrows() != c.nrows() {
        return Err(StabilityError::DimMismatch(format!(
            "C has {} rows, D has {}",
            c.nrows(),
            d.nrows()
        )));
    }
    let mut out = Vec::with_capacity(traj.len());
    for ((t, x), v) in traj.grid().iter().zip(traj.states()).zip(traj.velocities()) {
        let u = control(*t);
        if u.len() != d.ncols() {
            return Err(StabilityError::DimMismatch(format!(
                "control has length {}, D has {} columns",
                u.len(),
                d.ncols()
            )));
        }
        let sum: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
        let mut z = mat_vec(c, &sum);
        for (zi, di) in z.iter_mut().zip(mat_vec(d, &u)) {
            *zi += di;
        }
        out.push(z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, VectorState};

    fn lcs_nominal_traj() -> Trajectory {
        let m = LcsModel::fig3(false);
        let fam = lcs_family(&m).unwrap();
        integrate(&fam.nominal().unwrap(), 100).unwrap()
    }

    #[test]
    fn observe_zero_maps() {
        let traj = lcs_nominal_traj();
        let zero = DMatrix::zeros(2, 2);
        let z = observe(&traj, &zero, &zero, &|_| vec![1.0, 1.0]).unwrap();
        assert!(z.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn observe_initial_value() {
        let traj = lcs_nominal_traj();
        let c = matrix_from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let z = observe(&traj, &c, &DMatrix::zeros(2, 2), &|_| vec![1.0, 1.0]).unwrap();
        assert_eq!(z[0], vec![3.0, 3.0]);
    }

    #[test]
    fn observe_feedthrough_adds_linearly() {
        let traj = lcs_nominal_traj();
        let c = matrix_from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let lam = 0.3;
        let d = DMatrix::identity(2, 2) * lam;
        let base = observe(&traj, &c, &DMatrix::zeros(2, 2), &|_| vec![1.0, 1.0]).unwrap();
        let with_d = observe(&traj, &c, &d, &|_| vec![1.0, 1.0]).unwrap();
        for (a, b) in base.iter().zip(&with_d) {
            assert!((b[0] - a[0] - lam).abs() < 1e-15);
            assert!((b[1] - a[1] - lam).abs() < 1e-15);
        }
    }

    #[test]
    fn observe_rejects_bad_shapes() {
        let traj = lcs_nominal_traj();
        let c = DMatrix::zeros(2, 3);
        assert!(matches!(
            observe(&traj, &c, &DMatrix::zeros(2, 2), &|_| vec![1.0, 1.0]),
            Err(StabilityError::DimMismatch(_))
        ));
        let c = DMatrix::zeros(2, 2);
        assert!(observe(&traj, &c, &DMatrix::zeros(2, 2), &|_| vec![1.0]).is_err());
    }

    #[test]
    fn sup_operator_norm() {
        let a = matrix_from_rows(&[vec![0.0, -3.0], vec![1.0, -4.0]]).unwrap();
        assert_eq!(induced_sup_norm(&a), 5.0);
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(matrix_rows(&a), vec![vec![0.0, -3.0], vec![1.0, -4.0]]);
    }

    #[test]
    fn family_rejects_wrong_parameter_dimension() {
        let fam = lcs_family(&LcsModel::fig3(false)).unwrap();
        assert!(fam.build(&Parameter::new(vec![0.0, 0.0]).unwrap()).is_err());
        assert!(fam.contains(&Parameter::scalar(0.2)));
        assert!(!fam.contains(&Parameter::scalar(0.3)));
        let _ = VectorState::zeros(1);
    }
}
