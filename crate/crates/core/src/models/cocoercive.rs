//! Damped second-order systems `x'' + γx' + A_λx = 0` with cocoercive `A_λ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{induced_norm, mat_vec, scalar_offset, MatrixOfParameter, Parameter, ParametricFamily};
use crate::bounds::LipschitzData;
use crate::error::{Result, StabilityError};
use crate::ode::{NormKind, SecondOrderIvp, VectorState};

/// Residual floor below which a cocoercivity sample counts as a failure.
pub const COCOERCIVITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone)]
pub struct CocoerciveModel {
    pub a_of_lambda: Arc<MatrixOfParameter>,
    /// Cocoercivity modulus `α_λ`.
    pub alpha_of_lambda: Arc<dyn Fn(&Parameter) -> f64 + Send + Sync>,
    pub gamma: f64,
    pub u0: VectorState,
    pub v0: VectorState,
    /// `(Δu0, Δv0)` per unit of `λ - λ̄`; `None` keeps the initial data fixed.
    pub initial_shift: Option<(Vec<f64>, Vec<f64>)>,
    pub lambda_bar: Parameter,
    pub neighborhood_radius: f64,
    pub horizon: f64,
    /// Radius of the state ball around `u0` on which `L'` is sampled.
    pub state_radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Norm the declared constants refer to.
    pub norm: NormKind,
}

impl fmt::Debug for CocoerciveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CocoerciveModel")
            .field("gamma", &self.gamma)
            .field("u0", &self.u0)
            .field("v0", &self.v0)
            .field("lambda_bar", &self.lambda_bar)
            .finish_non_exhaustive()
    }
}

impl CocoerciveModel {
    /// Model with `A_λ = A + (λ - λ̄) A_dir` and `α_λ = 1/λ_max(A_λ)` for
    /// symmetric positive-semidefinite `A_λ`.
    #[allow(clippy::too_many_arguments)]
    pub fn affine(
        a: DMatrix<f64>,
        a_dir: DMatrix<f64>,
        gamma: f64,
        u0: VectorState,
        v0: VectorState,
        lambda_bar: f64,
        neighborhood_radius: f64,
        horizon: f64,
    ) -> Self {
        let a_fn = {
            let (a, a_dir) = (a.clone(), a_dir.clone());
            move |lam: &Parameter| &a + &a_dir * (lam.values()[0] - lambda_bar)
        };
        let a_fn = Arc::new(a_fn);
        let alpha_fn = {
            let a_fn = Arc::clone(&a_fn);
            move |lam: &Parameter| symmetric_cocoercivity_modulus(&a_fn(lam))
        };
        Self {
            a_of_lambda: a_fn,
            alpha_of_lambda: Arc::new(alpha_fn),
            gamma,
            u0,
            v0,
            initial_shift: None,
            lambda_bar: Parameter::scalar(lambda_bar),
            neighborhood_radius,
            horizon,
            state_radius: 0.5,
            samples: 10_000,
            seed: 42,
            norm: NormKind::Euclidean,
        }
    }
}

/// `1/λ_max` for a symmetric positive-semidefinite matrix; infinite for zero.
pub fn symmetric_cocoercivity_modulus(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    let largest = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0_f64, f64::max);
    if largest > 0.0 {
        1.0 / largest
    } else {
        f64::INFINITY
    }
}

/// Outcome of a sampled cocoercivity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocoercivityCheck {
    pub passed: bool,
    /// `min ⟨Au - Av, u - v⟩ - α‖Au - Av‖²` over the sampled pairs.
    pub worst_residual: f64,
    pub samples: usize,
}

/// Samples `samples` pairs uniformly in `[-1, 1]ⁿ × [-1, 1]ⁿ` and checks
/// `⟨Au - Av, u - v⟩ ≥ α‖Au - Av‖²` in the Euclidean inner product.
pub fn validate_cocoercivity(a: &DMatrix<f64>, alpha: f64, samples: usize) -> CocoercivityCheck {
    validate_cocoercivity_seeded(a, alpha, samples, 42)
}

pub fn validate_cocoercivity_seeded(
    a: &DMatrix<f64>,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> CocoercivityCheck {
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let diff = &u - &w;
        let image = a * &diff;
        let residual = image.dot(&diff) - alpha * image.norm_squared();
        worst = worst.min(residual);
    }
    CocoercivityCheck {
        passed: worst >= -COCOERCIVITY_TOLERANCE,
        worst_residual: worst,
        samples: samples.max(1),
    }
}

fn neighborhood_grid(lambda_bar: &Parameter, radius: f64, points: usize) -> Vec<Parameter> {
    let center = lambda_bar.values()[0];
    (0..points)
        .map(|i| Parameter::scalar(center - radius + 2.0 * radius * i as f64 / (points - 1) as f64))
        .collect()
}

/// Family with right-hand side `-A_λx - γv`. Declares `L = max(γ, ‖A_λ‖)`,
/// which is `γ` in the Euclidean norm since `‖A_λ‖₂ ≤ 1/α_λ < γ`, and takes
/// `L'` as the largest `‖A_λu - A_λ'u‖/|λ - λ'|` over the corners of the state
/// box (exact for affine `A_λ`) and random interior samples.
pub fn cocoercive_family(m: &CocoerciveModel) -> Result<ParametricFamily> {
    if !(m.gamma > 0.0) {
        return Err(StabilityError::InvalidInput(format!(
            "damping must be positive, got {}",
            m.gamma
        )));
    }
    if m.u0.len() != m.v0.len() {
        return Err(StabilityError::DimMismatch(
            "u0 and v0 differ in length".into(),
        ));
    }
    let n = m.u0.len();
    let mut l = m.gamma;
    for lam in neighborhood_grid(&m.lambda_bar, m.neighborhood_radius, 21) {
        let a = (m.a_of_lambda)(&lam);
        if a.nrows() != n || a.ncols() != n {
            return Err(StabilityError::DimMismatch(format!(
                "A_λ is {}x{}, state has dimension {n}",
                a.nrows(),
                a.ncols()
            )));
        }
        l = l.max(induced_norm(&a, m.norm));
        let alpha = (m.alpha_of_lambda)(&lam);
        if !(alpha > 0.0) || 1.0 / alpha >= m.gamma {
            return Err(StabilityError::HypothesisViolation(format!(
                "1/α_λ = {} is not below γ = {} at λ = {}",
                1.0 / alpha,
                m.gamma,
                lam.values()[0]
            )));
        }
        if alpha.is_finite() {
            let check = validate_cocoercivity_seeded(&a, alpha, m.samples, m.seed);
            if !check.passed {
                return Err(StabilityError::HypothesisViolation(format!(
                    "cocoercivity fails at λ = {} (residual {:e})",
                    lam.values()[0],
                    check.worst_residual
                )));
            }
        }
    }

    let lp = sample_parameter_constant(m);
    let lip = LipschitzData::new(l, lp)?;

    let model = m.clone();
    let build = move |lam: &Parameter| -> Result<SecondOrderIvp> {
        let s = scalar_offset(lam, &model.lambda_bar)?;
        let a = (model.a_of_lambda)(lam);
        let gamma = model.gamma;
        let (mut u0, mut v0) = (model.u0.to_vec(), model.v0.to_vec());
        if let Some((du, dv)) = &model.initial_shift {
            u0.iter_mut().zip(du).for_each(|(x, d)| *x += s * d);
            v0.iter_mut().zip(dv).for_each(|(x, d)| *x += s * d);
        }
        SecondOrderIvp::new(
            Arc::new(move |_t, x: &[f64], v: &[f64], out: &mut [f64]| {
                let ax = mat_vec(&a, x);
                for i in 0..out.len() {
                    out[i] = -ax[i] - gamma * v[i];
                }
            }),
            VectorState::new(u0)?,
            VectorState::new(v0)?,
            model.horizon,
        )
    };
    Ok(ParametricFamily::new(
        "cocoercive",
        m.lambda_bar.clone(),
        Arc::new(build),
        lip,
        m.neighborhood_radius,
    )?
    .with_state_radius(m.state_radius))
}

fn sample_parameter_constant(m: &CocoerciveModel) -> f64 {
    let n = m.u0.len();
    let center = m.lambda_bar.values()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed.wrapping_add(1));
    let (lo, hi) = (
        center - m.neighborhood_radius,
        center + m.neighborhood_radius,
    );
    let quotient = |la: f64, lb: f64, u: &[f64]| {
        let fa = mat_vec(&(m.a_of_lambda)(&Parameter::scalar(la)), u);
        let fb = mat_vec(&(m.a_of_lambda)(&Parameter::scalar(lb)), u);
        m.norm.distance(&fa, &fb) / (la - lb).abs()
    };
    let mut best = 0.0_f64;
    if n <= 16 && hi > lo {
        for mask in 0..1usize << n {
            let corner: Vec<f64> = (0..n)
                .map(|i| {
                    m.u0[i]
                        + if mask >> i & 1 == 1 {
                            m.state_radius
                        } else {
                            -m.state_radius
                        }
                })
                .collect();
            best = best.max(quotient(lo, hi, &corner));
        }
    }
    for _ in 0..m.samples.max(1) {
        let la = center + rng.random_range(-1.0..=1.0) * m.neighborhood_radius;
        let lb = center + rng.random_range(-1.0..=1.0) * m.neighborhood_radius;
        let u: Vec<f64> = (0..n)
            .map(|i| m.u0[i] + rng.random_range(-1.0..=1.0) * m.state_radius)
            .collect();
        if la == lb {
            continue;
        }
        best = best.max(quotient(la, lb, &u));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    fn state(v: &[f64]) -> VectorState {
        VectorState::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_is_one_cocoercive() {
        let check = validate_cocoercivity(&DMatrix::identity(3, 3), 1.0, 1000);
        assert!(check.passed);
        assert!(check.worst_residual.abs() < 1e-15);
    }

    #[test]
    fn diagonal_modulus_is_inverse_largest_eigenvalue() {
        assert!(validate_cocoercivity(&diag(1.0, 2.0), 0.5, 10_000).passed);
        let fail = validate_cocoercivity(&diag(1.0, 2.0), 1.0, 10_000);
        assert!(!fail.passed);
        assert!(fail.worst_residual < 0.0);
        assert_eq!(symmetric_cocoercivity_modulus(&diag(1.0, 2.0)), 0.5);
    }

    #[test]
    fn brute_force_modulus_matches_eigenvalue_formula() {
        // Largest α with a nonnegative residual over sampled pairs, by bisection.
        let a = diag(1.0, 2.0);
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if validate_cocoercivity(&a, mid, 10_000).passed {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.5).abs() < 1e-6, "bisected modulus {lo}");
    }

    #[test]
    fn identity_family_with_strong_damping() {
        let m = CocoerciveModel::affine(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            2.0,
            state(&[1.0, 0.0]),
            state(&[0.0, 1.0]),
            0.0,
            0.1,
            1.0,
        );
        let fam = cocoercive_family(&m).unwrap();
        assert_eq!(fam.lipschitz().l, 2.0);
        assert_eq!(fam.lipschitz().lp, 0.0);
        let ivp = fam.nominal().unwrap();
        assert_eq!(ivp.eval(0.0, &[1.0, 2.0], &[3.0, 4.0]), vec![-7.0, -10.0]);
        assert_eq!(ivp.x0().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn weak_damping_is_rejected() {
        let m = CocoerciveModel::affine(
            diag(1.0, 2.0),
            DMatrix::zeros(2, 2),
            2.0,
            state(&[1.0, 1.0]),
            state(&[0.0, 0.0]),
            0.0,
            0.1,
            1.0,
        );
        assert!(matches!(
            cocoercive_family(&m),
            Err(StabilityError::HypothesisViolation(_))
        ));
        let ok = CocoerciveModel { gamma: 2.5, ..m };
        assert!(cocoercive_family(&ok).is_ok());
    }

    #[test]
    fn parameter_constant_is_sampled() {
        let mut m = CocoerciveModel::affine(
            diag(1.0, 2.0),
            DMatrix::identity(2, 2),
            3.0,
            state(&[1.0, 1.0]),
            state(&[0.0, 0.0]),
            0.0,
            0.1,
            1.0,
        );
        m.state_radius = 0.5;
        let fam = cocoercive_family(&m).unwrap();
        // ‖(λ - λ')u‖/|λ - λ'| = ‖u‖ ≤ ‖(1.5, 1.5)‖
        let lp = fam.lipschitz().lp;
        assert!(lp > 1.5 && lp <= 1.5 * 2f64.sqrt() + 1e-12, "lp = {lp}");
    }
}
