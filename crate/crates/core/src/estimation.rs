//! Closed-form mean-square errors and the sender's composite cost.
//!
//! Two independent routes compute the sender's cost. [`costs_from_moments`]
//! evaluates the LMMSE errors directly from the (y, z) covariance.
//! [`sender_cost_quadratic`] uses the normalised-message identity
//!
//! ```text
//! cost = trace(V_xx − V_xz V_zz⁻¹ V_zx) − δ trace(V_ww − V_wz V_zz⁻¹ V_zw)
//!        + trace(Cᵀ Z C),      C = [V_xy; V_wy; V_zy],
//! ```
//!
//! with `Z = Tᵀ diag(−I, δI) T` and `T = [I 0 −V_xz V_zz⁻¹; 0 I −V_wz V_zz⁻¹]`.
//! Each is used to check the other.

use nalgebra::DMatrix;

use crate::equilibrium::{check_nondegenerate, EstimatorPolicy, PrivacyRatio};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{conditional_covariance, GaussianModel, MessageMoments};

/// Tolerance on `‖V_yy − V_yz V_zz⁻¹ V_zy − I‖∞` for a message to count as normalised.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Tolerance on the constraint margin for [`feasibility_check`].
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// `E‖x − x̂‖²`.
    pub receiver_mse: f64,
    /// `E‖w − ŵ‖²`.
    pub malicious_mse: f64,
    /// `receiver_mse − δ·malicious_mse`.
    pub sender_cost: f64,
    /// Receiver error with `z` only.
    pub baseline_receiver: f64,
    /// Eavesdropper error with `z` only.
    pub baseline_malicious: f64,
}

/// Which variable an estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    State,
    Private,
}

/// Exact LMMSE errors for the given message moments.
pub fn costs_from_moments(
    model: &GaussianModel,
    moments: &MessageMoments,
    delta: PrivacyRatio,
) -> Result<CostBreakdown> {
    let s = moments.observation_covariance(model);
    check_nondegenerate(&s)?;
    let s_inv = linalg::spd_inverse(&s)
        .ok_or_else(|| Error::DegenerateMessage("Cholesky factorisation failed".into()))?;
    let error_trace = |v_tt: &DMatrix<f64>, cross: DMatrix<f64>| {
        (v_tt - &cross * &s_inv * cross.transpose()).trace()
    };
    let receiver_mse = error_trace(model.v_xx(), moments.receiver_cross(model));
    let malicious_mse = error_trace(model.v_ww(), moments.malicious_cross(model));
    Ok(CostBreakdown {
        receiver_mse,
        malicious_mse,
        sender_cost: receiver_mse - delta.value() * malicious_mse,
        baseline_receiver: model.baseline_receiver()?,
        baseline_malicious: model.baseline_malicious()?,
    })
}

/// Mean-square error of an arbitrary linear estimator
/// `E‖t − G (y, z)‖² = trace(V_tt) − 2 trace(G Cᵀ) + trace(G S Gᵀ)`.
pub fn linear_estimator_mse(
    model: &GaussianModel,
    moments: &MessageMoments,
    target: Target,
    estimator: &EstimatorPolicy,
) -> f64 {
    let (v_tt, cross) = match target {
        Target::State => (model.v_xx(), moments.receiver_cross(model)),
        Target::Private => (model.v_ww(), moments.malicious_cross(model)),
    };
    let g = estimator.stacked();
    let s = moments.observation_covariance(model);
    v_tt.trace() - 2.0 * (&g * cross.transpose()).trace() + (&g * s * g.transpose()).trace()
}

/// The block operators of the sender's cost and constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct CostOperator {
    /// `Tᵀ diag(−I, δI) T`, of size `n_x + n_w + n_z`.
    pub z: DMatrix<f64>,
    /// The reduced constraint operator, equal to `Ξ`.
    pub q_pp: DMatrix<f64>,
    transform: DMatrix<f64>,
    delta: PrivacyRatio,
}

impl CostOperator {
    pub fn new(model: &GaussianModel, delta: PrivacyRatio) -> Result<Self> {
        let dims = model.dims();
        let q_pp = conditional_covariance(model)?.xi;
        let regression = model.xw_z_cross() * model.v_zz_inverse()?;
        let transform = linalg::hstack(&DMatrix::identity(dims.n_xw(), dims.n_xw()), &(-regression));
        let z = transform.transpose() * delta.weight_matrix(dims) * &transform;
        Ok(Self {
            z: linalg::symmetrize(&z),
            q_pp,
            transform,
            delta,
        })
    }

    pub fn delta(&self) -> PrivacyRatio {
        self.delta
    }

    /// `T = [I 0 −V_xz V_zz⁻¹; 0 I −V_wz V_zz⁻¹]`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }
}

/// Sender cost through the quadratic-form identity. Requires a normalised
/// message; rescale with `scale_equilibrium` first otherwise.
pub fn sender_cost_quadratic(
    operator: &CostOperator,
    model: &GaussianModel,
    moments: &MessageMoments,
) -> Result<f64> {
    let conditional = moments.conditional_message_covariance(model)?;
    let n_y = moments.n_y();
    let residual = (conditional - DMatrix::identity(n_y, n_y)).amax();
    if residual > NORMALIZATION_TOLERANCE {
        return Err(Error::Contract(format!(
            "message is not normalised (‖V_yy − V_yz V_zz⁻¹ V_zy − I‖ = {residual:e}); \
             rescale it with scale_equilibrium"
        )));
    }
    let c = moments.stacked_cross();
    let quadratic = (c.transpose() * &operator.z * &c).trace();
    let delta = operator.delta.value();
    Ok(model.baseline_receiver()? - delta * model.baseline_malicious()? + quadratic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Smallest eigenvalue of `I − Cᵀ Q C`; zero in directions where the
    /// constraint is active.
    pub margin: f64,
}

/// Evaluates `Cᵀ Q C ≤ I` in its reduced form `(T C)ᵀ Ξ⁻¹ (T C) ≤ I`.
pub fn feasibility_check(operator: &CostOperator, moments: &MessageMoments) -> Feasibility {
    let reduced = &operator.transform * moments.stacked_cross();
    let n_y = moments.n_y();
    let form = match linalg::spd_right_solve(&reduced.transpose(), &operator.q_pp) {
        Some(left) => left * &reduced,
        None => {
            return Feasibility {
                feasible: false,
                margin: f64::NEG_INFINITY,
            }
        }
    };
    let margin = linalg::min_eigenvalue(&(DMatrix::identity(n_y, n_y) - form));
    Feasibility {
        feasible: margin >= -FEASIBILITY_TOLERANCE,
        margin,
    }
}
