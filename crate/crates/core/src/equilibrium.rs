//! Equilibria of the privacy game.
//!
//! The informative equilibrium has LMMSE estimators and an affine sender
//! `y = K_x x + K_w w + v`, with `K = [K_x K_w]` minimising
//! `trace(K Ξ D Ξ Kᵀ)` subject to `K Ξ Kᵀ ≤ I`, where `D = diag(−I, δI)`.
//! Substituting `L = K Ξ^{1/2}` turns this into `min trace(L M Lᵀ)` subject to
//! `L Lᵀ ≤ I` with `M = Ξ^{1/2} D Ξ^{1/2}`, which is solved by taking the rows
//! of `L` to be eigenvectors of the most negative eigenvalues of `M`.
//! `M` is congruent to `D`, so it has exactly `n_x` negative eigenvalues for
//! every `δ ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::{costs_from_moments, CostBreakdown};
use crate::linalg::{self, SortedEigen};
use crate::model::{conditional_covariance, message_moments, Dimensions, GaussianModel, MessageMoments};

/// Largest accepted condition number for a message transformation.
pub const MAX_KAPPA_CONDITION: f64 = 1e12;

/// Eigenvalues of `M` below `-NEGATIVE_EIGEN_TOLERANCE · max|λ|` count as negative.
const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-12;

/// Observation covariances with smallest eigenvalue below this fraction of
/// the largest diagonal entry are treated as singular.
const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Privacy ratio δ ≥ 0 weighting the eavesdropper's error in the sender's cost.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyRatio(f64);

impl PrivacyRatio {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::Contract(format!(
                "privacy ratio must be a finite non-negative number, got {delta}"
            )));
        }
        Ok(Self(delta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `diag(−I_{n_x}, δ I_{n_w})`.
    pub fn weight_matrix(self, dims: Dimensions) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(dims.n_xw(), |i, _| {
            if i < dims.n_x {
                -1.0
            } else {
                self.0
            }
        }))
    }
}

/// Affine sender rule `y = K_x x + K_w w + K_z z + v`, `v ~ N(0, V_vv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderPolicy {
    pub k_x: DMatrix<f64>,
    pub k_w: DMatrix<f64>,
    pub k_z: DMatrix<f64>,
    pub v_vv: DMatrix<f64>,
}

impl SenderPolicy {
    pub fn new(
        k_x: DMatrix<f64>,
        k_w: DMatrix<f64>,
        k_z: DMatrix<f64>,
        v_vv: DMatrix<f64>,
    ) -> Result<Self> {
        let n_y = v_vv.nrows();
        if k_x.nrows() != n_y || k_w.nrows() != n_y || k_z.nrows() != n_y || v_vv.ncols() != n_y {
            return Err(Error::Dimension {
                block: "sender policy".into(),
                expected: (n_y, n_y),
                found: (k_x.nrows(), v_vv.ncols()),
            });
        }
        let scale = linalg::max_abs_diag(&v_vv).max(1.0);
        if linalg::asymmetry(&v_vv) > 1e-10 * scale {
            return Err(Error::Contract("V_vv must be symmetric".into()));
        }
        if n_y > 0 && linalg::min_eigenvalue(&v_vv) < -1e-10 * scale {
            return Err(Error::Contract("V_vv must be positive semidefinite".into()));
        }
        Ok(Self {
            k_x,
            k_w,
            k_z,
            v_vv,
        })
    }

    /// Sender whose message is independent standard Gaussian noise.
    pub fn babbling(dims: Dimensions) -> Self {
        Self {
            k_x: DMatrix::zeros(dims.n_y, dims.n_x),
            k_w: DMatrix::zeros(dims.n_y, dims.n_w),
            k_z: DMatrix::zeros(dims.n_y, dims.n_z),
            v_vv: DMatrix::identity(dims.n_y, dims.n_y),
        }
    }

    /// Deterministic-plus-noise policy from a gain on `(x, w)`.
    pub fn from_gain(dims: Dimensions, gain: &DMatrix<f64>, v_vv: DMatrix<f64>) -> Result<Self> {
        if gain.shape() != (dims.n_y, dims.n_xw()) {
            return Err(Error::Dimension {
                block: "K".into(),
                expected: (dims.n_y, dims.n_xw()),
                found: gain.shape(),
            });
        }
        Self::new(
            gain.columns(0, dims.n_x).into_owned(),
            gain.columns(dims.n_x, dims.n_w).into_owned(),
            DMatrix::zeros(dims.n_y, dims.n_z),
            v_vv,
        )
    }

    pub fn n_y(&self) -> usize {
        self.v_vv.nrows()
    }

    /// `[K_x K_w]`.
    pub fn gain(&self) -> DMatrix<f64> {
        linalg::hstack(&self.k_x, &self.k_w)
    }

    /// `[K_x K_w K_z]`.
    pub fn full_gain(&self) -> DMatrix<f64> {
        linalg::hstack(&self.gain(), &self.k_z)
    }

    pub fn check_against(&self, dims: Dimensions) -> Result<()> {
        let n_y = dims.n_y;
        for (name, m, expected) in [
            ("K_x", &self.k_x, (n_y, dims.n_x)),
            ("K_w", &self.k_w, (n_y, dims.n_w)),
            ("K_z", &self.k_z, (n_y, dims.n_z)),
            ("V_vv", &self.v_vv, (n_y, n_y)),
        ] {
            if m.shape() != expected {
                return Err(Error::Dimension {
                    block: name.into(),
                    expected,
                    found: m.shape(),
                });
            }
        }
        Ok(())
    }

    /// `κ K` and `κ V_vv κᵀ`.
    pub fn transform(&self, kappa: &DMatrix<f64>) -> Self {
        Self {
            k_x: kappa * &self.k_x,
            k_w: kappa * &self.k_w,
            k_z: kappa * &self.k_z,
            v_vv: linalg::symmetrize(&(kappa * &self.v_vv * kappa.transpose())),
        }
    }
}

/// Linear estimator `estimate = gain_y·y + gain_z·z`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPolicy {
    pub gain_y: DMatrix<f64>,
    pub gain_z: DMatrix<f64>,
}

impl EstimatorPolicy {
    pub fn estimate(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.gain_y * y + &self.gain_z * z
    }

    /// `[gain_y gain_z]`, acting on the stacked observation `(y, z)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::hstack(&self.gain_y, &self.gain_z)
    }

    fn split(stacked: &DMatrix<f64>, n_y: usize) -> Self {
        let n_z = stacked.ncols() - n_y;
        Self {
            gain_y: stacked.columns(0, n_y).into_owned(),
            gain_z: stacked.columns(n_y, n_z).into_owned(),
        }
    }
}

/// How the estimators react when the sender changes its policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseRule {
    /// Estimators recompute the LMMSE gains for whatever the sender does.
    BestResponse,
    /// Estimators keep their gains (babbling equilibria ignore `y`).
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Ascending eigenvalues of `Ξ^{1/2} D Ξ^{1/2}`; empty for babbling.
    pub eigenvalues: Vec<f64>,
    /// Number of negative eigenvalues used by the sender, at most `n_y`.
    pub active_rank: usize,
    /// Achieved `trace(K Ξ D Ξ Kᵀ)`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub sender: SenderPolicy,
    pub receiver: EstimatorPolicy,
    pub malicious: EstimatorPolicy,
    pub moments: MessageMoments,
    pub delta: PrivacyRatio,
    pub receiver_mse: f64,
    pub malicious_mse: f64,
    pub sender_cost: f64,
    pub rule: ResponseRule,
    pub diagnostics: Diagnostics,
}

impl EquilibriumSolution {
    pub fn costs(&self, model: &GaussianModel) -> Result<CostBreakdown> {
        Ok(CostBreakdown {
            receiver_mse: self.receiver_mse,
            malicious_mse: self.malicious_mse,
            sender_cost: self.sender_cost,
            baseline_receiver: model.baseline_receiver()?,
            baseline_malicious: model.baseline_malicious()?,
        })
    }
}

fn best_response_solution(
    model: &GaussianModel,
    delta: PrivacyRatio,
    sender: SenderPolicy,
    diagnostics: Diagnostics,
) -> Result<EquilibriumSolution> {
    let moments = message_moments(model, &sender)?;
    let (receiver, malicious) = lmmse_gains(model, &moments)?;
    let costs = costs_from_moments(model, &moments, delta)?;
    Ok(EquilibriumSolution {
        sender,
        receiver,
        malicious,
        moments,
        delta,
        receiver_mse: costs.receiver_mse,
        malicious_mse: costs.malicious_mse,
        sender_cost: costs.sender_cost,
        rule: ResponseRule::BestResponse,
        diagnostics,
    })
}

/// Builds the solution in which the estimators best-respond to `sender`.
///
/// This does not check that `sender` is optimal; it is how hand-authored
/// policies are turned into something the verification routines can test.
pub fn solution_for_policy(
    model: &GaussianModel,
    delta: PrivacyRatio,
    sender: SenderPolicy,
) -> Result<EquilibriumSolution> {
    model.ensure_valid()?;
    let xi = conditional_covariance(model)?.xi;
    let a = &xi * delta.weight_matrix(model.dims()) * &xi;
    let gain = sender.gain();
    let diagnostics = Diagnostics {
        eigenvalues: Vec::new(),
        active_rank: 0,
        objective: (&gain * a * gain.transpose()).trace(),
    };
    best_response_solution(model, delta, sender, diagnostics)
}

/// `Ξ^{-1/2}` together with the sorted spectrum of `Ξ^{1/2} D Ξ^{1/2}`.
struct WeightedSpectrum {
    xi: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    eigen: SortedEigen,
}

impl WeightedSpectrum {
    fn new(model: &GaussianModel, delta: PrivacyRatio) -> Result<Self> {
        let conditional = conditional_covariance(model)?;
        let (sqrt, inv_sqrt) = conditional.sqrt_pair();
        let m = &sqrt * delta.weight_matrix(model.dims()) * &sqrt;
        Ok(Self {
            xi: conditional.xi,
            inv_sqrt,
            eigen: SortedEigen::new(&m),
        })
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.eigen.values.iter().copied().collect()
    }

    /// `K = L Ξ^{-1/2}` where the first `active` rows of `L` are the leading
    /// eigenvectors and the remaining `n_y − active` rows are zero.
    fn gain(&self, n_y: usize, active: usize) -> DMatrix<f64> {
        let n = self.eigen.values.len();
        let mut l = DMatrix::zeros(n_y, n);
        for i in 0..active {
            l.set_row(i, &self.eigen.vectors.column(i).transpose());
        }
        l * &self.inv_sqrt
    }

    fn objective(&self, gain: &DMatrix<f64>, delta: PrivacyRatio, dims: Dimensions) -> f64 {
        (gain * &self.xi * delta.weight_matrix(dims) * &self.xi * gain.transpose()).trace()
    }
}

/// Informative equilibrium for a scalar message.
///
/// The sender's policy is deterministic: `K = ξᵀ Ξ^{-1/2}` with `ξ` the unit
/// eigenvector of the smallest eigenvalue of `Ξ^{1/2} D Ξ^{1/2}`, and no noise.
pub fn solve_scalar(model: &GaussianModel, delta: PrivacyRatio) -> Result<EquilibriumSolution> {
    let dims = model.dims();
    if dims.n_y != 1 {
        return Err(Error::Contract(format!(
            "solve_scalar needs n_y = 1 (got {}); use solve_general",
            dims.n_y
        )));
    }
    let spectrum = WeightedSpectrum::new(model, delta)?;
    let smallest = spectrum.eigen.values[0];
    if !(smallest < 0.0) {
        return Err(Error::Contract(format!(
            "smallest eigenvalue {smallest} of the weighted conditional covariance is not negative"
        )));
    }
    let gain = spectrum.gain(1, 1);
    let sender = SenderPolicy::from_gain(dims, &gain, DMatrix::zeros(1, 1))?;
    let diagnostics = Diagnostics {
        eigenvalues: spectrum.eigenvalues(),
        active_rank: 1,
        objective: spectrum.objective(&gain, delta, dims),
    };
    best_response_solution(model, delta, sender, diagnostics)
}

/// Informative equilibrium for any message dimension.
///
/// Uses `min(n_y, #negative eigenvalues)` eigenvectors of
/// `Ξ^{1/2} D Ξ^{1/2}`; the remaining message coordinates carry only noise,
/// with `V_vv = I − K Ξ Kᵀ`.
pub fn solve_general(model: &GaussianModel, delta: PrivacyRatio) -> Result<EquilibriumSolution> {
    let dims = model.dims();
    let spectrum = WeightedSpectrum::new(model, delta)?;
    let scale = spectrum.eigen.values.amax();
    let negative = spectrum
        .eigen
        .values
        .iter()
        .filter(|&&l| l < -NEGATIVE_EIGEN_TOLERANCE * scale)
        .count();
    let active = negative.min(dims.n_y);
    let gain = spectrum.gain(dims.n_y, active);
    let v_vv = linalg::symmetrize(
        &(DMatrix::identity(dims.n_y, dims.n_y) - &gain * &spectrum.xi * gain.transpose()),
    );
    let sender = SenderPolicy::from_gain(dims, &gain, v_vv)?;
    let diagnostics = Diagnostics {
        eigenvalues: spectrum.eigenvalues(),
        active_rank: active,
        objective: spectrum.objective(&gain, delta, dims),
    };
    best_response_solution(model, delta, sender, diagnostics)
}

/// Babbling equilibrium: the message is standard Gaussian noise and both
/// estimators use `z` alone.
pub fn babbling_equilibrium(model: &GaussianModel, delta: PrivacyRatio) -> Result<EquilibriumSolution> {
    model.ensure_valid()?;
    let dims = model.dims();
    let sender = SenderPolicy::babbling(dims);
    let moments = message_moments(model, &sender)?;
    let zz_inv = model.v_zz_inverse()?;
    let receiver = EstimatorPolicy {
        gain_y: DMatrix::zeros(dims.n_x, dims.n_y),
        gain_z: model.v_xz() * &zz_inv,
    };
    let malicious = EstimatorPolicy {
        gain_y: DMatrix::zeros(dims.n_w, dims.n_y),
        gain_z: model.v_wz() * &zz_inv,
    };
    let receiver_mse = model.baseline_receiver()?;
    let malicious_mse = model.baseline_malicious()?;
    Ok(EquilibriumSolution {
        sender,
        receiver,
        malicious,
        moments,
        delta,
        receiver_mse,
        malicious_mse,
        sender_cost: receiver_mse - delta.value() * malicious_mse,
        rule: ResponseRule::Fixed,
        diagnostics: Diagnostics {
            eigenvalues: Vec::new(),
            active_rank: 0,
            objective: 0.0,
        },
    })
}

/// Applies an invertible transformation `κ` to the message.
///
/// Sender gains and noise become `κ K` and `κ V_vv κᵀ`. Best-responding
/// estimators are recomputed from the transformed moments; the errors are
/// unchanged because `κ y` carries the same information as `y`.
pub fn scale_equilibrium(
    model: &GaussianModel,
    solution: &EquilibriumSolution,
    kappa: &DMatrix<f64>,
) -> Result<EquilibriumSolution> {
    let n_y = solution.sender.n_y();
    if kappa.shape() != (n_y, n_y) {
        return Err(Error::Dimension {
            block: "kappa".into(),
            expected: (n_y, n_y),
            found: kappa.shape(),
        });
    }
    let sv = kappa.clone().singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if !(lo > 0.0 && hi / lo <= MAX_KAPPA_CONDITION) {
        return Err(Error::Contract(format!(
            "kappa must be invertible (condition number {:e} exceeds {:e})",
            hi / lo,
            MAX_KAPPA_CONDITION
        )));
    }
    let sender = solution.sender.transform(kappa);
    let moments = solution.moments.transform(kappa);
    let mut out = solution.clone();
    match solution.rule {
        ResponseRule::BestResponse => {
            let (receiver, malicious) = lmmse_gains(model, &moments)?;
            let costs = costs_from_moments(model, &moments, solution.delta)?;
            out.receiver = receiver;
            out.malicious = malicious;
            out.receiver_mse = costs.receiver_mse;
            out.malicious_mse = costs.malicious_mse;
            out.sender_cost = costs.sender_cost;
        }
        ResponseRule::Fixed => {}
    }
    out.sender = sender;
    out.moments = moments;
    Ok(out)
}

/// LMMSE gains of the receiver (for `x`) and the eavesdropper (for `w`)
/// given the observation `(y, z)`.
pub fn lmmse_gains(
    model: &GaussianModel,
    moments: &MessageMoments,
) -> Result<(EstimatorPolicy, EstimatorPolicy)> {
    let s = moments.observation_covariance(model);
    check_nondegenerate(&s)?;
    let solve = |cross: DMatrix<f64>| {
        linalg::spd_right_solve(&cross, &s)
            .ok_or_else(|| Error::DegenerateMessage("Cholesky factorisation failed".into()))
    };
    let n_y = moments.n_y();
    let receiver = EstimatorPolicy::split(&solve(moments.receiver_cross(model))?, n_y);
    let malicious = EstimatorPolicy::split(&solve(moments.malicious_cross(model))?, n_y);
    Ok((receiver, malicious))
}

pub(crate) fn check_nondegenerate(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() == 0 {
        return Ok(());
    }
    let min = linalg::min_eigenvalue(s);
    let scale = linalg::max_abs_diag(s);
    if !(min > DEGENERACY_TOLERANCE * scale) {
        return Err(Error::DegenerateMessage(format!(
            "covariance of (y, z) has smallest eigenvalue {min:e} (scale {scale:e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn section_iv(n_y: usize) -> GaussianModel {
        GaussianModel::without_side_info(n_y, scalar(1.0), scalar(1.0), scalar(0.8)).unwrap()
    }

    fn delta(d: f64) -> PrivacyRatio {
        PrivacyRatio::new(d).unwrap()
    }

    /// Dense search over the constraint ellipse `K Ξ Kᵀ = 1` of a
    /// two-variable scalar-message problem, returning the minimum of `trace(K Ξ D Ξ Kᵀ)` and the
    /// minimiser.
    fn ellipse_grid(xi: &DMatrix<f64>, d: f64, steps: usize) -> (f64, DMatrix<f64>) {
        let weight = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, d]);
        let a = xi * weight * xi;
        let mut best = (f64::INFINITY, DMatrix::zeros(1, 2));
        for i in 0..steps {
            let t = std::f64::consts::PI * i as f64 / steps as f64;
            let dir = DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]);
            let norm = (&dir * xi * dir.transpose())[(0, 0)].sqrt();
            let k = dir / norm;
            let cost = (&k * &a * k.transpose())[(0, 0)];
            if cost < best.0 {
                best = (cost, k);
            }
        }
        best
    }

    #[test]
    fn privacy_ratio_rejects_negative_and_nan() {
        assert!(PrivacyRatio::new(-0.1).is_err());
        assert!(PrivacyRatio::new(f64::NAN).is_err());
        assert!(PrivacyRatio::new(f64::INFINITY).is_err());
        assert_eq!(PrivacyRatio::new(0.0).unwrap().value(), 0.0);
    }

    #[test]
    fn scalar_full_revelation_at_zero_delta() {
        let sol = solve_scalar(&section_iv(1), delta(0.0)).unwrap();
        assert!(sol.receiver_mse.abs() < 1e-12);
        assert_relative_eq!(sol.malicious_mse, 0.36, epsilon = 1e-9);
        let xi = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let (grid_cost, _) = ellipse_grid(&xi, 0.0, 200_000);
        assert!((grid_cost - sol.diagnostics.objective).abs() < 1e-6);
    }

    #[test]
    fn scalar_unit_delta_matches_eigenvalue_and_grid() {
        let sol = solve_scalar(&section_iv(1), delta(1.0)).unwrap();
        assert_relative_eq!(sol.diagnostics.eigenvalues[0], -0.6, epsilon = 1e-12);
        assert_relative_eq!(sol.sender_cost, -0.6, epsilon = 1e-12);
        assert_relative_eq!(sol.diagnostics.objective, -0.6, epsilon = 1e-12);
        let xi = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let (grid_cost, _) = ellipse_grid(&xi, 1.0, 200_000);
        assert!((grid_cost + 0.6).abs() < 1e-6);
        assert_eq!(sol.sender.v_vv, scalar(0.0));
        assert_relative_eq!(sol.moments.v_yy, scalar(1.0), epsilon = 1e-12);
    }

    #[test]
    fn independent_state_is_revealed_for_every_delta() {
        let model = GaussianModel::without_side_info(1, scalar(1.0), scalar(1.0), scalar(0.0)).unwrap();
        for d in [0.0, 0.3, 1.0, 7.0, 100.0] {
            let sol = solve_scalar(&model, delta(d)).unwrap();
            assert_relative_eq!(sol.sender.k_x[(0, 0)].abs(), 1.0, epsilon = 1e-12);
            assert!(sol.sender.k_w[(0, 0)].abs() < 1e-12);
            assert!(sol.receiver_mse.abs() < 1e-12);
            assert_relative_eq!(sol.malicious_mse, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_rejects_vector_messages() {
        assert!(matches!(
            solve_scalar(&section_iv(2), delta(1.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn general_agrees_with_scalar_for_one_dimensional_messages() {
        for d in [0.0, 0.5, 1.0, 10.0] {
            let a = solve_scalar(&section_iv(1), delta(d)).unwrap();
            let b = solve_general(&section_iv(1), delta(d)).unwrap();
            let (ka, kb) = (a.sender.gain(), b.sender.gain());
            let sign = (ka.dot(&kb)).signum();
            assert_relative_eq!(ka, kb * sign, epsilon = 1e-12);
            assert_relative_eq!(a.sender_cost, b.sender_cost, epsilon = 1e-12);
            assert!(b.sender.v_vv[(0, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_message_keeps_one_noise_coordinate() {
        for d in [0.1, 1.0, 5.0] {
            let sol = solve_general(&section_iv(2), delta(d)).unwrap();
            let negatives = sol.diagnostics.eigenvalues.iter().filter(|&&l| l < 0.0).count();
            assert_eq!(negatives, 1);
            assert_eq!(sol.diagnostics.active_rank, 1);
            let eig = SortedEigen::new(&sol.sender.v_vv);
            assert!(eig.values[0].abs() < 1e-12);
            assert_relative_eq!(eig.values[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn babbling_uses_prior_variances() {
        let sol = babbling_equilibrium(&section_iv(1), delta(3.0)).unwrap();
        assert_eq!(sol.receiver_mse, 1.0);
        assert_eq!(sol.malicious_mse, 1.0);
        assert_eq!(sol.sender_cost, 1.0 - 3.0);
        assert_eq!(sol.rule, ResponseRule::Fixed);
    }

    #[test]
    fn babbling_with_duplicated_side_information() {
        // z = x up to a small independent perturbation; V_zz = 1, V_xz = 1 − ε.
        let eps = 1e-6;
        let dims = Dimensions::new(1, 1, 1, 1).unwrap();
        let joint = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 1.0 - eps, 0.5, 1.0, 0.5, 1.0 - eps, 0.5, 1.0],
        );
        let model = GaussianModel::from_joint(dims, &joint).unwrap();
        let sol = babbling_equilibrium(&model, delta(1.0)).unwrap();
        let expected = 1.0 - (1.0 - eps) * (1.0 - eps);
        assert_relative_eq!(sol.receiver_mse, expected, epsilon = 1e-15);
        assert!(sol.receiver_mse < 3.0 * eps);
        assert_relative_eq!(sol.receiver.gain_z[(0, 0)], 1.0 - eps, epsilon = 1e-15);
    }

    #[test]
    fn identity_kappa_is_a_no_op() {
        let model = section_iv(1);
        let sol = solve_scalar(&model, delta(1.0)).unwrap();
        let scaled = scale_equilibrium(&model, &sol, &DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(scaled.sender.gain(), sol.sender.gain(), epsilon = 1e-15);
        assert_relative_eq!(scaled.receiver.gain_y, sol.receiver.gain_y, epsilon = 1e-12);
        assert_relative_eq!(scaled.receiver_mse, sol.receiver_mse, epsilon = 1e-12);
    }

    #[test]
    fn doubling_the_message_halves_the_receiver_gain() {
        let model = section_iv(1);
        let sol = solve_scalar(&model, delta(1.0)).unwrap();
        let scaled = scale_equilibrium(&model, &sol, &scalar(2.0)).unwrap();
        assert_relative_eq!(scaled.sender.gain(), sol.sender.gain() * 2.0, epsilon = 1e-15);
        assert_relative_eq!(scaled.receiver.gain_y, &sol.receiver.gain_y * 0.5, epsilon = 1e-12);
        assert_relative_eq!(scaled.malicious.gain_y, &sol.malicious.gain_y * 0.5, epsilon = 1e-12);
        assert_relative_eq!(scaled.receiver_mse, sol.receiver_mse, epsilon = 1e-12);
        assert_relative_eq!(scaled.malicious_mse, sol.malicious_mse, epsilon = 1e-12);
    }

    #[test]
    fn rotation_keeps_costs_and_spectrum() {
        let model = section_iv(2);
        let sol = solve_general(&model, delta(0.7)).unwrap();
        let t: f64 = 0.9;
        let rot = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let scaled = scale_equilibrium(&model, &sol, &rot).unwrap();
        assert_relative_eq!(scaled.receiver_mse, sol.receiver_mse, epsilon = 1e-12);
        assert_relative_eq!(scaled.malicious_mse, sol.malicious_mse, epsilon = 1e-12);
        assert_eq!(scaled.diagnostics, sol.diagnostics);
    }

    #[test]
    fn singular_kappa_is_rejected() {
        let model = section_iv(2);
        let sol = solve_general(&model, delta(0.7)).unwrap();
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            scale_equilibrium(&model, &sol, &singular),
            Err(Error::Contract(_))
        ));
        let ill = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(scale_equilibrium(&model, &sol, &ill).is_err());
    }

    #[test]
    fn lmmse_of_perfect_observation() {
        let model = section_iv(1);
        let policy = SenderPolicy::new(scalar(1.0), scalar(0.0), DMatrix::zeros(1, 0), scalar(0.0)).unwrap();
        let moments = message_moments(&model, &policy).unwrap();
        let (r, m) = lmmse_gains(&model, &moments).unwrap();
        assert_relative_eq!(r.gain_y, scalar(1.0), epsilon = 1e-15);
        assert_relative_eq!(m.gain_y, scalar(0.8), epsilon = 1e-15);
    }

    #[test]
    fn lmmse_of_pure_noise() {
        let model = section_iv(1);
        let moments = message_moments(&model, &SenderPolicy::babbling(model.dims())).unwrap();
        let (r, m) = lmmse_gains(&model, &moments).unwrap();
        assert_eq!(r.gain_y, scalar(0.0));
        assert_eq!(m.gain_y, scalar(0.0));
    }

    #[test]
    fn lmmse_reports_degenerate_messages() {
        let model = section_iv(2);
        // Both message coordinates equal x with no noise.
        let policy = SenderPolicy::new(
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 0),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let moments = message_moments(&model, &policy).unwrap();
        assert!(matches!(
            lmmse_gains(&model, &moments),
            Err(Error::DegenerateMessage(_))
        ));
    }

    #[test]
    fn sender_policy_rejects_indefinite_noise() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(SenderPolicy::new(
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 0),
            bad
        )
        .is_err());
    }
}
