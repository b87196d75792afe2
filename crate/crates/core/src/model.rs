//! The joint zero-mean Gaussian model of state `x`, private information `w`
//! and side information `z`, and the second-moment algebra built on it.
//!
//! Blocks are stored individually; the joint covariance is assembled on
//! demand. A model with `n_z = 0` carries zero-dimensional `z` blocks, so
//! every formula involving `V_zz⁻¹` degenerates to the unconditional one
//! without special cases.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{PrivacyRatio, SenderPolicy};
use crate::error::{Error, Result};
use crate::linalg::{self, SortedEigen};

/// Default threshold on the smallest eigenvalue of the joint covariance,
/// relative to its largest diagonal entry.
pub const DEFAULT_PD_TOLERANCE: f64 = 1e-10;

/// Largest tolerated |A − Aᵀ| relative to the largest diagonal entry.
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_x: usize,
    pub n_w: usize,
    /// Side-information dimension; zero means no side information.
    pub n_z: usize,
    pub n_y: usize,
}

impl Dimensions {
    pub fn new(n_x: usize, n_w: usize, n_z: usize, n_y: usize) -> Result<Self> {
        let dims = Self { n_x, n_w, n_z, n_y };
        dims.check()?;
        Ok(dims)
    }

    fn check(&self) -> Result<()> {
        if self.n_x == 0 || self.n_w == 0 || self.n_y == 0 {
            return Err(Error::Contract(format!(
                "n_x, n_w and n_y must be at least 1 (got {}, {}, {})",
                self.n_x, self.n_w, self.n_y
            )));
        }
        Ok(())
    }

    /// `n_x + n_w`, the dimension of the sender's observation.
    pub fn n_xw(&self) -> usize {
        self.n_x + self.n_w
    }

    /// `n_x + n_w + n_z`, the dimension of the joint model.
    pub fn n_joint(&self) -> usize {
        self.n_x + self.n_w + self.n_z
    }

    pub fn with_n_y(self, n_y: usize) -> Result<Self> {
        Self::new(self.n_x, self.n_w, self.n_z, n_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    dims: Dimensions,
    v_xx: DMatrix<f64>,
    v_ww: DMatrix<f64>,
    v_zz: DMatrix<f64>,
    v_xw: DMatrix<f64>,
    v_xz: DMatrix<f64>,
    v_wz: DMatrix<f64>,
}

fn check_shape(name: &str, m: &DMatrix<f64>, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(Error::Dimension {
            block: name.to_string(),
            expected,
            found: m.shape(),
        });
    }
    Ok(())
}

impl GaussianModel {
    /// Builds a model from its blocks, checking only that the shapes agree
    /// with `dims`. Use [`validate_model`] for the positive-definiteness check.
    pub fn new(
        dims: Dimensions,
        v_xx: DMatrix<f64>,
        v_ww: DMatrix<f64>,
        v_zz: DMatrix<f64>,
        v_xw: DMatrix<f64>,
        v_xz: DMatrix<f64>,
        v_wz: DMatrix<f64>,
    ) -> Result<Self> {
        dims.check()?;
        let Dimensions { n_x, n_w, n_z, .. } = dims;
        check_shape("V_xx", &v_xx, (n_x, n_x))?;
        check_shape("V_ww", &v_ww, (n_w, n_w))?;
        check_shape("V_zz", &v_zz, (n_z, n_z))?;
        check_shape("V_xw", &v_xw, (n_x, n_w))?;
        check_shape("V_xz", &v_xz, (n_x, n_z))?;
        check_shape("V_wz", &v_wz, (n_w, n_z))?;
        Ok(Self {
            dims,
            v_xx,
            v_ww,
            v_zz,
            v_xw,
            v_xz,
            v_wz,
        })
    }

    /// Model without side information.
    pub fn without_side_info(
        n_y: usize,
        v_xx: DMatrix<f64>,
        v_ww: DMatrix<f64>,
        v_xw: DMatrix<f64>,
    ) -> Result<Self> {
        let dims = Dimensions::new(v_xx.nrows(), v_ww.nrows(), 0, n_y)?;
        Self::new(
            dims,
            v_xx,
            v_ww,
            DMatrix::zeros(0, 0),
            v_xw,
            DMatrix::zeros(dims.n_x, 0),
            DMatrix::zeros(dims.n_w, 0),
        )
    }

    /// Splits a joint `(x, w, z)` covariance into blocks.
    pub fn from_joint(dims: Dimensions, joint: &DMatrix<f64>) -> Result<Self> {
        dims.check()?;
        check_shape("joint", joint, (dims.n_joint(), dims.n_joint()))?;
        let (n_x, n_w, n_z) = (dims.n_x, dims.n_w, dims.n_z);
        let b = |r: usize, c: usize, nr: usize, nc: usize| joint.view((r, c), (nr, nc)).into_owned();
        Self::new(
            dims,
            b(0, 0, n_x, n_x),
            b(n_x, n_x, n_w, n_w),
            b(n_x + n_w, n_x + n_w, n_z, n_z),
            b(0, n_x, n_x, n_w),
            b(0, n_x + n_w, n_x, n_z),
            b(n_x, n_x + n_w, n_w, n_z),
        )
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }
    pub fn v_xx(&self) -> &DMatrix<f64> {
        &self.v_xx
    }
    pub fn v_ww(&self) -> &DMatrix<f64> {
        &self.v_ww
    }
    pub fn v_zz(&self) -> &DMatrix<f64> {
        &self.v_zz
    }
    pub fn v_xw(&self) -> &DMatrix<f64> {
        &self.v_xw
    }
    pub fn v_xz(&self) -> &DMatrix<f64> {
        &self.v_xz
    }
    pub fn v_wz(&self) -> &DMatrix<f64> {
        &self.v_wz
    }

    /// Same model with a different message dimension.
    pub fn with_message_dim(&self, n_y: usize) -> Result<Self> {
        let mut out = self.clone();
        out.dims = self.dims.with_n_y(n_y)?;
        Ok(out)
    }

    /// Same model with every entry of `V_xw` replaced by `value`.
    pub fn with_uniform_v_xw(&self, value: f64) -> Self {
        let mut out = self.clone();
        out.v_xw.fill(value);
        out
    }

    /// Joint covariance of `(x, w, z)`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        linalg::symmetric_blocks(&[
            vec![&self.v_xx, &self.v_xw, &self.v_xz],
            vec![&self.v_ww, &self.v_wz],
            vec![&self.v_zz],
        ])
    }

    /// Unconditional covariance of the stacked `(x, w)`.
    pub fn xw_covariance(&self) -> DMatrix<f64> {
        linalg::symmetric_blocks(&[vec![&self.v_xx, &self.v_xw], vec![&self.v_ww]])
    }

    /// `[V_xz; V_wz]`, the cross-covariance of `(x, w)` with `z`.
    pub fn xw_z_cross(&self) -> DMatrix<f64> {
        linalg::vstack(&self.v_xz, &self.v_wz)
    }

    pub fn v_zz_inverse(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.v_zz)
            .ok_or_else(|| Error::Contract("V_zz is not positive definite".into()))
    }

    /// `trace(V_xx − V_xz V_zz⁻¹ V_zx)`: receiver error using `z` only.
    pub fn baseline_receiver(&self) -> Result<f64> {
        let inv = self.v_zz_inverse()?;
        Ok((&self.v_xx - &self.v_xz * inv * self.v_xz.transpose()).trace())
    }

    /// `trace(V_ww − V_wz V_zz⁻¹ V_zw)`: eavesdropper error using `z` only.
    pub fn baseline_malicious(&self) -> Result<f64> {
        let inv = self.v_zz_inverse()?;
        Ok((&self.v_ww - &self.v_wz * inv * self.v_wz.transpose()).trace())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_model(self, DEFAULT_PD_TOLERANCE);
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSymmetric { block: &'static str, asymmetry: f64 },
    NotPositiveDefinite { min_eigenvalue: f64, threshold: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSymmetric { block, asymmetry } => {
                write!(f, "{block} is not symmetric (max |A - A^T| = {asymmetry:e})")
            }
            Violation::NotPositiveDefinite {
                min_eigenvalue,
                threshold,
            } => write!(
                f,
                "joint covariance is singular or indefinite (smallest eigenvalue {min_eigenvalue:e} <= {threshold:e})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the joint covariance is symmetric and that its smallest
/// eigenvalue exceeds `tolerance` times its largest diagonal entry.
pub fn validate_model(model: &GaussianModel, tolerance: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let joint = model.joint_covariance();
    let scale = linalg::max_abs_diag(&joint).max(f64::MIN_POSITIVE);
    for (block, m) in [("V_xx", &model.v_xx), ("V_ww", &model.v_ww), ("V_zz", &model.v_zz)] {
        let asymmetry = linalg::asymmetry(m);
        if asymmetry > SYMMETRY_TOLERANCE * scale {
            violations.push(Violation::NotSymmetric { block, asymmetry });
        }
    }
    let min_eigenvalue = linalg::min_eigenvalue(&joint);
    let threshold = tolerance * scale;
    if !(min_eigenvalue > threshold) {
        violations.push(Violation::NotPositiveDefinite {
            min_eigenvalue,
            threshold,
        });
    }
    ValidationReport { violations }
}

/// Covariance `Ξ` of `(x, w)` given `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCovariance {
    pub xi: DMatrix<f64>,
}

impl ConditionalCovariance {
    /// Symmetric square root and its inverse.
    pub fn sqrt_pair(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        linalg::spd_sqrt_pair(&self.xi)
    }

    pub fn eigen(&self) -> SortedEigen {
        SortedEigen::new(&self.xi)
    }
}

/// Schur complement of `V_zz` in the joint covariance.
pub fn conditional_covariance(model: &GaussianModel) -> Result<ConditionalCovariance> {
    model.ensure_valid()?;
    let cross = model.xw_z_cross();
    let inv = model.v_zz_inverse()?;
    let xi = model.xw_covariance() - &cross * inv * cross.transpose();
    Ok(ConditionalCovariance {
        xi: linalg::symmetrize(&xi),
    })
}

/// Second moments between the message `y` and the model variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageMoments {
    pub v_yy: DMatrix<f64>,
    pub v_xy: DMatrix<f64>,
    pub v_wy: DMatrix<f64>,
    pub v_zy: DMatrix<f64>,
}

impl MessageMoments {
    pub fn n_y(&self) -> usize {
        self.v_yy.nrows()
    }

    /// `[V_xy; V_wy; V_zy]`.
    pub fn stacked_cross(&self) -> DMatrix<f64> {
        linalg::vstack(&linalg::vstack(&self.v_xy, &self.v_wy), &self.v_zy)
    }

    /// Covariance of the observation `(y, z)` available to both estimators.
    pub fn observation_covariance(&self, model: &GaussianModel) -> DMatrix<f64> {
        let v_yz = self.v_zy.transpose();
        linalg::symmetric_blocks(&[vec![&self.v_yy, &v_yz], vec![model.v_zz()]])
    }

    /// `[V_xy V_xz]`, cross-covariance of `x` with the observation.
    pub fn receiver_cross(&self, model: &GaussianModel) -> DMatrix<f64> {
        linalg::hstack(&self.v_xy, model.v_xz())
    }

    /// `[V_wy V_wz]`, cross-covariance of `w` with the observation.
    pub fn malicious_cross(&self, model: &GaussianModel) -> DMatrix<f64> {
        linalg::hstack(&self.v_wy, model.v_wz())
    }

    /// `V_yy − V_yz V_zz⁻¹ V_zy`, which equals the identity for a normalised message.
    pub fn conditional_message_covariance(&self, model: &GaussianModel) -> Result<DMatrix<f64>> {
        let inv = model.v_zz_inverse()?;
        Ok(linalg::symmetrize(
            &(&self.v_yy - self.v_zy.transpose() * inv * &self.v_zy),
        ))
    }

    /// Joint covariance of `(y, x, w, z)`.
    pub fn joint_with(&self, model: &GaussianModel) -> DMatrix<f64> {
        let v_yx = self.v_xy.transpose();
        let v_yw = self.v_wy.transpose();
        let v_yz = self.v_zy.transpose();
        linalg::symmetric_blocks(&[
            vec![&self.v_yy, &v_yx, &v_yw, &v_yz],
            vec![model.v_xx(), model.v_xw(), model.v_xz()],
            vec![model.v_ww(), model.v_wz()],
            vec![model.v_zz()],
        ])
    }

    /// Moments of the transformed message `κ y`.
    pub fn transform(&self, kappa: &DMatrix<f64>) -> Self {
        Self {
            v_yy: linalg::symmetrize(&(kappa * &self.v_yy * kappa.transpose())),
            v_xy: &self.v_xy * kappa.transpose(),
            v_wy: &self.v_wy * kappa.transpose(),
            v_zy: &self.v_zy * kappa.transpose(),
        }
    }
}

/// Moments of `y = K_x x + K_w w + K_z z + v` with `v ~ N(0, V_vv)` independent.
pub fn message_moments(model: &GaussianModel, policy: &SenderPolicy) -> Result<MessageMoments> {
    policy.check_against(model.dims())?;
    let dims = model.dims();
    let k_full = policy.full_gain();
    let cross = model.joint_covariance() * k_full.transpose();
    let v_yy = &k_full * &cross + &policy.v_vv;
    let rows = |start: usize, n: usize| cross.view((start, 0), (n, policy.n_y())).into_owned();
    Ok(MessageMoments {
        v_yy: linalg::symmetrize(&v_yy),
        v_xy: rows(0, dims.n_x),
        v_wy: rows(dims.n_x, dims.n_w),
        v_zy: rows(dims.n_xw(), dims.n_z),
    })
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    dims: Dimensions,
    #[serde(rename = "V_xx")]
    v_xx: Rows,
    #[serde(rename = "V_ww")]
    v_ww: Rows,
    #[serde(rename = "V_zz", default, skip_serializing_if = "Option::is_none")]
    v_zz: Option<Rows>,
    #[serde(rename = "V_xw")]
    v_xw: Rows,
    #[serde(rename = "V_xz", default, skip_serializing_if = "Option::is_none")]
    v_xz: Option<Rows>,
    #[serde(rename = "V_wz", default, skip_serializing_if = "Option::is_none")]
    v_wz: Option<Rows>,
    #[serde(default)]
    delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    #[serde(rename = "K_x")]
    k_x: Rows,
    #[serde(rename = "K_w")]
    k_w: Rows,
    #[serde(rename = "K_z", default, skip_serializing_if = "Option::is_none")]
    k_z: Option<Rows>,
    #[serde(rename = "V_vv")]
    v_vv: Rows,
}

/// A model together with a privacy ratio and, optionally, a sender policy to
/// be checked instead of solved for.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: GaussianModel,
    pub delta: PrivacyRatio,
    pub policy: Option<SenderPolicy>,
}

fn to_matrix(name: &str, rows: &Rows, expected: (usize, usize)) -> Result<DMatrix<f64>> {
    // An empty row list stands for a matrix with zero rows.
    let nrows = rows.len();
    let ncols = if nrows == 0 { expected.1 } else { rows[0].len() };
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{name}: rows have unequal lengths")));
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    check_shape(name, &m, expected)?;
    Ok(m)
}

fn optional_block(name: &str, rows: &Option<Rows>, expected: (usize, usize)) -> Result<DMatrix<f64>> {
    match rows {
        Some(rows) => to_matrix(name, rows, expected),
        None if expected.0 == 0 || expected.1 == 0 => Ok(DMatrix::zeros(expected.0, expected.1)),
        None => Err(Error::Parse(format!("{name} is required when n_z > 0"))),
    }
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let d = file.dims;
        d.check()?;
        let model = GaussianModel::new(
            d,
            to_matrix("V_xx", &file.v_xx, (d.n_x, d.n_x))?,
            to_matrix("V_ww", &file.v_ww, (d.n_w, d.n_w))?,
            optional_block("V_zz", &file.v_zz, (d.n_z, d.n_z))?,
            to_matrix("V_xw", &file.v_xw, (d.n_x, d.n_w))?,
            optional_block("V_xz", &file.v_xz, (d.n_x, d.n_z))?,
            optional_block("V_wz", &file.v_wz, (d.n_w, d.n_z))?,
        )?;
        let delta = PrivacyRatio::new(file.delta)?;
        let policy = match &file.policy {
            Some(p) => Some(SenderPolicy::new(
                to_matrix("K_x", &p.k_x, (d.n_y, d.n_x))?,
                to_matrix("K_w", &p.k_w, (d.n_y, d.n_w))?,
                optional_block("K_z", &p.k_z, (d.n_y, d.n_z))?,
                to_matrix("V_vv", &p.v_vv, (d.n_y, d.n_y))?,
            )?),
            None => None,
        };
        Ok(Self {
            model,
            delta,
            policy,
        })
    }

    /// Parses a scenario and rejects it if the model fails validation.
    pub fn load(path: &Path) -> Result<Self> {
        let scenario = Self::load_unvalidated(path)?;
        scenario.model.ensure_valid()?;
        Ok(scenario)
    }

    /// Parses a scenario without the positive-definiteness check.
    pub fn load_unvalidated(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let m = &self.model;
        let with_z = m.dims().n_z > 0;
        let file = ScenarioFile {
            dims: m.dims(),
            v_xx: to_rows(m.v_xx()),
            v_ww: to_rows(m.v_ww()),
            v_zz: with_z.then(|| to_rows(m.v_zz())),
            v_xw: to_rows(m.v_xw()),
            v_xz: with_z.then(|| to_rows(m.v_xz())),
            v_wz: with_z.then(|| to_rows(m.v_wz())),
            delta: self.delta.value(),
            policy: self.policy.as_ref().map(|p| PolicyFile {
                k_x: to_rows(&p.k_x),
                k_w: to_rows(&p.k_w),
                k_z: with_z.then(|| to_rows(&p.k_z)),
                v_vv: to_rows(&p.v_vv),
            }),
        };
        serde_json::to_string_pretty(&file).expect("scenario serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    pub(crate) fn section_iv() -> GaussianModel {
        GaussianModel::without_side_info(1, scalar(1.0), scalar(1.0), scalar(0.8)).unwrap()
    }

    #[test]
    fn section_iv_model_is_valid() {
        assert!(validate_model(&section_iv(), DEFAULT_PD_TOLERANCE).is_ok());
    }

    #[test]
    fn perfect_correlation_is_singular() {
        let m = GaussianModel::without_side_info(1, scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let report = validate_model(&m, DEFAULT_PD_TOLERANCE);
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::NotPositiveDefinite { .. }]
        ));
        assert!(matches!(
            conditional_covariance(&m),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn identity_joint_is_valid_for_any_dims() {
        for (n_x, n_w, n_z) in [(1, 1, 0), (2, 3, 1), (4, 1, 3)] {
            let dims = Dimensions::new(n_x, n_w, n_z, 2).unwrap();
            let m = GaussianModel::from_joint(dims, &DMatrix::identity(dims.n_joint(), dims.n_joint()))
                .unwrap();
            assert!(validate_model(&m, DEFAULT_PD_TOLERANCE).is_ok());
            let xi = conditional_covariance(&m).unwrap().xi;
            assert_eq!(xi, DMatrix::identity(n_x + n_w, n_x + n_w));
        }
    }

    #[test]
    fn asymmetric_block_is_reported() {
        let dims = Dimensions::new(2, 1, 0, 1).unwrap();
        let v_xx = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let m = GaussianModel::new(
            dims,
            v_xx,
            scalar(1.0),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 0),
            DMatrix::zeros(1, 0),
        )
        .unwrap();
        let report = validate_model(&m, DEFAULT_PD_TOLERANCE);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NotSymmetric { block: "V_xx", .. })));
    }

    #[test]
    fn dimension_mismatch_names_block() {
        let dims = Dimensions::new(1, 1, 1, 1).unwrap();
        let err = GaussianModel::new(
            dims,
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(0.0),
            DMatrix::zeros(1, 2),
            scalar(0.0),
        )
        .unwrap_err();
        match err {
            Error::Dimension { block, .. } => assert_eq!(block, "V_xz"),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(Dimensions::new(0, 1, 0, 1).is_err());
        assert!(Dimensions::new(1, 1, 0, 0).is_err());
    }

    #[test]
    fn section_iv_conditional_covariance() {
        let xi = conditional_covariance(&section_iv()).unwrap().xi;
        assert_eq!(xi, DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]));
    }

    #[test]
    fn conditional_covariance_matches_inverse_oracle() {
        // Ξ⁻¹ is the (x, w) block of the inverse joint covariance.
        let dims = Dimensions::new(1, 1, 1, 1).unwrap();
        let joint = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let m = GaussianModel::from_joint(dims, &joint).unwrap();
        let xi = conditional_covariance(&m).unwrap().xi;
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, -0.25, -0.25, 0.75]);
        assert_relative_eq!(xi, expected, epsilon = 1e-15);

        let precision = joint.try_inverse().unwrap();
        let oracle = precision.view((0, 0), (2, 2)).into_owned().try_inverse().unwrap();
        assert_relative_eq!(xi, oracle, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_message_moments() {
        let m = section_iv();
        let policy = SenderPolicy::new(scalar(1.0), scalar(0.0), DMatrix::zeros(1, 0), scalar(0.0))
            .unwrap();
        let mm = message_moments(&m, &policy).unwrap();
        assert_eq!(mm.v_xy, scalar(1.0));
        assert_eq!(mm.v_wy, scalar(0.8));
        assert_eq!(mm.v_yy, scalar(1.0));
        assert_eq!(mm.v_zy.shape(), (0, 1));
    }

    #[test]
    fn pure_noise_message_moments() {
        let dims = Dimensions::new(2, 1, 1, 2).unwrap();
        let joint = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, 0.3, 0.1, 0.2, 0.3, 1.0, 0.4, 0.0, 0.1, 0.4, 1.5, 0.3, 0.2, 0.0, 0.3, 1.0],
        );
        let m = GaussianModel::from_joint(dims, &joint).unwrap();
        let policy = SenderPolicy::babbling(dims);
        let mm = message_moments(&m, &policy).unwrap();
        assert_eq!(mm.v_yy, DMatrix::identity(2, 2));
        assert_eq!(mm.v_xy, DMatrix::zeros(2, 2));
        assert_eq!(mm.v_wy, DMatrix::zeros(1, 2));
        assert_eq!(mm.v_zy, DMatrix::zeros(1, 2));
    }

    #[test]
    fn message_moments_reject_mismatched_policy() {
        let policy = SenderPolicy::babbling(Dimensions::new(2, 1, 0, 1).unwrap());
        assert!(matches!(
            message_moments(&section_iv(), &policy),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn scenario_round_trip_and_defaults() {
        let text = r#"{"dims":{"n_x":1,"n_w":1,"n_z":0,"n_y":1},
            "V_xx":[[1]],"V_ww":[[1]],"V_xw":[[0.8]],"delta":2.5}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.model, section_iv());
        assert_eq!(s.delta.value(), 2.5);
        assert!(s.policy.is_none());
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again.model, s.model);
    }

    #[test]
    fn scenario_requires_z_blocks_when_present() {
        let text = r#"{"dims":{"n_x":1,"n_w":1,"n_z":1,"n_y":1},
            "V_xx":[[1]],"V_ww":[[1]],"V_xw":[[0.1]],"delta":1}"#;
        assert!(matches!(Scenario::from_json(text), Err(Error::Parse(_))));
        let ragged = r#"{"dims":{"n_x":2,"n_w":1,"n_z":0,"n_y":1},
            "V_xx":[[1,0],[0]],"V_ww":[[1]],"V_xw":[[0.1],[0.0]],"delta":1}"#;
        assert!(matches!(Scenario::from_json(ragged), Err(Error::Parse(_))));
        let negative = r#"{"dims":{"n_x":1,"n_w":1,"n_z":0,"n_y":1},
            "V_xx":[[1]],"V_ww":[[1]],"V_xw":[[0.1]],"delta":-1}"#;
        assert!(Scenario::from_json(negative).is_err());
    }
}
