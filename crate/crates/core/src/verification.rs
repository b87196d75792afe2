//! Independent checks of computed equilibria.
//!
//! - [`sample_game`] and [`monte_carlo_costs`] simulate the game and estimate
//!   the errors empirically.
//! - [`check_sender_deviation`] and [`check_estimator_optimality`] look for
//!   profitable unilateral deviations. They sample affine alternatives, so a
//!   pass is evidence, not proof.
//! - [`check_coalition_separation`] minimises the joint receiver-plus-ϑ·eavesdropper
//!   objective without assuming it separates and compares with the
//!   individual LMMSE gains.
//! - [`oracle_solve`] attacks the sender's constrained problem by
//!   derivative-free random-restart search, for comparison with
//!   [`solve_general`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::equilibrium::{
    lmmse_gains, solve_general, EquilibriumSolution, EstimatorPolicy, PrivacyRatio, ResponseRule,
    SenderPolicy,
};
use crate::error::{Error, Result};
use crate::estimation::{costs_from_moments, linear_estimator_mse, CostBreakdown, Target};
use crate::linalg;
use crate::model::{conditional_covariance, message_moments, Dimensions, GaussianModel, MessageMoments};

/// Relative tolerance for a deviation to count as an improvement.
pub const DEVIATION_TOLERANCE: f64 = 1e-8;

/// Entrywise tolerance on the orthogonality residual of an estimator.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Tolerance on gain equality in the coalition check.
pub const SEPARATION_TOLERANCE: f64 = 1e-9;

/// How far the oracle may undercut the solver before the solver is rejected.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub sample_count: usize,
    pub seed: u64,
    /// Number of samples accumulated before folding into the running totals.
    pub chunk_size: usize,
}

impl SimulationConfig {
    pub fn new(sample_count: usize, seed: u64, chunk_size: usize) -> Result<Self> {
        if sample_count == 0 || chunk_size == 0 {
            return Err(Error::Contract(
                "sample_count and chunk_size must be positive".into(),
            ));
        }
        Ok(Self {
            sample_count,
            seed,
            chunk_size,
        })
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sample_count: 1_000_000,
            seed: 0,
            chunk_size: 1 << 16,
        }
    }
}

/// One realisation of the game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSample {
    pub x: DVector<f64>,
    pub w: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

/// Seeded generator of `(x, w, z, y)` realisations.
///
/// Each draw consumes `n_x + n_w + n_z` standard normals for the model
/// variables followed by `n_y` for the message noise.
#[derive(Debug, Clone)]
pub struct GameSampler {
    dims: Dimensions,
    joint_factor: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    gain: DMatrix<f64>,
    rng: ChaCha8Rng,
    remaining: usize,
    normals: Vec<f64>,
    noise: Vec<f64>,
}

impl GameSampler {
    fn new(model: &GaussianModel, policy: &SenderPolicy, rng: ChaCha8Rng, count: usize) -> Result<Self> {
        model.ensure_valid()?;
        policy.check_against(model.dims())?;
        let dims = model.dims();
        let joint_factor = linalg::symmetrize(&model.joint_covariance())
            .cholesky()
            .ok_or_else(|| Error::Contract("joint covariance is not positive definite".into()))?
            .unpack();
        Ok(Self {
            dims,
            joint_factor,
            noise_factor: linalg::psd_sqrt(&policy.v_vv),
            gain: policy.full_gain(),
            rng,
            remaining: count,
            normals: vec![0.0; dims.n_joint()],
            noise: vec![0.0; dims.n_y],
        })
    }

    /// Writes the next `(x, w, z)` into `joint` and `y` into `message`.
    fn draw_into(&mut self, joint: &mut [f64], message: &mut [f64]) {
        let n = self.dims.n_joint();
        let n_y = self.dims.n_y;
        for v in self.normals.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
        for v in self.noise.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.joint_factor[(i, j)] * self.normals[j];
            }
            joint[i] = acc;
        }
        for r in 0..n_y {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.gain[(r, j)] * joint[j];
            }
            for j in 0..n_y {
                acc += self.noise_factor[(r, j)] * self.noise[j];
            }
            message[r] = acc;
        }
    }
}

impl Iterator for GameSampler {
    type Item = GameSample;

    fn next(&mut self) -> Option<GameSample> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let d = self.dims;
        let mut joint = vec![0.0; d.n_joint()];
        let mut message = vec![0.0; d.n_y];
        self.draw_into(&mut joint, &mut message);
        Some(GameSample {
            x: DVector::from_column_slice(&joint[..d.n_x]),
            w: DVector::from_column_slice(&joint[d.n_x..d.n_xw()]),
            z: DVector::from_column_slice(&joint[d.n_xw()..]),
            y: DVector::from_vec(message),
        })
    }
}

/// Stream of `config.sample_count` game realisations, reproducible from `config.seed`.
pub fn sample_game(
    model: &GaussianModel,
    policy: &SenderPolicy,
    config: &SimulationConfig,
) -> Result<GameSampler> {
    GameSampler::new(
        model,
        policy,
        ChaCha8Rng::seed_from_u64(config.seed),
        config.sample_count,
    )
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct MeanAccumulator {
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MeanAccumulator {
    fn add(&mut self, v: f64) {
        self.sum.add(v);
        self.sum_sq.add(v * v);
    }

    fn merge(&mut self, other: &Self) {
        self.sum.add(other.sum.total());
        self.sum_sq.add(other.sum_sq.total());
    }

    /// Mean and standard error of the mean.
    fn finish(&self, n: usize) -> (f64, f64) {
        let n_f = n as f64;
        let mean = self.sum.total() / n_f;
        if n < 2 {
            return (mean, f64::INFINITY);
        }
        let var = ((self.sum_sq.total() - n_f * mean * mean) / (n_f - 1.0)).max(0.0);
        (mean, (var / n_f).sqrt())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct GameAccumulator {
    receiver: MeanAccumulator,
    malicious: MeanAccumulator,
    sender: MeanAccumulator,
}

impl GameAccumulator {
    fn merge(&mut self, other: &Self) {
        self.receiver.merge(&other.receiver);
        self.malicious.merge(&other.malicious);
        self.sender.merge(&other.sender);
    }
}

/// Empirical costs with standard errors of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloReport {
    /// Empirical errors; the baselines are the closed-form values.
    pub costs: CostBreakdown,
    pub receiver_se: f64,
    pub malicious_se: f64,
    pub sender_cost_se: f64,
    pub samples: usize,
}

struct ChunkRunner<'a> {
    receiver: DMatrix<f64>,
    malicious: DMatrix<f64>,
    delta: f64,
    dims: Dimensions,
    model: &'a GaussianModel,
}

impl ChunkRunner<'_> {
    fn run(&self, sampler: &mut GameSampler, count: usize) -> GameAccumulator {
        let d = self.dims;
        let mut joint = vec![0.0; d.n_joint()];
        let mut message = vec![0.0; d.n_y];
        let mut acc = GameAccumulator::default();
        for _ in 0..count {
            sampler.draw_into(&mut joint, &mut message);
            let z = &joint[d.n_xw()..];
            let err_r = squared_error(&self.receiver, &joint[..d.n_x], &message, z);
            let err_m = squared_error(&self.malicious, &joint[d.n_x..d.n_xw()], &message, z);
            acc.receiver.add(err_r);
            acc.malicious.add(err_m);
            acc.sender.add(err_r - self.delta * err_m);
        }
        acc
    }

    fn report(&self, acc: &GameAccumulator, n: usize) -> Result<MonteCarloReport> {
        let (receiver_mse, receiver_se) = acc.receiver.finish(n);
        let (malicious_mse, malicious_se) = acc.malicious.finish(n);
        let (sender_cost, sender_cost_se) = acc.sender.finish(n);
        Ok(MonteCarloReport {
            costs: CostBreakdown {
                receiver_mse,
                malicious_mse,
                sender_cost,
                baseline_receiver: self.model.baseline_receiver()?,
                baseline_malicious: self.model.baseline_malicious()?,
            },
            receiver_se,
            malicious_se,
            sender_cost_se,
            samples: n,
        })
    }
}

/// `‖t − G (y, z)‖²` with `G` the stacked estimator gain.
fn squared_error(gain: &DMatrix<f64>, target: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let n_y = y.len();
    let mut total = 0.0;
    for (i, &t) in target.iter().enumerate() {
        let mut est = 0.0;
        for (j, &v) in y.iter().enumerate() {
            est += gain[(i, j)] * v;
        }
        for (j, &v) in z.iter().enumerate() {
            est += gain[(i, n_y + j)] * v;
        }
        let e = t - est;
        total += e * e;
    }
    total
}

fn chunk_runner<'a>(
    model: &'a GaussianModel,
    receiver: &EstimatorPolicy,
    malicious: &EstimatorPolicy,
    delta: PrivacyRatio,
) -> Result<ChunkRunner<'a>> {
    let dims = model.dims();
    let n_o = dims.n_y + dims.n_z;
    for (name, g, rows) in [("receiver", receiver, dims.n_x), ("malicious", malicious, dims.n_w)] {
        let stacked = g.stacked();
        if stacked.shape() != (rows, n_o) {
            return Err(Error::Dimension {
                block: format!("{name} estimator"),
                expected: (rows, n_o),
                found: stacked.shape(),
            });
        }
    }
    Ok(ChunkRunner {
        receiver: receiver.stacked(),
        malicious: malicious.stacked(),
        delta: delta.value(),
        dims,
        model,
    })
}

/// Streams `config.sample_count` realisations and averages the squared errors.
///
/// Sequential and bitwise reproducible for a given seed.
pub fn monte_carlo_costs(
    model: &GaussianModel,
    sender: &SenderPolicy,
    receiver: &EstimatorPolicy,
    malicious: &EstimatorPolicy,
    delta: PrivacyRatio,
    config: &SimulationConfig,
) -> Result<MonteCarloReport> {
    let runner = chunk_runner(model, receiver, malicious, delta)?;
    let mut sampler = sample_game(model, sender, config)?;
    let mut total = GameAccumulator::default();
    let mut left = config.sample_count;
    while left > 0 {
        let n = left.min(config.chunk_size);
        total.merge(&runner.run(&mut sampler, n));
        left -= n;
    }
    runner.report(&total, config.sample_count)
}

/// Parallel variant of [`monte_carlo_costs`].
///
/// Chunk `i` draws from ChaCha stream `i` of the seed, so results are
/// reproducible across runs of this function but agree with the sequential
/// version only statistically, not bitwise.
pub fn monte_carlo_costs_parallel(
    model: &GaussianModel,
    sender: &SenderPolicy,
    receiver: &EstimatorPolicy,
    malicious: &EstimatorPolicy,
    delta: PrivacyRatio,
    config: &SimulationConfig,
) -> Result<MonteCarloReport> {
    let runner = chunk_runner(model, receiver, malicious, delta)?;
    let template = GameSampler::new(model, sender, ChaCha8Rng::seed_from_u64(config.seed), 0)?;
    let chunks = config.sample_count.div_ceil(config.chunk_size);
    let partials: Vec<GameAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut sampler = template.clone();
            sampler.rng.set_stream(i as u64);
            let n = config.chunk_size.min(config.sample_count - i * config.chunk_size);
            runner.run(&mut sampler, n)
        })
        .collect();
    let mut total = GameAccumulator::default();
    for p in &partials {
        total.merge(p);
    }
    runner.report(&total, config.sample_count)
}

// ---------------------------------------------------------------------------
// Deviation tests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Sender,
    Receiver,
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub tested_player: Player,
    pub trials: usize,
    /// Smallest `cost(deviation) − cost(equilibrium)` found; negative values
    /// are profitable deviations.
    pub best_cost_change: f64,
    /// Cost at the tested policy.
    pub reference_cost: f64,
    /// Largest orthogonality residual, for estimator checks.
    pub residual: Option<f64>,
    pub passed: bool,
}

impl DeviationReport {
    fn new(
        tested_player: Player,
        trials: usize,
        best_cost_change: f64,
        reference_cost: f64,
        residual: Option<f64>,
        residual_tolerance: f64,
    ) -> Self {
        let scale = reference_cost.abs().max(1.0);
        let passed = best_cost_change >= -DEVIATION_TOLERANCE * scale
            && residual.is_none_or(|r| r <= residual_tolerance);
        Self {
            tested_player,
            trials,
            best_cost_change,
            reference_cost,
            residual,
            passed,
        }
    }
}

/// Sender cost of `policy` when the estimators follow `solution.rule`.
fn sender_cost_under_rule(
    model: &GaussianModel,
    solution: &EquilibriumSolution,
    policy: &SenderPolicy,
) -> Result<f64> {
    let moments = message_moments(model, policy)?;
    let delta = solution.delta;
    match solution.rule {
        ResponseRule::BestResponse => Ok(costs_from_moments(model, &moments, delta)?.sender_cost),
        ResponseRule::Fixed => {
            let r = linear_estimator_mse(model, &moments, Target::State, &solution.receiver);
            let m = linear_estimator_mse(model, &moments, Target::Private, &solution.malicious);
            Ok(r - delta.value() * m)
        }
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Scales `gain` so that the largest eigenvalue of `gain Ξ gainᵀ` equals `level`.
fn scale_to_level(gain: &DMatrix<f64>, xi: &DMatrix<f64>, level: f64) -> DMatrix<f64> {
    let top = linalg::max_eigenvalue(&(gain * xi * gain.transpose()));
    if top > 0.0 {
        gain * (level / top).sqrt()
    } else {
        gain.clone()
    }
}

fn normalized_noise(gain: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    let n_y = gain.nrows();
    linalg::symmetrize(&(DMatrix::identity(n_y, n_y) - gain * xi * gain.transpose()))
}

/// Searches affine sender deviations `y = K' (x, w) + v` for one that lowers
/// the sender's cost, given how the estimators respond (`solution.rule`).
///
/// Trials cycle through local perturbations of the equilibrium gain pushed to
/// the constraint boundary, random gains strictly inside the constraint, and
/// unnormalised gains with random positive definite noise.
pub fn check_sender_deviation(
    model: &GaussianModel,
    solution: &EquilibriumSolution,
    trials: usize,
    seed: u64,
) -> Result<DeviationReport> {
    let dims = model.dims();
    let xi = conditional_covariance(model)?.xi;
    let reference = sender_cost_under_rule(model, solution, &solution.sender)?;
    let base_gain = solution.sender.gain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut evaluated = 0;
    for t in 0..trials {
        let direction = normal_matrix(&mut rng, dims.n_y, dims.n_xw());
        let candidate = match t % 3 {
            0 => {
                let eps = 10f64.powf(rng.random_range(-6.0..0.0));
                let gain = scale_to_level(&(&base_gain + direction * eps), &xi, 1.0);
                let noise = normalized_noise(&gain, &xi);
                SenderPolicy::from_gain(dims, &gain, noise)
            }
            1 => {
                let level: f64 = rng.random_range(0.0..1.0);
                let gain = scale_to_level(&direction, &xi, level);
                let noise = normalized_noise(&gain, &xi);
                SenderPolicy::from_gain(dims, &gain, noise)
            }
            _ => {
                let scale = 10f64.powf(rng.random_range(-1.0..1.0));
                let b = normal_matrix(&mut rng, dims.n_y, dims.n_y);
                let noise = linalg::symmetrize(&(&b * b.transpose()))
                    + DMatrix::identity(dims.n_y, dims.n_y) * 1e-3;
                SenderPolicy::from_gain(dims, &(direction * scale), noise)
            }
        };
        let Ok(candidate) = candidate else { continue };
        match sender_cost_under_rule(model, solution, &candidate) {
            Ok(cost) => {
                best = best.min(cost - reference);
                evaluated += 1;
            }
            Err(Error::DegenerateMessage(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(DeviationReport::new(
        Player::Sender,
        evaluated,
        best,
        reference,
        None,
        0.0,
    ))
}

/// Both halves of an estimator check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorReport {
    pub receiver: DeviationReport,
    pub malicious: DeviationReport,
}

impl EstimatorReport {
    pub fn passed(&self) -> bool {
        self.receiver.passed && self.malicious.passed
    }
}

/// Largest entry of `E[(t − G o) oᵀ] = C − G S`.
fn orthogonality_residual(cross: &DMatrix<f64>, gain: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    (cross - gain * s).amax()
}

/// Checks the orthogonality principle and tries random gain perturbations.
pub fn check_estimator_optimality(
    model: &GaussianModel,
    moments: &MessageMoments,
    receiver: &EstimatorPolicy,
    malicious: &EstimatorPolicy,
    trials: usize,
    seed: u64,
) -> Result<EstimatorReport> {
    let s = moments.observation_covariance(model);
    let tolerance = ORTHOGONALITY_TOLERANCE * linalg::max_abs_diag(&s).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = |player: Player, target: Target, estimator: &EstimatorPolicy| {
        let cross = match target {
            Target::State => moments.receiver_cross(model),
            Target::Private => moments.malicious_cross(model),
        };
        let gain = estimator.stacked();
        let residual = orthogonality_residual(&cross, &gain, &s);
        let reference = linear_estimator_mse(model, moments, target, estimator);
        let mut best = f64::INFINITY;
        for _ in 0..trials {
            let eps = 10f64.powf(rng.random_range(-4.0..0.0));
            let delta = normal_matrix(&mut rng, gain.nrows(), gain.ncols()) * eps;
            let perturbed = EstimatorPolicy {
                gain_y: (&estimator.gain_y + delta.columns(0, estimator.gain_y.ncols())),
                gain_z: (&estimator.gain_z
                    + delta.columns(estimator.gain_y.ncols(), estimator.gain_z.ncols())),
            };
            best = best.min(linear_estimator_mse(model, moments, target, &perturbed) - reference);
        }
        DeviationReport::new(player, trials, best, reference, Some(residual), tolerance)
    };
    let receiver = check(Player::Receiver, Target::State, receiver);
    let malicious = check(Player::Malicious, Target::Private, malicious);
    Ok(EstimatorReport {
        receiver,
        malicious,
    })
}

/// Weight ϑ > 0 of the eavesdropper's error in a coalition objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoalitionWeight(f64);

impl CoalitionWeight {
    pub fn new(vartheta: f64) -> Result<Self> {
        if !(vartheta.is_finite() && vartheta > 0.0) {
            return Err(Error::Contract(format!(
                "coalition weight must be positive, got {vartheta}"
            )));
        }
        Ok(Self(vartheta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Minimises `E‖x − x̂‖² + ϑ E‖w − ŵ‖²` jointly over both linear estimators
/// and checks that the minimiser is the pair of individual LMMSE gains.
///
/// The joint objective is treated as a black-box quadratic in the stacked
/// gain entries; its Hessian and gradient are recovered by exact
/// second-difference probing and the normal equations solved in full.
pub fn check_coalition_separation(
    model: &GaussianModel,
    solution: &EquilibriumSolution,
    weight: CoalitionWeight,
) -> Result<bool> {
    let moments = &solution.moments;
    let dims = model.dims();
    let n_o = dims.n_y + dims.n_z;
    let n_r = dims.n_x * n_o;
    let n = n_r + dims.n_w * n_o;

    let unpack = |theta: &DVector<f64>| {
        let r = DMatrix::from_column_slice(dims.n_x, n_o, &theta.as_slice()[..n_r]);
        let m = DMatrix::from_column_slice(dims.n_w, n_o, &theta.as_slice()[n_r..]);
        let split = |g: DMatrix<f64>| EstimatorPolicy {
            gain_y: g.columns(0, dims.n_y).into_owned(),
            gain_z: g.columns(dims.n_y, dims.n_z).into_owned(),
        };
        (split(r), split(m))
    };
    let objective = |theta: &DVector<f64>| {
        let (r, m) = unpack(theta);
        linear_estimator_mse(model, moments, Target::State, &r)
            + weight.value() * linear_estimator_mse(model, moments, Target::Private, &m)
    };

    let zero = DVector::zeros(n);
    let j0 = objective(&zero);
    let unit = |i: usize| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    };
    let plus: Vec<f64> = (0..n).map(|i| objective(&unit(i))).collect();
    let minus: Vec<f64> = (0..n).map(|i| objective(&(-unit(i)))).collect();
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        hessian[(i, i)] = plus[i] + minus[i] - 2.0 * j0;
        for j in i + 1..n {
            let h = objective(&(unit(i) + unit(j))) - plus[i] - plus[j] + j0;
            hessian[(i, j)] = h;
            hessian[(j, i)] = h;
        }
    }
    let gradient = DVector::from_fn(n, |i, _| 0.5 * (plus[i] - minus[i]));
    let theta = hessian
        .lu()
        .solve(&(-gradient))
        .ok_or_else(|| Error::DegenerateMessage("coalition objective is singular".into()))?;
    let (joint_r, joint_m) = unpack(&theta);
    let (lmmse_r, lmmse_m) = lmmse_gains(model, moments)?;
    let gap = (joint_r.stacked() - lmmse_r.stacked())
        .amax()
        .max((joint_m.stacked() - lmmse_m.stacked()).amax());
    Ok(gap <= SEPARATION_TOLERANCE)
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best `K = [K_x K_w]` found, feasible for `K Ξ Kᵀ ≤ I`.
    pub gain: DMatrix<f64>,
    /// `trace(K Ξ D Ξ Kᵀ)` at `gain`.
    pub cost: f64,
}

struct OracleProblem {
    weighted: DMatrix<f64>,
}

impl OracleProblem {
    fn cost(&self, p: &DMatrix<f64>) -> f64 {
        (p * &self.weighted * p.transpose()).trace()
    }

    /// Nearest point with `P Pᵀ ≤ I`: singular values clipped at one.
    fn project(&self, p: DMatrix<f64>) -> DMatrix<f64> {
        let svd = p.clone().svd(true, true);
        if svd.singular_values.iter().all(|&s| s <= 1.0) {
            return p;
        }
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let clipped = DMatrix::from_diagonal(&svd.singular_values.map(|s| s.min(1.0)));
        u * clipped * v_t
    }

    /// Projected gradient descent from `p`, keeping only descent steps.
    fn polish(&self, mut p: DMatrix<f64>, mut fp: f64) -> (DMatrix<f64>, f64) {
        let scale = linalg::max_eigenvalue(&self.weighted)
            .abs()
            .max(linalg::min_eigenvalue(&self.weighted).abs());
        if !(scale > 0.0) {
            return (p, fp);
        }
        let mut rate = 0.5 / scale;
        for _ in 0..10_000 {
            let candidate = self.project(&p - (&p * &self.weighted) * (2.0 * rate));
            let fc = self.cost(&candidate);
            if fc < fp {
                let gain = fp - fc;
                p = candidate;
                fp = fc;
                if gain < 1e-16 * fp.abs().max(1.0) {
                    break;
                }
            } else {
                rate *= 0.5;
                if rate < 1e-12 / scale {
                    break;
                }
            }
        }
        (p, fp)
    }
}

/// Derivative-free random-restart pattern search for
/// `min trace(K Ξ D Ξ Kᵀ)` subject to `K Ξ Kᵀ ≤ I`, run in the whitened
/// variable `P = K Ξ^{1/2}` where the constraint is `‖P‖₂ ≤ 1`.
pub fn oracle_solve(
    model: &GaussianModel,
    delta: PrivacyRatio,
    restarts: usize,
    seed: u64,
) -> Result<OracleResult> {
    let dims = model.dims();
    let xi = conditional_covariance(model)?.xi;
    let (xi_sqrt, xi_inv_sqrt) = linalg::spd_sqrt_pair(&xi);
    let weighted = linalg::symmetrize(&(&xi_sqrt * delta.weight_matrix(dims) * &xi_sqrt));
    let problem = OracleProblem { weighted };
    let (rows, cols) = (dims.n_y, dims.n_xw());
    let n = rows * cols;
    let initial_step = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best = (DMatrix::zeros(rows, cols), 0.0);
    for _ in 0..restarts.max(1) {
        let mut p = problem.project(normal_matrix(&mut rng, rows, cols) * initial_step);
        let mut fp = problem.cost(&p);
        let mut step = initial_step;
        let mut iterations = 0;
        while step > 1e-10 && iterations < 20_000 {
            iterations += 1;
            let mut directions: Vec<DMatrix<f64>> = (0..n)
                .map(|i| {
                    let mut d = DMatrix::zeros(rows, cols);
                    d[i] = 1.0;
                    d
                })
                .collect();
            for _ in 0..2 {
                let d = normal_matrix(&mut rng, rows, cols);
                let norm = d.norm();
                directions.push(d / norm);
            }
            let mut improved = false;
            'search: for d in &directions {
                for sign in [1.0, -1.0] {
                    let candidate = problem.project(&p + d * (sign * step));
                    let fc = problem.cost(&candidate);
                    if fc < fp {
                        p = candidate;
                        fp = fc;
                        improved = true;
                        break 'search;
                    }
                }
            }
            if improved {
                step = (step * 1.5).min(1.0);
            } else {
                step *= 0.5;
            }
        }
        let (p, fp) = problem.polish(p, fp);
        if fp < best.1 {
            best = (p, fp);
        }
    }
    Ok(OracleResult {
        gain: &best.0 * xi_inv_sqrt,
        cost: best.1,
    })
}

/// [`solve_general`] gated by [`oracle_solve`]: fails with
/// [`Error::NonEquilibrium`] if the oracle finds a feasible gain whose cost
/// is lower by more than [`ORACLE_TOLERANCE`].
pub fn solve_general_checked(
    model: &GaussianModel,
    delta: PrivacyRatio,
    restarts: usize,
    seed: u64,
) -> Result<(EquilibriumSolution, OracleResult)> {
    let solution = solve_general(model, delta)?;
    let oracle = oracle_solve(model, delta, restarts, seed)?;
    if oracle.cost < solution.diagnostics.objective - ORACLE_TOLERANCE {
        return Err(Error::NonEquilibrium {
            oracle_cost: oracle.cost,
            solver_cost: solution.diagnostics.objective,
        });
    }
    Ok((solution, oracle))
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Random well-conditioned model: joint covariance `A Aᵀ / n + 0.2 I` with
/// standard normal `A`.
pub fn random_model<R: Rng>(rng: &mut R, dims: Dimensions) -> GaussianModel {
    let n = dims.n_joint();
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let joint = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
    GaussianModel::from_joint(dims, &linalg::symmetrize(&joint)).expect("dimensions agree")
}

/// Random affine policy (including a `z` term and noise), rescaled so that
/// `V_yy − V_yz V_zz⁻¹ V_zy = I`.
pub fn random_normalized_policy<R: Rng>(rng: &mut R, model: &GaussianModel) -> Result<SenderPolicy> {
    let d = model.dims();
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = normal(d.n_y, d.n_y) * 0.5;
    let raw = SenderPolicy::new(
        normal(d.n_y, d.n_x),
        normal(d.n_y, d.n_w),
        normal(d.n_y, d.n_z),
        linalg::symmetrize(&(&b * b.transpose())),
    )?;
    normalize_policy(model, &raw)
}

/// Applies `κ = (V_yy − V_yz V_zz⁻¹ V_zy)^{-1/2}` to the message.
pub fn normalize_policy(model: &GaussianModel, policy: &SenderPolicy) -> Result<SenderPolicy> {
    let conditional = message_moments(model, policy)?.conditional_message_covariance(model)?;
    if !(linalg::min_eigenvalue(&conditional) > 0.0) {
        return Err(Error::DegenerateMessage(
            "message carries no information beyond z in some direction".into(),
        ));
    }
    let (_, inv_sqrt) = linalg::spd_sqrt_pair(&conditional);
    Ok(policy.transform(&inv_sqrt))
}
