use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;

use privgame::equilibrium::{solution_for_policy, ResponseRule};
use privgame::estimation::{feasibility_check, linear_estimator_mse, Target};
use privgame::verification::{random_model, random_normalized_policy};
use privgame::{
    costs_from_moments, message_moments, scale_equilibrium, sender_cost_quadratic, solve_general, CostOperator,
    Dimensions, GaussianModel, PrivacyRatio, SenderPolicy,
};

fn dims_strategy(max: usize) -> impl Strategy<Value = Dimensions> {
    (1..=max, 1..=max, 0..=max, 1..=max).prop_map(|(x, w, z, y)| Dimensions::new(x, w, z, y).unwrap())
}

fn model_from(seed: u64, dims: Dimensions) -> (GaussianModel, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, dims);
    (model, rng)
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn ratio(d: f64) -> PrivacyRatio {
    PrivacyRatio::new(d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_identity(seed in any::<u64>(), dims in dims_strategy(4), delta in 0.0..10.0f64) {
        let (model, mut rng) = model_from(seed, dims);
        let policy = random_normalized_policy(&mut rng, &model).unwrap();
        let moments = message_moments(&model, &policy).unwrap();
        let operator = CostOperator::new(&model, ratio(delta)).unwrap();
        let quadratic = sender_cost_quadratic(&operator, &model, &moments).unwrap();
        let direct = costs_from_moments(&model, &moments, ratio(delta)).unwrap().sender_cost;
        prop_assert!((quadratic - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn joint_covariance_is_psd(seed in any::<u64>(), dims in dims_strategy(4)) {
        let (model, mut rng) = model_from(seed, dims);
        let b = normal(&mut rng, dims.n_y, dims.n_y);
        let policy = SenderPolicy::new(
            normal(&mut rng, dims.n_y, dims.n_x),
            normal(&mut rng, dims.n_y, dims.n_w),
            normal(&mut rng, dims.n_y, dims.n_z),
            &b * b.transpose(),
        ).unwrap();
        let joint = message_moments(&model, &policy).unwrap().joint_with(&model);
        let scale = joint.diagonal().amax();
        prop_assert!(min_eig(&joint) >= -1e-10 * scale);
    }

    #[test]
    fn moments_are_linear_in_gain(seed in any::<u64>(), dims in dims_strategy(3), a in -3.0..3.0f64) {
        let (model, mut rng) = model_from(seed, dims);
        let zero = DMatrix::zeros(dims.n_y, dims.n_y);
        let p1 = SenderPolicy::new(normal(&mut rng, dims.n_y, dims.n_x), normal(&mut rng, dims.n_y, dims.n_w),
            normal(&mut rng, dims.n_y, dims.n_z), zero.clone()).unwrap();
        let p2 = SenderPolicy::new(normal(&mut rng, dims.n_y, dims.n_x), normal(&mut rng, dims.n_y, dims.n_w),
            normal(&mut rng, dims.n_y, dims.n_z), zero.clone()).unwrap();
        let sum = SenderPolicy::new(&p1.k_x * a + &p2.k_x, &p1.k_w * a + &p2.k_w, &p1.k_z * a + &p2.k_z, zero).unwrap();
        let (m1, m2, ms) = (
            message_moments(&model, &p1).unwrap(),
            message_moments(&model, &p2).unwrap(),
            message_moments(&model, &sum).unwrap(),
        );
        let expected = m1.stacked_cross() * a + m2.stacked_cross();
        prop_assert!((ms.stacked_cross() - expected).amax() <= 1e-10 * (1.0 + a.abs()) * 10.0);
    }

    #[test]
    fn solver_output_is_normalized_and_feasible(seed in any::<u64>(), dims in dims_strategy(4), delta in 0.0..20.0f64) {
        let (model, _) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        let conditional = sol.moments.conditional_message_covariance(&model).unwrap();
        prop_assert!((conditional - DMatrix::identity(dims.n_y, dims.n_y)).amax() <= 1e-9);
        let operator = CostOperator::new(&model, ratio(delta)).unwrap();
        prop_assert!(feasibility_check(&operator, &sol.moments).margin >= -1e-9);
        prop_assert!(min_eig(&sol.sender.v_vv) >= -1e-10);
    }

    #[test]
    fn inertia_and_objective(seed in any::<u64>(), dims in dims_strategy(4), delta in 0.0..20.0f64) {
        let (model, _) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        let eig = &sol.diagnostics.eigenvalues;
        prop_assert_eq!(eig.len(), dims.n_xw());
        prop_assert!(eig.windows(2).all(|w| w[0] <= w[1]));
        let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert_eq!(eig.iter().filter(|&&l| l < -1e-12 * scale).count(), dims.n_x);
        prop_assert_eq!(sol.diagnostics.active_rank, dims.n_x.min(dims.n_y));
        let expected: f64 = eig.iter().take(dims.n_y).map(|l| l.min(0.0)).sum();
        prop_assert!((sol.diagnostics.objective - expected).abs() <= 1e-9 * scale.max(1.0));
        let base = model.baseline_receiver().unwrap() - delta * model.baseline_malicious().unwrap();
        prop_assert!((sol.sender_cost - (base + sol.diagnostics.objective)).abs() <= 1e-8 * base.abs().max(1.0));
    }

    #[test]
    fn solver_beats_random_policies(seed in any::<u64>(), dims in dims_strategy(3), delta in 0.0..5.0f64) {
        let (model, mut rng) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        for _ in 0..10 {
            let policy = random_normalized_policy(&mut rng, &model).unwrap();
            let other = costs_from_moments(&model, &message_moments(&model, &policy).unwrap(), ratio(delta)).unwrap();
            prop_assert!(sol.sender_cost <= other.sender_cost + 1e-9);
        }
    }

    #[test]
    fn orthogonality_of_estimation_errors(seed in any::<u64>(), dims in dims_strategy(4), delta in 0.0..10.0f64) {
        let (model, _) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        let s = sol.moments.observation_covariance(&model);
        let r = sol.moments.receiver_cross(&model) - sol.receiver.stacked() * &s;
        let m = sol.moments.malicious_cross(&model) - sol.malicious.stacked() * &s;
        prop_assert!(r.amax() <= 1e-9 && m.amax() <= 1e-9);
    }

    #[test]
    fn errors_bounded_by_baselines(seed in any::<u64>(), dims in dims_strategy(4), delta in 0.0..10.0f64) {
        let (model, _) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        prop_assert!(sol.receiver_mse >= -1e-12);
        prop_assert!(sol.malicious_mse >= -1e-12);
        prop_assert!(sol.receiver_mse <= model.baseline_receiver().unwrap() + 1e-9);
        prop_assert!(sol.malicious_mse <= model.baseline_malicious().unwrap() + 1e-9);
    }

    #[test]
    fn zero_ratio_cost_is_receiver_error(seed in any::<u64>(), dims in dims_strategy(4)) {
        let (model, mut rng) = model_from(seed, dims);
        let policy = random_normalized_policy(&mut rng, &model).unwrap();
        let c = costs_from_moments(&model, &message_moments(&model, &policy).unwrap(), ratio(0.0)).unwrap();
        prop_assert_eq!(c.sender_cost, c.receiver_mse);
    }

    #[test]
    fn sign_flip_and_kappa_invariance(seed in any::<u64>(), dims in dims_strategy(3), delta in 0.0..10.0f64) {
        let (model, mut rng) = model_from(seed, dims);
        let sol = solve_general(&model, ratio(delta)).unwrap();
        let mut flip = DMatrix::identity(dims.n_y, dims.n_y);
        flip[(0, 0)] = -1.0;
        let kappa = normal(&mut rng, dims.n_y, dims.n_y) + DMatrix::identity(dims.n_y, dims.n_y) * 3.0;
        for k in [flip, kappa] {
            let scaled = scale_equilibrium(&model, &sol, &k).unwrap();
            prop_assert!((scaled.receiver_mse - sol.receiver_mse).abs() <= 1e-9);
            prop_assert!((scaled.malicious_mse - sol.malicious_mse).abs() <= 1e-9);
        }
    }

    #[test]
    fn best_response_minimises_estimator_error(seed in any::<u64>(), dims in dims_strategy(3), eps in -0.1..0.1f64) {
        let (model, mut rng) = model_from(seed, dims);
        let policy = random_normalized_policy(&mut rng, &model).unwrap();
        let sol = solution_for_policy(&model, ratio(1.0), policy).unwrap();
        prop_assert_eq!(sol.rule, ResponseRule::BestResponse);
        let mut perturbed = sol.receiver.clone();
        perturbed.gain_y += normal(&mut rng, dims.n_x, dims.n_y) * eps;
        let base = linear_estimator_mse(&model, &sol.moments, Target::State, &sol.receiver);
        let other = linear_estimator_mse(&model, &sol.moments, Target::State, &perturbed);
        prop_assert!((base - sol.receiver_mse).abs() <= 1e-9);
        prop_assert!(other >= base - 1e-12);
    }
}
