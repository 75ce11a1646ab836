//! Distribution-level checks on the samplers: empirical survival curves
//! inside the DKW band, agreement between the inversion and thinning
//! holding-time samplers, and reproducibility across parallelism.

use jumpq_core::profile::TimeProfile;
use jumpq_core::qmodel::{QModel, StateSpace, Transition};
use jumpq_core::simulator::{
    path_rng, sample_holding_time, sample_holding_time_thinning, simulate_paths, SimulationConfig,
};
use jumpq_core::stats;

fn single_profile_model(profile: TimeProfile) -> QModel {
    QModel::new(
        StateSpace::new(2).unwrap(),
        vec![Transition {
            from: 0,
            to: 1,
            profile,
        }],
        Vec::new(),
    )
    .unwrap()
}

/// Empirical survival of the holding time at a grid of checkpoints must sit
/// inside the DKW band around `e^{−Λ(u,·)}`.
fn dkw_survival_check(model: &QModel, u: f64, seed: u64) {
    let n = 100_000;
    let mut rng = path_rng(seed, 0);
    let mut draws: Vec<f64> = (0..n)
        .map(|_| sample_holding_time(model, 0, u, &mut rng))
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = stats::dkw_epsilon(n, 1e-3);
    for k in 1..40 {
        let t = u + 0.1 * k as f64;
        let survived = draws.partition_point(|&d| d < t);
        let empirical = 1.0 - survived as f64 / n as f64;
        let exact = (-model.cumulative_rate(0, u, t).unwrap()).exp();
        assert!(
            (empirical - exact).abs() <= eps,
            "survival at t = {t}: empirical {empirical}, exact {exact}, band {eps}"
        );
    }
}

#[test]
fn holding_time_survival_constant_rate() {
    dkw_survival_check(&single_profile_model(TimeProfile::constant(0.8).unwrap()), 0.3, 11);
}

#[test]
fn holding_time_survival_piecewise_constant() {
    let p = TimeProfile::piecewise_constant(vec![1.0, 2.0], vec![0.5, 2.0, 0.25]).unwrap();
    dkw_survival_check(&single_profile_model(p), 0.0, 12);
}

#[test]
fn holding_time_survival_piecewise_linear() {
    let p = TimeProfile::piecewise_linear(vec![0.5, 2.0, 3.0], vec![0.2, 1.8, 0.6]).unwrap();
    dkw_survival_check(&single_profile_model(p), 0.2, 13);
}

/// The two holding-time samplers draw from the same law.
#[test]
fn inversion_and_thinning_agree_in_distribution() {
    let p = TimeProfile::piecewise_linear(vec![0.4, 1.2], vec![0.3, 2.2]).unwrap();
    let model = single_profile_model(p);
    let n = 20_000;
    let cap = 100.0;
    let mut r1 = path_rng(21, 0);
    let mut r2 = path_rng(22, 0);
    let a: Vec<f64> = (0..n)
        .map(|_| sample_holding_time(&model, 0, 0.1, &mut r1).min(cap))
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|_| sample_holding_time_thinning(&model, 0, 0.1, &mut r2).min(cap))
        .collect();
    let d = stats::ks_two_sample(&a, &b);
    let threshold = stats::ks_two_sample_threshold(n, n, 1e-3);
    assert!(d <= threshold, "KS statistic {d} above {threshold}");
}

/// Identical seeds give identical paths regardless of the thread pool.
#[test]
fn path_sets_identical_across_thread_counts() {
    let model = QModel::new(
        StateSpace::new(3).unwrap(),
        vec![
            Transition {
                from: 0,
                to: 1,
                profile: TimeProfile::constant(1.2).unwrap(),
            },
            Transition {
                from: 1,
                to: 2,
                profile: TimeProfile::piecewise_constant(vec![0.7], vec![0.4, 1.6]).unwrap(),
            },
            Transition {
                from: 2,
                to: 0,
                profile: TimeProfile::constant(0.9).unwrap(),
            },
        ],
        Vec::new(),
    )
    .unwrap();
    let cfg = SimulationConfig {
        n_paths: 500,
        seed: 99,
        ..SimulationConfig::point_mass(0, 3, 0.0, 4.0)
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| simulate_paths(&model, &cfg).unwrap());
    let pooled = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| simulate_paths(&model, &cfg).unwrap());
    assert_eq!(single, pooled);
}
