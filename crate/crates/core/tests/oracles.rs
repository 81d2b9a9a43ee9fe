//! Independent oracles for the belief engine and the sleep search.

mod common;

use approx::assert_abs_diff_eq;
use common::{enumerate_paths, linear_case, predict_cost_worst_error, random_simplex, total_variation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepsched::belief::{AgeBelief, AoiiTensor, Belief};
use sleepsched::{Action, GoTensor, MetricKind};

#[test]
fn tensor_update_matches_path_enumeration() {
    let start = std::time::Instant::now();
    let worst = common::tensor_update_worst_tv();
    assert!(worst <= 1e-9, "worst total variation {worst}");
    assert!(start.elapsed().as_secs_f64() < 1.0, "took {:?}", start.elapsed());
}

#[test]
fn belief_propagation_matches_path_enumeration() {
    // Same check through the belief API with an unsynchronized receiver.
    let p = [[0.7, 0.3], [0.4, 0.6]];
    let cap = 6;
    let mut tensor = AoiiTensor::zeros(2, cap);
    tensor.set_point_mass(0, 1, 3);
    tensor.set_point_mass(1, 1, 0);
    let mut belief = Belief::synchronized(2, cap, MetricKind::Aoii, 0, 1.0)
        .unwrap()
        .with_counts(vec![vec![0.7, 0.3], vec![0.4, 0.6]])
        .unwrap()
        .with_distributions(vec![1.0, 0.0], AgeBelief::Aoii(tensor))
        .unwrap()
        .with_receiver_distribution(vec![0.0, 1.0])
        .unwrap();
    belief.set_sleep(4);
    for t in 1..=4 {
        belief.update(t, None, None).unwrap();
    }
    let exact = enumerate_paths(&p, 0, 1, 3, 4, cap);
    let AgeBelief::Aoii(t) = belief.age() else { panic!("expected AoII belief") };
    assert!(total_variation(t.slice(0, 1), &exact[0]) < 1e-12);
    assert!(total_variation(t.slice(1, 1), &exact[1]) < 1e-12);
}

#[test]
fn predict_cost_matches_triple_sum() {
    let start = std::time::Instant::now();
    let worst = predict_cost_worst_error(&mut ChaCha8Rng::seed_from_u64(42), 100);
    assert!(worst <= 1e-12, "worst error {worst}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn predict_cost_aoi_matches_triple_sum() {
    let (n, cap) = (3usize, 4u32);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let d_x = random_simplex(&mut rng, n);
        let d_rx = random_simplex(&mut rng, n);
        let d_age = random_simplex(&mut rng, cap as usize + 1);
        let got = GoTensor::from_fn(n, cap, MetricKind::Aoi, |_, _, _| rng.random_range(0.0..3.0)).unwrap();
        let belief = Belief::synchronized(n, cap, MetricKind::Aoi, 0, 1.0)
            .unwrap()
            .with_distributions(d_x.clone(), AgeBelief::Aoi(d_age.clone()))
            .unwrap()
            .with_receiver_distribution(d_rx.clone())
            .unwrap();
        let mut oracle = 0.0;
        for x in 0..n {
            for xr in 0..n {
                for (age, p) in d_age.iter().enumerate() {
                    oracle += d_x[x] * d_rx[xr] * p * got.get(x, xr, age as u32);
                }
            }
        }
        assert_abs_diff_eq!(belief.predict_cost(&got).unwrap(), oracle, epsilon = 1e-12);
    }
}

#[test]
fn psbo_matches_exhaustive_sweep_on_linear_costs() {
    for (c, w_e) in [(1e-5, 1.0), (1e-4, 1.0), (1e-3, 1.0), (1e-4, 8.0), (5e-6, 32.0), (0.05, 1.0)] {
        let case = linear_case(c, w_e, 3, 2, 0.8, 300);
        assert_eq!(case.decide().0, case.exhaustive(), "c = {c}, w_e = {w_e}");
    }
}

#[test]
fn psbo_hits_max_sleep_when_data_is_free() {
    let case = linear_case(0.0, 1.0, 0, 0, 0.85, 120);
    assert_eq!(case.exhaustive(), 120);
    assert_eq!(case.decide(), Action(120));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psbo_matches_exhaustive_sweep(
        log_c in -7.0f64..-1.0,
        log_we in -3.0f64..5.0,
        acks in 0u32..20,
        fails in 0u32..20,
        tail in 0.0f64..0.9,
        max_sleep in 1u32..150,
    ) {
        let case = linear_case(10f64.powf(log_c), 2f64.powf(log_we), acks, fails, tail, max_sleep);
        prop_assert_eq!(case.decide().0, case.exhaustive());
    }
}
