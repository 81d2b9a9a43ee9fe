//! Invariants of the belief engine, the simulator and the baselines.

mod common;

use common::random_belief_walk;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepsched::belief::{AckReport, Belief};
use sleepsched::schedulers::{DecisionContext, Observation, QTable, RandomSleep};
use sleepsched::{
    adjacent_state_process, fit_channel_from_trace, make_got_a, run_episode, ChannelChain, ChannelState, CostWeights,
    DelayTrace, EnergyProfile, GoTensor, LinkEstimator, MetricKind, ProcessSpace, ProcessState, RngSeed, SimConfig,
    Simulator, Strategy, StrategyId,
};

const CAP: u32 = 64;

fn got_a(n: usize) -> GoTensor {
    make_got_a(&ProcessSpace::new(n).unwrap(), &[ProcessState(0)], 1.0, 0.001, CAP).unwrap()
}

fn channel(data_erasure: f64, feedback_erasure: f64) -> ChannelChain {
    ChannelChain::constant(ChannelState {
        data_delay: 0.1,
        data_erasure,
        feedback_delay: 0.1,
        feedback_erasure,
    })
    .unwrap()
}

fn config(strategy: StrategyId, t_final: u64, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(
        adjacent_state_process(8, 0.05).unwrap(),
        ChannelChain::default_leo(0.2),
        got_a(8),
        strategy,
    );
    c.t_final = t_final;
    c.seed = RngSeed::new(seed, 0);
    c.keep_records = true;
    c
}

#[test]
fn belief_distributions_stay_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..10_000 {
        let metric = if i % 2 == 0 { MetricKind::Aoii } else { MetricKind::Aoi };
        random_belief_walk(&mut rng, metric);
    }
}

#[test]
fn lazy_wake_matches_stepwise_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let counts: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(0.1..2.0)).collect()).collect();
        let base = Belief::synchronized(3, 10, MetricKind::Aoii, 1, 1.0).unwrap().with_counts(counts).unwrap();
        let sleep = rng.random_range(1..15);
        let (sensed, ack) = (rng.random_range(0..3), Some(AckReport::lost()));
        let mut lazy = base.clone();
        lazy.set_sleep(sleep);
        lazy.wake_at(sleep as u64 + 1, sensed, ack).unwrap();
        let mut eager = base;
        eager.set_sleep(sleep);
        for t in 1..=sleep as u64 {
            eager.update(t, None, None).unwrap();
        }
        eager.update(sleep as u64 + 1, Some(sensed), ack).unwrap();
        assert_eq!(lazy, eager);
    }
}

#[test]
fn phases_fill_every_step() {
    for id in StrategyId::ALL {
        let ledger = run_episode(config(id, 3000, 2)).unwrap();
        for r in ledger.records().unwrap() {
            assert!((r.phases.total() - 1.0).abs() < 1e-9, "{id:?} step {}: {:?}", r.step, r.phases);
            assert!(r.phases.wake >= 0.0 && r.phases.idle >= 0.0 && r.phases.deep_sleep >= 0.0);
        }
    }
}

#[test]
fn simulator_tracks_ages_and_receiver_state() {
    for id in StrategyId::ALL {
        let mut cfg = config(id, 5000, 9);
        cfg.channel = channel(0.3, 0.0);
        let mut sim = Simulator::new(cfg).unwrap();
        let mut prev_aoi = 0;
        while !sim.is_done() {
            let r = sim.step().unwrap();
            let s = sim.state();
            assert_eq!(s.aoii.value() == 0, s.x == s.x_rx, "{id:?} step {}", r.step);
            let expected = if r.delivered { 0 } else { (prev_aoi + 1).min(CAP) };
            assert_eq!(r.aoi_rx, expected, "{id:?} step {}", r.step);
            prev_aoi = r.aoi_rx;
            // Lossless feedback: the device always knows what the receiver holds.
            assert_eq!(s.belief.x_rx_known(), s.x_rx.0, "{id:?} step {}", r.step);
        }
    }
}

#[test]
fn ledger_means_match_records() {
    let ledger = run_episode(config(StrategyId::Psbo, 4000, 3)).unwrap();
    let recs = ledger.records().unwrap();
    let n = recs.len() as f64;
    let w = CostWeights::default();
    let c_e = recs.iter().map(|r| r.energy_j).sum::<f64>() / n;
    let c_q = recs.iter().map(|r| r.quality_cost).sum::<f64>() / n;
    assert!((ledger.c_e() - c_e).abs() < 1e-12);
    assert!((ledger.c_qual() - c_q).abs() < 1e-12);
    assert!((ledger.c_avg() - (w.w_e * c_e + w.w_qual * c_q)).abs() < 1e-12);
    let mean_total = recs.iter().map(|r| r.total_cost).sum::<f64>() / n;
    assert!((ledger.c_avg() - mean_total).abs() < 1e-12);
}

#[test]
fn episodes_are_deterministic_per_seed() {
    for id in StrategyId::ALL {
        let a = run_episode(config(id, 2000, 17)).unwrap();
        let b = run_episode(config(id, 2000, 17)).unwrap();
        assert_eq!(a.records(), b.records(), "{id:?}");
    }
    let a = run_episode(config(StrategyId::Random, 2000, 17)).unwrap();
    let b = run_episode(config(StrategyId::Random, 2000, 18)).unwrap();
    assert_ne!(a.records(), b.records());
}

#[test]
fn ack_rate_tracks_erasure() {
    let mut cfg = config(StrategyId::Always, 100_000, 4);
    cfg.channel = channel(0.5, 0.0);
    let ledger = run_episode(cfg).unwrap();
    assert_eq!(ledger.transmissions(), 100_000);
    let rate = ledger.acks() as f64 / ledger.transmissions() as f64;
    assert!((rate - 0.5).abs() <= 0.01, "ack rate {rate}");
}

#[test]
fn gated_always_is_silent_on_a_static_process() {
    let mut cfg = config(StrategyId::Always, 1000, 4);
    cfg.process = sleepsched::MarkovChain::identity(8);
    cfg.channel = channel(0.0, 0.0);
    cfg.strategy.always.gated = true;
    let ledger = run_episode(cfg).unwrap();
    assert_eq!(ledger.transmissions(), 0);
    assert_eq!(ledger.c_qual(), 0.0);
}

#[test]
fn single_sleeping_step_costs_deep_sleep_power() {
    let p = EnergyProfile::default();
    let w = CostWeights::default();
    for id in [StrategyId::Never, StrategyId::Random] {
        let mut cfg = config(id, 1, 8);
        cfg.process = sleepsched::MarkovChain::identity(8);
        let ledger = run_episode(cfg).unwrap();
        assert!((ledger.c_avg() - w.w_e * p.step * p.p_deep_sleep).abs() < 1e-15, "{id:?}");
    }
}

fn context<'a>(belief: &'a Belief, link: &'a LinkEstimator, got: &'a GoTensor, w: &'a CostWeights, p: &'a EnergyProfile) -> DecisionContext<'a> {
    DecisionContext {
        t: 0,
        t_final: 1,
        belief,
        link,
        got,
        weights: w,
        profile: p,
        max_sleep: 300,
        outcome: None,
        observation: Observation {
            x_tx: 0,
            x_rx: 0,
            aoi_tx: 0,
            aoi_rx: 0,
            aoii: 0,
            cap: CAP,
        },
        tail: 0.0,
    }
}

#[test]
fn random_sleep_is_uniform_on_its_range() {
    let belief = Belief::synchronized(2, CAP, MetricKind::Aoii, 0, 1.0).unwrap();
    let (link, got) = (LinkEstimator::with_prior(0.064), got_a(2));
    let (w, p) = (CostWeights::default(), EnergyProfile::default());
    let ctx = context(&belief, &link, &got, &w, &p);
    let mut strategy = RandomSleep::new(30, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws: Vec<u32> = (0..100_000).map(|_| strategy.decide(&ctx, &mut rng).0).collect();
    assert!(draws.iter().all(|d| (30..=300).contains(d)));
    let mean = draws.iter().map(|d| *d as f64).sum::<f64>() / draws.len() as f64;
    assert!((mean - 165.0).abs() <= 5.0, "mean {mean}");
}

#[test]
fn full_exploration_is_uniform() {
    let table = QTable::new(7);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut counts = [0usize; 7];
    let draws = 100_000;
    for _ in 0..draws {
        counts[table.choose(&[0; 5], 1.0, &mut rng)] += 1;
    }
    let expected = draws as f64 / 7.0;
    for c in counts {
        assert!((c as f64 - expected).abs() / expected <= 0.02, "{counts:?}");
    }
}

#[test]
fn channel_fit_recovers_transitions() {
    let truth = ChannelChain::default_leo(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut i = 9;
    let mut delays = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        i = truth.chain.step(i, &mut rng).unwrap();
        delays.push(truth.states[i].round_trip() * 1000.0);
    }
    let fitted = fit_channel_from_trace(&DelayTrace::from_delays(&delays).unwrap(), 20.0, 0.0).unwrap();
    assert_eq!(fitted.n_states(), truth.n_states());
    for a in 0..truth.n_states() {
        assert!((fitted.states[a].round_trip() - truth.states[a].round_trip()).abs() < 1e-9);
        for b in 0..truth.n_states() {
            let diff = (fitted.chain.prob(a, b) - truth.chain.prob(a, b)).abs();
            assert!(diff <= 0.02, "P[{a}][{b}] off by {diff}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episode_invariants_hold_for_any_seed(seed in any::<u64>(), si in 0usize..6, erasure in 0.0f64..1.0) {
        let id = StrategyId::ALL[si];
        let mut cfg = config(id, 400, seed);
        cfg.channel = ChannelChain::default_leo(erasure);
        let ledger = run_episode(cfg).unwrap();
        prop_assert_eq!(ledger.steps(), 400);
        prop_assert!(ledger.acks() <= ledger.transmissions());
        for r in ledger.records().unwrap() {
            prop_assert!((r.phases.total() - 1.0).abs() < 1e-9);
            prop_assert!(r.energy_j > 0.0);
            prop_assert!(r.quality_cost >= 0.0);
            prop_assert!(!(r.slept && r.transmitted));
            prop_assert!(!r.acked || r.delivered);
        }
    }

    #[test]
    fn belief_walks_conserve_mass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_belief_walk(&mut rng, MetricKind::Aoii);
        prop_assert!(b.check_distributions(1e-9).is_ok());
    }
}
