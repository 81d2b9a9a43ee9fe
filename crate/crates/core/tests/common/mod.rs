//! Independent reference computations shared by the oracle tests and the
//! acceptance run.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sleepsched::belief::{tensor_update, AckReport, AoiiTensor, Belief};
use sleepsched::schedulers::{psbo_decide, PsboParams};
use sleepsched::{Action, CostWeights, EnergyProfile, GoTensor, LinkEstimator, MetricKind};

/// Exact conditional AoII law P(age | X_k = x) for a receiver fixed at `xr`,
/// by enumerating every state path of length `k` from `x0`.
pub fn enumerate_paths(p: &[[f64; 2]; 2], x0: usize, xr: usize, age0: u32, k: usize, cap: u32) -> [Vec<f64>; 2] {
    let mut joint = [vec![0.0; cap as usize + 1], vec![0.0; cap as usize + 1]];
    for bits in 0..(1u32 << k) {
        let mut x = x0;
        let mut age = age0;
        let mut prob = 1.0;
        for i in 0..k {
            let next = ((bits >> i) & 1) as usize;
            prob *= p[x][next];
            x = next;
            age = if x == xr { 0 } else { (age + 1).min(cap) };
        }
        joint[x][age as usize] += prob;
    }
    for row in &mut joint {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    joint
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Worst total variation between `tensor_update` and path enumeration over
/// every 2-state chain with entries on the 0.1 grid, both start states and
/// 1 to 5 steps, with age cap 6.
pub fn tensor_update_worst_tv() -> f64 {
    let cap = 6;
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut worst = 0.0f64;
    for &a in &grid {
        for &b in &grid {
            let p = [[1.0 - a, a], [b, 1.0 - b]];
            let p_est: Vec<Vec<f64>> = p.iter().map(|r| r.to_vec()).collect();
            for x0 in 0..2 {
                for steps in 1..=5 {
                    let mut tensor = AoiiTensor::zeros(2, cap);
                    let mut age0 = [0u32; 2];
                    for xr in 0..2 {
                        age0[xr] = if x0 == xr { 0 } else { 2 };
                        for x in 0..2 {
                            tensor.set_point_mass(x, xr, age0[xr]);
                        }
                    }
                    let mut d = vec![0.0; 2];
                    d[x0] = 1.0;
                    for _ in 0..steps {
                        let d_new: Vec<f64> = (0..2).map(|j| d[0] * p[0][j] + d[1] * p[1][j]).collect();
                        tensor = tensor_update(&tensor, &d, &d_new, &p_est);
                        d = d_new;
                    }
                    for xr in 0..2 {
                        let exact = enumerate_paths(&p, x0, xr, age0[xr], steps, cap);
                        for x in 0..2 {
                            worst = worst.max(total_variation(tensor.slice(x, xr), &exact[x]));
                        }
                    }
                }
            }
        }
    }
    worst
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Largest gap between `Belief::predict_cost` and a direct triple sum over
/// `cases` random AoII instances with 3 states and age cap 4.
pub fn predict_cost_worst_error(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let (n, cap) = (3usize, 4u32);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d_x = random_simplex(rng, n);
        let d_rx = random_simplex(rng, n);
        let got = GoTensor::from_fn(n, cap, MetricKind::Aoii, |_, _, _| rng.random_range(-1.0..5.0)).unwrap();
        let mut tensor = AoiiTensor::zeros(n, cap);
        let mut slices = vec![vec![vec![0.0; cap as usize + 1]; n]; n];
        for x in 0..n {
            for xr in 0..n {
                let s = random_simplex(rng, cap as usize + 1);
                tensor.slice_mut(x, xr).copy_from_slice(&s);
                slices[x][xr] = s;
            }
        }
        let belief = Belief::synchronized(n, cap, MetricKind::Aoii, 0, 1.0)
            .unwrap()
            .with_distributions(d_x.clone(), sleepsched::AgeBelief::Aoii(tensor))
            .unwrap()
            .with_receiver_distribution(d_rx.clone())
            .unwrap();
        let mut oracle = 0.0;
        for x in 0..n {
            for xr in 0..n {
                for age in 0..=cap {
                    oracle += d_x[x] * d_rx[xr] * slices[x][xr][age as usize] * got.get(x, xr, age);
                }
            }
        }
        worst = worst.max((belief.predict_cost(&got).unwrap() - oracle).abs());
    }
    worst
}

/// Synthetic sleep-search instance: AoI belief starting at age 0 and a GoT
/// that is linear in the age, so the predicted data cost after `j` unobserved
/// steps is `c * j`.
pub struct Linear {
    pub c: f64,
    pub weights: CostWeights,
    pub profile: EnergyProfile,
    pub link: LinkEstimator,
    pub tail: f64,
    pub max_sleep: u32,
    pub max_tx: u32,
}

impl Linear {
    pub fn cap(&self) -> u32 {
        self.max_sleep + self.max_tx + 2
    }

    pub fn belief(&self) -> Belief {
        Belief::synchronized(2, self.cap(), MetricKind::Aoi, 0, 1.0).unwrap()
    }

    pub fn got(&self) -> GoTensor {
        let c = self.c;
        GoTensor::from_fn(2, self.cap(), MetricKind::Aoi, |_, _, age| c * age as f64).unwrap()
    }

    /// Expected time-averaged cost of sleeping `n` steps, written out in
    /// closed form rather than incrementally.
    pub fn average(&self, n: u32) -> f64 {
        let pr = &self.profile;
        let w = &self.weights;
        let s = self.link.clamped_success_rate();
        let listen = pr.step - pr.t_wake - pr.t_sense;
        let t_a = (s * self.link.mean_rtt() + (1.0 - s) * listen / s).min(pr.step);
        let mut cost = 0.0;
        for j in 1..=n {
            cost += w.w_qual * self.c * j as f64 + w.w_e * pr.step * pr.p_deep_sleep;
        }
        if n > 0 {
            cost += w.w_e * self.tail * pr.p_deep_sleep;
        }
        let mut time = n as f64;
        for k in 1..=self.max_tx {
            let p_k = s * (1.0 - s).powi(k as i32 - 1);
            let woke = if k == 1 && n > 0 { pr.t_wake } else { 0.0 };
            let lead = match (k, n) {
                (1, 0) => self.tail * pr.p_idle,
                (1, _) => pr.t_wake * pr.p_wake,
                _ => 0.0,
            };
            let antenna = t_a.min(pr.step - woke - pr.t_sense);
            let rest = pr.step - woke - pr.t_sense - antenna;
            let stay = 1.0 - s;
            let energy = lead
                + pr.t_sense * pr.p_sense
                + antenna * pr.p_antenna
                + rest * (stay * pr.p_idle + (1.0 - stay) * pr.p_deep_sleep);
            cost += p_k * (w.w_qual * self.c * (n + k) as f64 + w.w_e * energy);
            time += p_k;
        }
        cost / time
    }

    pub fn exhaustive(&self) -> u32 {
        (0..=self.max_sleep)
            .min_by(|a, b| self.average(*a).total_cmp(&self.average(*b)))
            .unwrap()
    }

    pub fn decide(&self) -> Action {
        let params = PsboParams {
            max_tx_steps: self.max_tx,
            listen_timeout: None,
        };
        psbo_decide(
            &self.belief(),
            &self.link,
            &self.got(),
            &self.weights,
            &self.profile,
            &params,
            self.max_sleep,
            self.tail,
        )
        .unwrap()
    }
}

pub fn linear_case(c: f64, w_e: f64, acks: u32, fails: u32, tail: f64, max_sleep: u32) -> Linear {
    let mut link = LinkEstimator::with_prior(0.064);
    for _ in 0..acks {
        link.record(true, Some(0.2));
    }
    for _ in 0..fails {
        link.record(false, None);
    }
    Linear {
        c,
        weights: CostWeights::new(w_e, 1.0).unwrap(),
        profile: EnergyProfile::default(),
        link,
        tail,
        max_sleep,
        max_tx: 10,
    }
}


/// Random walk through the belief API: sleeps of random length, then a wake
/// with a random measurement and random feedback.
pub fn random_belief_walk(rng: &mut ChaCha8Rng, metric: MetricKind) -> Belief {
    let n = rng.random_range(2..5);
    let cap = rng.random_range(2..12);
    let counts: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
    let mut b = Belief::synchronized(n, cap, metric, 0, 1.0).unwrap().with_counts(counts).unwrap();
    let mut t = 0;
    for _ in 0..rng.random_range(1..6) {
        let sleep = rng.random_range(0..8);
        b.set_sleep(sleep);
        for _ in 0..sleep {
            t += 1;
            b.update(t, None, None).unwrap();
            b.check_distributions(1e-9).unwrap();
        }
        t += 1;
        let ack = match rng.random_range(0..3) {
            0 => None,
            1 => Some(AckReport::lost()),
            _ => Some(AckReport::acked(0.2)),
        };
        b.update(t, Some(rng.random_range(0..n)), ack).unwrap();
        b.check_distributions(1e-9).unwrap();
    }
    b
}

