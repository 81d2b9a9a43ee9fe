//! Tabular Q-learning over bucketed ground-truth state. Costs are minimized,
//! so the greedy action is the argmin.

use std::collections::HashMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DecisionContext, Observation, Strategy, StrategyId};
use crate::error::{Error, Result};
use crate::model::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearnParams {
    pub learning_rate: f64,
    pub discount: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the horizon over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    /// Sleep durations the learner chooses from. Longer options make
    /// exploration very expensive under steep mismatch costs.
    pub actions: Vec<u32>,
    /// Lower edges of the age buckets; the cap is always its own bucket.
    pub age_edges: Vec<u32>,
}

impl Default for QLearnParams {
    fn default() -> Self {
        QLearnParams {
            learning_rate: 0.1,
            discount: 0.99,
            eps_start: 0.5,
            eps_end: 0.01,
            eps_decay_fraction: 0.5,
            actions: vec![0, 1, 2, 5, 10, 30, 60],
            age_edges: vec![0, 1, 2, 3, 5, 10, 20],
        }
    }
}

impl QLearnParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("qlearn.learning_rate must be in (0, 1]"));
        }
        if !(unit(self.discount) && self.discount < 1.0) {
            return Err(Error::invalid("qlearn.discount must be in [0, 1)"));
        }
        if !(unit(self.eps_start) && unit(self.eps_end) && unit(self.eps_decay_fraction)) {
            return Err(Error::invalid("qlearn epsilon settings must be in [0, 1]"));
        }
        if self.actions.is_empty() {
            return Err(Error::invalid("qlearn.actions must not be empty"));
        }
        if self.age_edges.first() != Some(&0) || self.age_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("qlearn.age_edges must start at 0 and increase"));
        }
        Ok(())
    }

    /// Epsilon at step `t` of a `t_final`-step episode.
    pub fn epsilon(&self, t: u64, t_final: u64) -> f64 {
        let span = self.eps_decay_fraction * t_final as f64;
        if span <= 0.0 {
            return self.eps_end;
        }
        let frac = (t as f64 / span).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBuckets {
    edges: Vec<u32>,
    cap: u32,
}

impl AgeBuckets {
    pub fn new(edges: &[u32], cap: u32) -> Self {
        AgeBuckets {
            edges: edges.iter().copied().filter(|e| *e < cap).collect(),
            cap,
        }
    }

    pub fn bucket(&self, age: u32) -> u16 {
        if age >= self.cap {
            return self.edges.len() as u16;
        }
        (self.edges.partition_point(|e| *e <= age) - 1) as u16
    }

    pub fn n_buckets(&self) -> usize {
        self.edges.len() + 1
    }
}

pub type QKey = [u16; 5];

/// Action values keyed by state; unseen entries read as zero.
#[derive(Debug, Clone, Default)]
pub struct QTable {
    n_actions: usize,
    values: HashMap<QKey, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        QTable {
            n_actions,
            values: HashMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, s: &QKey, a: usize) -> f64 {
        self.values.get(s).map_or(0.0, |v| v[a])
    }

    /// Lowest-cost action, ties to the lowest index.
    pub fn greedy(&self, s: &QKey) -> usize {
        let Some(v) = self.values.get(s) else { return 0 };
        let mut best = 0;
        for (a, q) in v.iter().enumerate() {
            if *q < v[best] {
                best = a;
            }
        }
        best
    }

    pub fn min_value(&self, s: &QKey) -> f64 {
        self.values
            .get(s)
            .map_or(0.0, |v| v.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn update(&mut self, s: &QKey, a: usize, cost: f64, next: &QKey, alpha: f64, gamma: f64) {
        let target = cost + gamma * self.min_value(next);
        let n = self.n_actions;
        let row = self.values.entry(*s).or_insert_with(|| vec![0.0; n]);
        row[a] += alpha * (target - row[a]);
    }

    pub fn choose(&self, s: &QKey, epsilon: f64, rng: &mut dyn RngCore) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.n_actions)
        } else {
            self.greedy(s)
        }
    }
}

/// One learning step: updates `(s, a_taken)` with `cost` and the successor
/// `s_next`, then picks the next action index epsilon-greedily.
#[allow(clippy::too_many_arguments)]
pub fn qlearn_decide_and_update(
    table: &mut QTable,
    s: &QKey,
    a_taken: usize,
    cost: f64,
    s_next: &QKey,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> usize {
    table.update(s, a_taken, cost, s_next, alpha, gamma);
    table.choose(s_next, epsilon, rng)
}

pub struct QLearning {
    params: QLearnParams,
    buckets: AgeBuckets,
    table: QTable,
    pending: Option<(QKey, usize)>,
    cost_sum: f64,
    cost_steps: u32,
}

impl QLearning {
    pub fn new(params: QLearnParams, n_states: usize, cap: u32) -> Result<Self> {
        params.validate()?;
        if n_states > u16::MAX as usize {
            return Err(Error::invalid("too many process states for the Q-table key"));
        }
        Ok(QLearning {
            buckets: AgeBuckets::new(&params.age_edges, cap),
            table: QTable::new(params.actions.len()),
            params,
            pending: None,
            cost_sum: 0.0,
            cost_steps: 0,
        })
    }

    pub fn key(&self, o: &Observation) -> QKey {
        [
            o.x_tx as u16,
            o.x_rx as u16,
            self.buckets.bucket(o.aoi_tx),
            self.buckets.bucket(o.aoi_rx),
            self.buckets.bucket(o.aoii),
        ]
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }
}

impl Strategy for QLearning {
    fn id(&self) -> StrategyId {
        StrategyId::Qlearn
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut dyn RngCore) -> Action {
        let s = self.key(&ctx.observation);
        if let Some((prev, a)) = self.pending.take() {
            // Semi-Markov update: the action lasted `cost_steps` steps.
            let gamma = self.params.discount.powi(self.cost_steps as i32);
            self.table
                .update(&prev, a, self.cost_sum, &s, self.params.learning_rate, gamma);
        }
        let eps = self.params.epsilon(ctx.t, ctx.t_final);
        let mut a = self.table.choose(&s, eps, rng);
        // Fall back to the longest permitted sleep if the choice exceeds it.
        while a > 0 && self.params.actions[a] > ctx.max_sleep {
            a -= 1;
        }
        self.pending = Some((s, a));
        self.cost_sum = 0.0;
        self.cost_steps = 0;
        Action(self.params.actions[a])
    }

    fn observe_cost(&mut self, cost: f64) {
        self.cost_sum += self.params.discount.powi(self.cost_steps as i32) * cost;
        self.cost_steps += 1;
    }
}
