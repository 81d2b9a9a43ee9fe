//! Sleep-duration search over the device's own belief.
//!
//! For a candidate sleep length `n` the expected per-step cost is the cost of
//! `n` unobserved deep-sleep steps followed by a geometric number of transmit
//! steps until the first ACK. Candidates are scanned upward from 0 and the
//! search stops at the first increase.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{DecisionContext, LinkEstimator, Strategy, StrategyId};
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::{Action, CostWeights, EnergyProfile, GoTensor, MetricKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsboParams {
    /// Transmit steps considered after waking.
    pub max_tx_steps: u32,
    /// Antenna-on time when no ACK arrives; defaults to the step remainder
    /// after wake-up and sensing.
    pub listen_timeout: Option<f64>,
}

impl Default for PsboParams {
    fn default() -> Self {
        PsboParams {
            max_tx_steps: 10,
            listen_timeout: None,
        }
    }
}

/// `p_k = s (1 - s)^(k-1)` for `k = 1..=k_max`.
pub fn geometric_weights(success: f64, k_max: u32) -> Vec<f64> {
    let q = 1.0 - success;
    let mut w = Vec::with_capacity(k_max as usize);
    let mut p = success;
    for _ in 0..k_max {
        w.push(p);
        p *= q;
    }
    w
}

/// Per-step quantities of the propagated belief, computed once per decision.
struct Forecast {
    belief: Belief,
    p_est: Vec<Vec<f64>>,
    predicted: Vec<f64>,
    p_tx: Vec<f64>,
}

impl Forecast {
    fn new(belief: &Belief, got: &GoTensor) -> Self {
        let belief = belief.clone();
        let p_est = belief.normalized_proc_est();
        let mut f = Forecast {
            predicted: Vec::new(),
            p_tx: Vec::new(),
            belief,
            p_est,
        };
        f.record(got);
        f
    }

    fn record(&mut self, got: &GoTensor) {
        self.predicted.push(self.belief.predict_cost_unchecked(got));
        self.p_tx.push(match self.belief.metric() {
            MetricKind::Aoi => 1.0,
            MetricKind::Aoii => self.belief.mismatch_probability(),
        });
    }

    /// Makes entries `0..=j` available.
    fn extend_to(&mut self, j: usize, got: &GoTensor) {
        while self.predicted.len() <= j {
            self.belief.propagate(&self.p_est);
            self.record(got);
        }
    }
}

struct EnergyModel {
    success: f64,
    antenna: f64,
    wake: f64,
    sense: f64,
    p_antenna: f64,
    p_idle: f64,
    p_deep: f64,
    step: f64,
    t_wake: f64,
    t_sense: f64,
}

impl EnergyModel {
    fn new(link: &LinkEstimator, profile: &EnergyProfile, listen: f64) -> Self {
        let s = link.clamped_success_rate();
        let antenna = (s * link.mean_rtt() + (1.0 - s) * listen / s).min(profile.step);
        EnergyModel {
            success: s,
            antenna,
            wake: profile.t_wake * profile.p_wake,
            sense: profile.t_sense * profile.p_sense,
            p_antenna: profile.p_antenna,
            p_idle: profile.p_idle,
            p_deep: profile.p_deep_sleep,
            step: profile.step,
            t_wake: profile.t_wake,
            t_sense: profile.t_sense,
        }
    }

    /// Expected energy of the `k`-th awake step after `n` sleep steps.
    /// `tail` is what is left of the current step; it is spent idle when the
    /// device stays awake (`n == 0`).
    fn tx_step(&self, n: usize, k: usize, p_tx: f64, tail: f64) -> f64 {
        let (lead, woke) = match (k, n) {
            (1, 0) => (tail * self.p_idle, 0.0),
            (1, _) => (self.wake, self.t_wake),
            _ => (0.0, 0.0),
        };
        let busy_before = woke + self.t_sense;
        let antenna = self.antenna.min((self.step - busy_before).max(0.0));
        let rest = (self.step - busy_before - p_tx * antenna).max(0.0);
        let stay = p_tx * (1.0 - self.success);
        lead + self.sense + p_tx * antenna * self.p_antenna + rest * (stay * self.p_idle + (1.0 - stay) * self.p_deep)
    }
}

/// Scans sleep lengths `0..=max_sleep` and returns the last one before the
/// expected per-step cost first increases.
#[allow(clippy::too_many_arguments)]
pub fn psbo_decide(
    belief: &Belief,
    link: &LinkEstimator,
    got: &GoTensor,
    weights: &CostWeights,
    profile: &EnergyProfile,
    params: &PsboParams,
    max_sleep: u32,
    tail: f64,
) -> Result<Action> {
    if got.n_states() != belief.n_states() || got.cap() != belief.cap() {
        return Err(Error::invalid("GoT dimensions do not match the belief"));
    }
    if params.max_tx_steps == 0 {
        return Err(Error::invalid("max_tx_steps must be at least 1"));
    }
    let listen = params.listen_timeout.unwrap_or_else(|| profile.listen_timeout());
    let energy = EnergyModel::new(link, profile, listen);
    let weights_k = geometric_weights(energy.success, params.max_tx_steps);
    let sleep_step = weights.w_e * profile.step * profile.p_deep_sleep;
    let tail_sleep = weights.w_e * tail * profile.p_deep_sleep;

    let mut forecast = Forecast::new(belief, got);
    let k_max = params.max_tx_steps as usize;
    let mut best = 0usize;
    let mut accumulated = 0.0;
    let mut previous = f64::INFINITY;
    while best < max_sleep as usize {
        forecast.extend_to(best + k_max, got);
        let mut total = best as f64;
        let mut avg = if best == 0 { 0.0 } else { accumulated / total };
        for (k, p) in weights_k.iter().enumerate() {
            let j = best + k + 1;
            let cost = weights.w_qual * forecast.predicted[j]
                + weights.w_e * energy.tx_step(best, k + 1, forecast.p_tx[j], tail);
            avg = (total * avg + p * cost) / (total + p);
            total += p;
        }
        if avg > previous {
            return Ok(Action((best - 1) as u32));
        }
        previous = avg;
        best += 1;
        accumulated += weights.w_qual * forecast.predicted[best] + sleep_step;
        if best == 1 {
            accumulated += tail_sleep;
        }
    }
    Ok(Action(max_sleep))
}

pub struct Psbo {
    params: PsboParams,
}

impl Psbo {
    pub fn new(params: PsboParams) -> Self {
        Psbo { params }
    }
}

impl Strategy for Psbo {
    fn id(&self) -> StrategyId {
        StrategyId::Psbo
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Action {
        psbo_decide(
            ctx.belief,
            ctx.link,
            ctx.got,
            ctx.weights,
            ctx.profile,
            &self.params,
            ctx.max_sleep,
            ctx.tail,
        )
        .unwrap_or(Action::STAY_AWAKE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::DEFAULT_PRIOR_COUNT;

    fn static_belief(metric: MetricKind) -> Belief {
        // Identity-like counts: the process is believed never to change.
        Belief::synchronized(2, 64, metric, 0, DEFAULT_PRIOR_COUNT)
            .unwrap()
            .with_counts(vec![vec![1e9, 0.0], vec![0.0, 1e9]])
            .unwrap()
    }

    #[test]
    fn geometric_weights_sum_below_one() {
        let w = geometric_weights(0.5, 4);
        assert_eq!(w, vec![0.5, 0.25, 0.125, 0.0625]);
        assert!(geometric_weights(0.9, 30).iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn static_process_sleeps_maximum() {
        let belief = static_belief(MetricKind::Aoii);
        let got = GoTensor::zeros(2, 64, MetricKind::Aoii);
        let link = LinkEstimator::with_prior(0.064);
        let profile = EnergyProfile::default();
        let a = psbo_decide(
            &belief,
            &link,
            &got,
            &CostWeights::default(),
            &profile,
            &PsboParams::default(),
            300,
            profile.listen_timeout(),
        )
        .unwrap();
        assert_eq!(a, Action(300));
    }

    #[test]
    fn max_sleep_zero_stays_awake() {
        let belief = static_belief(MetricKind::Aoi);
        let got = GoTensor::zeros(2, 64, MetricKind::Aoi);
        let a = psbo_decide(
            &belief,
            &LinkEstimator::with_prior(0.064),
            &got,
            &CostWeights::default(),
            &EnergyProfile::default(),
            &PsboParams::default(),
            0,
            0.9,
        )
        .unwrap();
        assert_eq!(a, Action(0));
    }

    #[test]
    fn rejects_mismatched_got() {
        let belief = static_belief(MetricKind::Aoi);
        let got = GoTensor::zeros(3, 64, MetricKind::Aoi);
        let r = psbo_decide(
            &belief,
            &LinkEstimator::with_prior(0.064),
            &got,
            &CostWeights::default(),
            &EnergyProfile::default(),
            &PsboParams::default(),
            10,
            0.9,
        );
        assert!(r.is_err());
    }
}
