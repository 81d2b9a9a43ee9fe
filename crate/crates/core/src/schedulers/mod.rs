//! Sleep-scheduling strategies. Every strategy is consulted at the end of an
//! awake step and answers with the number of deep-sleep steps to take next.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::{Action, CostWeights, EnergyProfile, GoTensor};

mod baselines;
mod psbo;
mod qlearn;

pub use baselines::{threshold_theta, AlwaysTransmit, NeverTransmit, RandomSleep, Threshold};
pub use psbo::{geometric_weights, psbo_decide, Psbo, PsboParams};
pub use qlearn::{qlearn_decide_and_update, AgeBuckets, QKey, QLearnParams, QLearning, QTable};

/// Stable string identifiers used in configs and result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyId {
    Psbo,
    Random,
    Always,
    Never,
    Threshold,
    Qlearn,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        StrategyId::Psbo,
        StrategyId::Random,
        StrategyId::Always,
        StrategyId::Never,
        StrategyId::Threshold,
        StrategyId::Qlearn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Psbo => "psbo",
            StrategyId::Random => "random",
            StrategyId::Always => "always",
            StrategyId::Never => "never",
            StrategyId::Threshold => "threshold",
            StrategyId::Qlearn => "qlearn",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy `{s}`")))
    }
}

/// When an awake device sends its fresh measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitMode {
    /// AoI metric: always. AoII metric: only if the measurement differs from
    /// the value the device believes the receiver holds.
    MetricGated,
    /// Every awake step, regardless of content.
    EveryAwakeStep,
}

/// Running success-rate and round-trip estimates from the device's own attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEstimator {
    attempts: f64,
    successes: f64,
    rtt_sum: f64,
    rtt_count: f64,
}

impl LinkEstimator {
    pub const MIN_SUCCESS: f64 = 0.01;
    pub const MAX_SUCCESS: f64 = 0.99;

    /// Starts from one success in two attempts and one round trip of `prior_rtt`.
    pub fn with_prior(prior_rtt: f64) -> Self {
        LinkEstimator {
            attempts: 2.0,
            successes: 1.0,
            rtt_sum: prior_rtt,
            rtt_count: 1.0,
        }
    }

    pub fn record(&mut self, acked: bool, round_trip: Option<f64>) {
        self.attempts += 1.0;
        if acked {
            self.successes += 1.0;
            if let Some(rtt) = round_trip {
                self.rtt_sum += rtt;
                self.rtt_count += 1.0;
            }
        }
    }

    pub fn attempts(&self) -> f64 {
        self.attempts
    }

    pub fn successes(&self) -> f64 {
        self.successes
    }

    pub fn success_rate(&self) -> f64 {
        self.successes / self.attempts
    }

    /// Success rate clamped away from 0 and 1 so it can be divided by.
    pub fn clamped_success_rate(&self) -> f64 {
        self.success_rate().clamp(Self::MIN_SUCCESS, Self::MAX_SUCCESS)
    }

    pub fn mean_rtt(&self) -> f64 {
        self.rtt_sum / self.rtt_count
    }
}

/// Ground-truth summary used by strategies that are allowed to see it
/// (the tabular learner's state).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub x_tx: usize,
    pub x_rx: usize,
    pub aoi_tx: u32,
    pub aoi_rx: u32,
    pub aoii: u32,
    pub cap: u32,
}

/// What happened in the awake step that just ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub transmitted: bool,
    pub acked: bool,
}

pub struct DecisionContext<'a> {
    pub t: u64,
    pub t_final: u64,
    pub belief: &'a Belief,
    pub link: &'a LinkEstimator,
    pub got: &'a GoTensor,
    pub weights: &'a CostWeights,
    pub profile: &'a EnergyProfile,
    pub max_sleep: u32,
    /// `None` for the decision taken before the first step.
    pub outcome: Option<StepOutcome>,
    pub observation: Observation,
    /// Time left in the current step after wake-up, sensing and antenna use.
    pub tail: f64,
}

pub trait Strategy: Send {
    fn id(&self) -> StrategyId;

    fn decide(&mut self, ctx: &DecisionContext<'_>, rng: &mut dyn RngCore) -> Action;

    /// Total cost of every simulated step, in order.
    fn observe_cost(&mut self, _cost: f64) {}

    fn transmit_mode(&self) -> TransmitMode {
        TransmitMode::MetricGated
    }

    /// Sleep to start without waking when a sleep period ends.
    fn renew_sleep(&self) -> Option<Action> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomParams {
    pub min_sleep: u32,
    pub max_sleep: u32,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            min_sleep: 30,
            max_sleep: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlwaysParams {
    /// Apply the metric gate instead of sending every awake step.
    pub gated: bool,
}

/// Strategy choice plus hyperparameters for every strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub id: StrategyId,
    pub psbo: PsboParams,
    pub qlearn: QLearnParams,
    pub random: RandomParams,
    pub always: AlwaysParams,
}

impl StrategyConfig {
    pub fn new(id: StrategyId) -> Self {
        StrategyConfig {
            id,
            psbo: PsboParams::default(),
            qlearn: QLearnParams::default(),
            random: RandomParams::default(),
            always: AlwaysParams::default(),
        }
    }

    pub fn build(
        &self,
        weights: &CostWeights,
        profile: &EnergyProfile,
        n_states: usize,
        cap: u32,
        max_sleep: u32,
    ) -> Result<Box<dyn Strategy>> {
        Ok(match self.id {
            StrategyId::Psbo => Box::new(Psbo::new(self.psbo.clone())),
            StrategyId::Random => {
                if self.random.min_sleep > self.random.max_sleep {
                    return Err(Error::invalid("random.min_sleep exceeds random.max_sleep"));
                }
                Box::new(RandomSleep::new(self.random.min_sleep, self.random.max_sleep))
            }
            StrategyId::Always => Box::new(AlwaysTransmit::new(self.always.gated)),
            StrategyId::Never => Box::new(NeverTransmit::new(max_sleep)),
            StrategyId::Threshold => Box::new(Threshold::new(threshold_theta(weights, profile)?)),
            StrategyId::Qlearn => Box::new(QLearning::new(self.qlearn.clone(), n_states, cap)?),
        })
    }
}
