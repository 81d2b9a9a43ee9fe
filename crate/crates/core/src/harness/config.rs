//! TOML experiment configuration.
//!
//! ```toml
//! seed = 1
//! t_final = 86400
//! strategy = "psbo"
//!
//! [process]
//! kind = "adjacent"
//! n_states = 8
//! p_change = 0.01
//!
//! [channel]
//! kind = "leo"
//! data_erasure = 0.01
//!
//! [got]
//! kind = "a"
//! critical = [0]
//!
//! [sweep]
//! parameter = "data_erasure"
//! values = [0.01, 0.75]
//! strategies = ["psbo", "always"]
//! repetitions = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostWeights, EnergyProfile, GoTensor, ProcessSpace, ProcessState, DEFAULT_AGE_CAP};
use crate::schedulers::{AlwaysParams, PsboParams, QLearnParams, RandomParams, StrategyConfig, StrategyId};
use crate::sim::{SimConfig, DEFAULT_MAX_SLEEP};
use crate::stochastic::{
    adjacent_state_process, fit_channel_from_trace, make_got_a, make_got_b, ChannelChain, DelayTrace, MarkovChain,
    RngSeed,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProcessSpec {
    /// Birth-death chain that moves to a neighbouring state with total rate `p_change`.
    Adjacent { n_states: usize, p_change: f64 },
    Matrix { transitions: Vec<Vec<f64>> },
}

impl Default for ProcessSpec {
    fn default() -> Self {
        ProcessSpec::Adjacent {
            n_states: 8,
            p_change: 0.01,
        }
    }
}

impl ProcessSpec {
    pub fn build(&self) -> Result<MarkovChain> {
        match self {
            ProcessSpec::Adjacent { n_states, p_change } => adjacent_state_process(*n_states, *p_change),
            ProcessSpec::Matrix { transitions } => MarkovChain::new(transitions.clone()),
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ProcessSpec::Adjacent { n_states, .. } => *n_states,
            ProcessSpec::Matrix { transitions } => transitions.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelSpec {
    /// Synthetic LEO round-trip profile.
    Leo { data_erasure: f64 },
    /// Chain JSON as written by `fit-channel`.
    File {
        path: PathBuf,
        #[serde(default)]
        data_erasure: Option<f64>,
    },
    /// Delay trace CSV, fitted on load.
    Trace {
        path: PathBuf,
        #[serde(default = "default_bin_ms")]
        bin_ms: f64,
        data_erasure: f64,
    },
}

fn default_bin_ms() -> f64 {
    20.0
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::Leo { data_erasure: 0.01 }
    }
}

impl ChannelSpec {
    pub fn build(&self, base_dir: &Path) -> Result<ChannelChain> {
        match self {
            ChannelSpec::Leo { data_erasure } => ChannelChain::default_leo(0.0).with_data_erasure(*data_erasure),
            ChannelSpec::File { path, data_erasure } => {
                let chain = ChannelChain::load(&base_dir.join(path))?;
                match data_erasure {
                    Some(e) => chain.with_data_erasure(*e),
                    None => Ok(chain),
                }
            }
            ChannelSpec::Trace {
                path,
                bin_ms,
                data_erasure,
            } => fit_channel_from_trace(&DelayTrace::load(&base_dir.join(path))?, *bin_ms, *data_erasure),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GotSpec {
    /// Critical/non-critical split.
    A {
        #[serde(default = "default_critical")]
        critical: Vec<usize>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// Random linear tensors; one is drawn per episode from the listed variabilities.
    B {
        #[serde(default = "default_variabilities")]
        v: Vec<f64>,
    },
    /// Tensor JSON as written by `gen-got`.
    File { path: PathBuf },
}

fn default_critical() -> Vec<usize> {
    vec![0]
}

fn default_alpha() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.001
}

fn default_variabilities() -> Vec<f64> {
    vec![0.1, 0.2, 0.3]
}

impl Default for GotSpec {
    fn default() -> Self {
        GotSpec::A {
            critical: default_critical(),
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

impl GotSpec {
    /// Candidate tensors. GoT-B tensors come from a stream reserved for them,
    /// so every episode of one config sees the same candidates.
    pub fn build(&self, n_states: usize, cap: u32, seed: u64, base_dir: &Path) -> Result<Vec<GoTensor>> {
        let space = ProcessSpace::new(n_states)?;
        match self {
            GotSpec::A { critical, alpha, beta } => {
                let critical: Vec<ProcessState> = critical.iter().map(|c| ProcessState(*c)).collect();
                Ok(vec![make_got_a(&space, &critical, *alpha, *beta, cap)?])
            }
            GotSpec::B { v } => {
                if v.is_empty() {
                    return Err(Error::Config("got.v must not be empty".into()));
                }
                let mut rng = RngSeed::new(seed, u64::MAX).rng();
                v.iter()
                    .map(|v| make_got_b(&space, *v, cap, &mut rng).map(|g| g.tensor))
                    .collect()
            }
            GotSpec::File { path } => {
                let text = std::fs::read_to_string(base_dir.join(path))?;
                let got: GoTensor = serde_json::from_str(&text)?;
                if got.n_states() != n_states || got.cap() != cap {
                    return Err(Error::Config(format!(
                        "GoT file is {}x{}x{} but the config needs {n_states}x{n_states}x{}",
                        got.n_states(),
                        got.n_states(),
                        got.cap() + 1,
                        cap + 1
                    )));
                }
                Ok(vec![got])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DataErasure,
    EnergyWeight,
    StateChangeRate,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::DataErasure => "data_erasure",
            SweepParameter::EnergyWeight => "energy_weight",
            SweepParameter::StateChangeRate => "state_change_rate",
        }
    }

    /// Grids used when `values` is omitted.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::DataErasure => {
                let mut v: Vec<f64> = (0..=9).map(|i| i as f64 / 10.0).collect();
                v.extend([0.01, 0.75, 0.95, 0.99]);
                v.sort_by(f64::total_cmp);
                v
            }
            SweepParameter::EnergyWeight => (-3..=5).map(|e| 2f64.powi(e)).collect(),
            SweepParameter::StateChangeRate => (-9..=-2).map(|e| 2f64.powi(e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<StrategyId>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn all_strategies() -> Vec<StrategyId> {
    StrategyId::ALL.to_vec()
}

fn default_repetitions() -> usize {
    10
}

fn default_seed() -> u64 {
    1
}

fn default_t_final() -> u64 {
    86_400
}

fn default_max_sleep() -> u32 {
    DEFAULT_MAX_SLEEP
}

fn default_cap() -> u32 {
    DEFAULT_AGE_CAP
}

fn default_prior() -> f64 {
    crate::belief::DEFAULT_PRIOR_COUNT
}

fn default_strategy() -> StrategyId {
    StrategyId::Psbo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_t_final")]
    pub t_final: u64,
    #[serde(default = "default_max_sleep")]
    pub max_sleep: u32,
    #[serde(default = "default_cap")]
    pub age_cap: u32,
    #[serde(default = "default_prior")]
    pub prior_count: f64,
    /// Strategy for `run`.
    #[serde(default = "default_strategy")]
    pub strategy: StrategyId,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub energy: EnergyProfile,
    #[serde(default)]
    pub process: ProcessSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub got: GotSpec,
    #[serde(default)]
    pub psbo: PsboParams,
    #[serde(default)]
    pub qlearn: QLearnParams,
    #[serde(default)]
    pub random: RandomParams,
    #[serde(default)]
    pub always: AlwaysParams,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_toml_str("").expect("empty config uses defaults")
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the path of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(value)).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |e: Error| Error::Config(e.to_string());
        if self.t_final == 0 {
            return Err(Error::Config("t_final: must be at least 1".into()));
        }
        if self.age_cap == 0 {
            return Err(Error::Config("age_cap: must be at least 1".into()));
        }
        self.weights.validate().map_err(config_err)?;
        self.energy.validate().map_err(config_err)?;
        self.qlearn.validate().map_err(config_err)?;
        if let Some(s) = &self.sweep {
            if s.repetitions == 0 {
                return Err(Error::Config("sweep.repetitions: must be at least 1".into()));
            }
            if s.strategies.is_empty() {
                return Err(Error::Config("sweep.strategies: must not be empty".into()));
            }
            if s.values.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::Config("sweep.values: must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Copy of this config with one sweep parameter overridden.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match parameter {
            SweepParameter::DataErasure => match &mut cfg.channel {
                ChannelSpec::Leo { data_erasure } | ChannelSpec::Trace { data_erasure, .. } => *data_erasure = value,
                ChannelSpec::File { data_erasure, .. } => *data_erasure = Some(value),
            },
            SweepParameter::EnergyWeight => cfg.weights.w_e = value,
            SweepParameter::StateChangeRate => match &mut cfg.process {
                ProcessSpec::Adjacent { p_change, .. } => *p_change = value,
                ProcessSpec::Matrix { .. } => {
                    return Err(Error::Config(
                        "sweep.parameter: state_change_rate needs process.kind = \"adjacent\"".into(),
                    ))
                }
            },
        }
        Ok(cfg)
    }

    /// Resolves everything that can be shared across episodes.
    pub fn prepare(&self) -> Result<PreparedExperiment> {
        let as_config = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        let process = self.process.build().map_err(as_config)?;
        let channel = self.channel.build(&self.base_dir).map_err(as_config)?;
        let gots = self
            .got
            .build(process.n_states(), self.age_cap, self.seed, &self.base_dir)
            .map_err(as_config)?;
        Ok(PreparedExperiment {
            config: self.clone(),
            process,
            channel,
            gots,
        })
    }
}

/// Config with chains and tensors materialized.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub process: MarkovChain,
    pub channel: ChannelChain,
    pub gots: Vec<GoTensor>,
}

impl PreparedExperiment {
    pub fn sim_config(&self, strategy: StrategyId, seed: RngSeed, keep_records: bool) -> SimConfig {
        let c = &self.config;
        // With several GoT candidates each episode draws one from its own stream.
        let got = if self.gots.len() == 1 {
            self.gots[0].clone()
        } else {
            use rand::Rng;
            let mut rng = RngSeed::new(seed.master_seed ^ 0x9E37_79B9_7F4A_7C15, seed.stream_id).rng();
            self.gots[rng.random_range(0..self.gots.len())].clone()
        };
        let mut strategy_cfg = StrategyConfig::new(strategy);
        strategy_cfg.psbo = c.psbo.clone();
        strategy_cfg.qlearn = c.qlearn.clone();
        strategy_cfg.random = c.random;
        strategy_cfg.always = c.always;
        SimConfig {
            process: self.process.clone(),
            channel: self.channel.clone(),
            got,
            profile: c.energy,
            weights: c.weights,
            strategy: strategy_cfg,
            t_final: c.t_final,
            max_sleep: c.max_sleep,
            prior_count: c.prior_count,
            seed,
            initial_state: None,
            keep_records,
        }
    }
}
