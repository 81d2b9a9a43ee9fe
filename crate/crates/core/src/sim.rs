//! Step-by-step episode simulation and cost bookkeeping.

use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{AckReport, Belief, DEFAULT_PRIOR_COUNT};
use crate::error::{Error, Result};
use crate::model::{
    energy_cost, total_cost, update_aoi, update_aoii, Action, AgeValue, CostWeights, EnergyProfile, GoTensor,
    MetricKind, PhaseTimes, ProcessState, SystemState,
};
use crate::schedulers::{
    DecisionContext, LinkEstimator, Observation, StepOutcome, Strategy, StrategyConfig, StrategyId, TransmitMode,
};
use crate::stochastic::{sample_index, ChannelChain, MarkovChain, RngSeed};

pub const DEFAULT_MAX_SLEEP: u32 = 300;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub process: MarkovChain,
    pub channel: ChannelChain,
    pub got: GoTensor,
    pub profile: EnergyProfile,
    pub weights: CostWeights,
    pub strategy: StrategyConfig,
    pub t_final: u64,
    pub max_sleep: u32,
    pub prior_count: f64,
    pub seed: RngSeed,
    /// Start in this process state instead of sampling the stationary law.
    pub initial_state: Option<usize>,
    /// Keep one record per step (needed for ledger CSV export).
    pub keep_records: bool,
}

impl SimConfig {
    pub fn new(process: MarkovChain, channel: ChannelChain, got: GoTensor, strategy: StrategyId) -> Self {
        SimConfig {
            process,
            channel,
            got,
            profile: EnergyProfile::default(),
            weights: CostWeights::default(),
            strategy: StrategyConfig::new(strategy),
            t_final: 86_400,
            max_sleep: DEFAULT_MAX_SLEEP,
            prior_count: DEFAULT_PRIOR_COUNT,
            seed: RngSeed::new(0, 0),
            initial_state: None,
            keep_records: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.process.n_states();
        if self.got.n_states() != n {
            return Err(Error::invalid(format!(
                "GoT covers {} states but the process has {n}",
                self.got.n_states()
            )));
        }
        if self.initial_state.is_some_and(|x| x >= n) {
            return Err(Error::invalid("initial_state out of range"));
        }
        if self.t_final == 0 {
            return Err(Error::invalid("t_final must be at least 1"));
        }
        if !(self.prior_count > 0.0 && self.prior_count.is_finite()) {
            return Err(Error::invalid("prior_count must be positive"));
        }
        self.profile.validate()?;
        self.weights.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub energy_j: f64,
    pub quality_cost: f64,
    pub total_cost: f64,
    pub slept: bool,
    pub transmitted: bool,
    pub acked: bool,
    pub aoi_rx: u32,
    pub aoii: u32,
    #[serde(skip)]
    pub delivered: bool,
    #[serde(skip)]
    pub phases: PhaseTimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub c_e: f64,
    pub c_qual: f64,
    pub c_avg: f64,
    pub steps: u64,
    pub seed: u64,
}

/// Neumaier-compensated running sum; long episodes add many tiny terms.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running totals of an episode plus optional per-step records.
#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    records: Option<Vec<StepRecord>>,
    energy: Sum,
    quality: Sum,
    total: Sum,
    steps: u64,
    transmissions: u64,
    acks: u64,
    seed: u64,
}

impl CostLedger {
    pub fn new(keep_records: bool, seed: u64) -> Self {
        CostLedger {
            records: keep_records.then(Vec::new),
            seed,
            ..Default::default()
        }
    }

    pub fn push(&mut self, r: StepRecord) {
        self.energy.add(r.energy_j);
        self.quality.add(r.quality_cost);
        self.total.add(r.total_cost);
        self.steps += 1;
        self.transmissions += r.transmitted as u64;
        self.acks += r.acked as u64;
        if let Some(v) = &mut self.records {
            v.push(r);
        }
    }

    pub fn records(&self) -> Option<&[StepRecord]> {
        self.records.as_deref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    pub fn acks(&self) -> u64 {
        self.acks
    }

    fn mean(&self, sum: Sum) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            sum.value() / self.steps as f64
        }
    }

    /// Mean energy per step in joules.
    pub fn c_e(&self) -> f64 {
        self.mean(self.energy)
    }

    pub fn c_qual(&self) -> f64 {
        self.mean(self.quality)
    }

    pub fn c_avg(&self) -> f64 {
        self.mean(self.total)
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            c_e: self.c_e(),
            c_qual: self.c_qual(),
            c_avg: self.c_avg(),
            steps: self.steps,
            seed: self.seed,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let records = self
            .records
            .as_ref()
            .ok_or_else(|| Error::invalid("per-step records were not kept"))?;
        let mut w = csv::Writer::from_writer(writer);
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

pub struct Simulator {
    config: SimConfig,
    state: SystemState,
    strategy: Box<dyn Strategy>,
    link: LinkEstimator,
    env_rng: ChaCha8Rng,
    link_rng: ChaCha8Rng,
    strategy_rng: ChaCha8Rng,
    sleep_left: u32,
    prev_asleep: bool,
    t: u64,
    ledger: CostLedger,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut master = config.seed.rng();
        let mut env_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let link_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let mut strategy_rng = ChaCha8Rng::seed_from_u64(master.next_u64());

        let n = config.process.n_states();
        let cap = config.got.cap();
        let metric = config.got.metric();
        let x0 = match config.initial_state {
            Some(x) => x,
            None => sample_index(&config.process.stationary(), &mut env_rng),
        };
        let ci = sample_index(&config.channel.chain.stationary(), &mut env_rng);
        let belief = Belief::synchronized(n, cap, metric, x0, config.prior_count)?;
        let state = SystemState {
            channel_index: ci,
            channel: config.channel.states[ci],
            x: ProcessState(x0),
            x_tx: ProcessState(x0),
            x_rx: ProcessState(x0),
            aoi_tx: AgeValue::zero(cap),
            aoi_rx: AgeValue::zero(cap),
            aoii: AgeValue::zero(cap),
            belief,
        };
        let mut strategy = config
            .strategy
            .build(&config.weights, &config.profile, n, cap, config.max_sleep)?;
        let link = LinkEstimator::with_prior(config.profile.t_tx);
        let ledger = CostLedger::new(config.keep_records, config.seed.master_seed);

        // Synchronized start: the device has just sensed and reported x0.
        let tail = config.profile.step - config.profile.t_wake - config.profile.t_sense;
        let first = {
            let ctx = Self::context(&config, &state, &link, 0, None, tail);
            strategy.decide(&ctx, &mut strategy_rng)
        };
        let first = first.0.min(config.max_sleep);
        let mut sim = Simulator {
            config,
            state,
            strategy,
            link,
            env_rng,
            link_rng,
            strategy_rng,
            sleep_left: first,
            prev_asleep: false,
            t: 0,
            ledger,
        };
        sim.state.belief.set_sleep(first);
        Ok(sim)
    }

    fn context<'a>(
        config: &'a SimConfig,
        state: &'a SystemState,
        link: &'a LinkEstimator,
        t: u64,
        outcome: Option<StepOutcome>,
        tail: f64,
    ) -> DecisionContext<'a> {
        DecisionContext {
            t,
            t_final: config.t_final,
            belief: &state.belief,
            link,
            got: &config.got,
            weights: &config.weights,
            profile: &config.profile,
            max_sleep: config.max_sleep,
            outcome,
            observation: Observation {
                x_tx: state.x_tx.0,
                x_rx: state.x_rx.0,
                aoi_tx: state.aoi_tx.value(),
                aoi_rx: state.aoi_rx.value(),
                aoii: state.aoii.value(),
                cap: state.aoi_rx.cap(),
            },
            tail,
        }
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn link(&self) -> &LinkEstimator {
        &self.link
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.t_final
    }

    pub fn strategy_id(&self) -> StrategyId {
        self.strategy.id()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> CostLedger {
        self.ledger
    }

    /// Simulates one step and returns its record.
    pub fn step(&mut self) -> Result<StepRecord> {
        let cfg = &self.config;
        let profile = cfg.profile;
        self.t += 1;
        let t = self.t;

        let s = &mut self.state;
        s.channel_index = cfg.channel.chain.step(s.channel_index, &mut self.env_rng)?;
        s.channel = cfg.channel.states[s.channel_index];
        s.x = ProcessState(cfg.process.step(s.x.0, &mut self.env_rng)?);

        let mut transmitted = false;
        let mut delivered = false;
        let mut acked = false;
        let mut tail = 0.0;
        let mut phases;
        let slept = self.sleep_left > 0;
        if slept {
            self.sleep_left -= 1;
            if self.sleep_left == 0 {
                if let Some(Action(a)) = self.strategy.renew_sleep() {
                    let a = a.min(cfg.max_sleep);
                    self.sleep_left = a;
                    let extended = s.belief.n_sleep() + a;
                    s.belief.set_sleep(extended);
                }
            }
            phases = PhaseTimes::asleep(profile.step);
            s.aoi_tx = s.aoi_tx.incremented();
        } else {
            let woke = if self.prev_asleep { profile.t_wake } else { 0.0 };
            s.x_tx = s.x;
            s.aoi_tx = s.aoi_tx.reset();
            transmitted = match self.strategy.transmit_mode() {
                TransmitMode::EveryAwakeStep => true,
                TransmitMode::MetricGated => match cfg.got.metric() {
                    MetricKind::Aoi => true,
                    MetricKind::Aoii => s.x_tx.0 != s.belief.x_rx_known(),
                },
            };
            let listen = (profile.step - woke - profile.t_sense).max(0.0);
            let mut antenna = 0.0;
            let mut ack = None;
            if transmitted {
                delivered = self.link_rng.random::<f64>() >= s.channel.data_erasure;
                acked = delivered && self.link_rng.random::<f64>() >= s.channel.feedback_erasure;
                if delivered {
                    s.x_rx = s.x_tx;
                }
                let rtt = s.channel.round_trip();
                antenna = if acked { rtt.min(listen) } else { listen };
                ack = Some(if acked { AckReport::acked(rtt) } else { AckReport::lost() });
                self.link.record(acked, acked.then_some(rtt));
            }
            s.belief.wake_at(t, s.x_tx.0, ack)?;
            tail = (listen - antenna).max(0.0);
            phases = PhaseTimes {
                wake: woke,
                sense: profile.t_sense,
                antenna,
                ..Default::default()
            };
        }
        s.aoi_rx = update_aoi(s.aoi_rx, delivered);
        s.aoii = update_aoii(s.aoii, s.x, s.x_rx);

        if !slept {
            let outcome = StepOutcome { transmitted, acked };
            let action = {
                let ctx = Self::context(cfg, &self.state, &self.link, t, Some(outcome), tail);
                self.strategy.decide(&ctx, &mut self.strategy_rng)
            };
            let a = action.0.min(cfg.max_sleep);
            self.state.belief.set_sleep(a);
            self.sleep_left = a;
            if a == 0 {
                phases.idle = tail;
            } else {
                phases.deep_sleep = tail;
            }
        }
        self.prev_asleep = slept;

        let s = &self.state;
        let age = match cfg.got.metric() {
            MetricKind::Aoi => s.aoi_rx,
            MetricKind::Aoii => s.aoii,
        };
        let energy = energy_cost(&phases, &profile);
        let quality = cfg.got.get(s.x.0, s.x_rx.0, age.value());
        let record = StepRecord {
            step: t,
            energy_j: energy,
            quality_cost: quality,
            total_cost: total_cost(energy, quality, &cfg.weights),
            slept,
            transmitted,
            acked,
            aoi_rx: s.aoi_rx.value(),
            aoii: s.aoii.value(),
            delivered,
            phases,
        };
        self.strategy.observe_cost(record.total_cost);
        self.ledger.push(record);
        Ok(record)
    }

    pub fn run(mut self) -> Result<CostLedger> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.ledger)
    }
}

pub fn run_episode(config: SimConfig) -> Result<CostLedger> {
    Simulator::new(config)?.run()
}
