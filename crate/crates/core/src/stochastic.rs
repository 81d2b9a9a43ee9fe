//! Markov chains for the observed process and the joint channel, the
//! delay-trace fitter, GoT tensor families, and seed derivation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelState, GoTensor, MetricKind, ProcessSpace, ProcessState};

const ROW_TOLERANCE: f64 = 1e-9;

/// Finite-state Markov chain with a row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MarkovChain {
    transitions: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for MarkovChain {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        MarkovChain::new(rows)
    }
}

impl From<MarkovChain> for Vec<Vec<f64>> {
    fn from(chain: MarkovChain) -> Self {
        chain.transitions
    }
}

impl MarkovChain {
    pub fn new(transitions: Vec<Vec<f64>>) -> Result<Self> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::invalid("transition matrix is empty"));
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(MarkovChain { transitions })
    }

    pub fn identity(n: usize) -> Self {
        let transitions = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        MarkovChain { transitions }
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.transitions[i]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transitions[from][to]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    /// Draws the successor of `current`.
    pub fn step<R: RngCore + ?Sized>(&self, current: usize, rng: &mut R) -> Result<usize> {
        let row = self
            .transitions
            .get(current)
            .ok_or_else(|| Error::invalid(format!("state {current} out of range")))?;
        Ok(sample_index(row, rng))
    }

    /// Stationary distribution by power iteration on the lazy chain (P + I) / 2,
    /// which shares P's stationary law and converges for periodic chains too.
    /// Falls back to uniform when it does not settle.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.n_states();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, row) in self.transitions.iter().enumerate() {
                next[i] += 0.5 * pi[i];
                for (j, p) in row.iter().enumerate() {
                    next[j] += 0.5 * pi[i] * p;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-13 {
                return pi;
            }
        }
        vec![1.0 / n as f64; n]
    }
}

/// Samples an index from a probability vector that sums to one.
pub(crate) fn sample_index<R: RngCore + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

pub fn step_chain<R: RngCore + ?Sized>(chain: &MarkovChain, current: ProcessState, rng: &mut R) -> Result<ProcessState> {
    chain.step(current.0, rng).map(ProcessState)
}

/// Line-graph process: stay with probability `1 - p_change`, otherwise move to
/// one of the adjacent states chosen uniformly.
pub fn adjacent_state_process(n_states: usize, p_change: f64) -> Result<MarkovChain> {
    if n_states < 2 {
        return Err(Error::invalid(format!(
            "adjacent-state process needs at least 2 states, got {n_states}"
        )));
    }
    if !(0.0..=1.0).contains(&p_change) {
        return Err(Error::invalid(format!("change probability {p_change} outside [0, 1]")));
    }
    let rows = (0..n_states)
        .map(|i| {
            let mut row = vec![0.0; n_states];
            row[i] = 1.0 - p_change;
            let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n_states).then_some(i + 1)]
                .into_iter()
                .flatten()
                .collect();
            for j in &neighbours {
                row[*j] = p_change / neighbours.len() as f64;
            }
            row
        })
        .collect();
    MarkovChain::new(rows)
}

/// Joint data/feedback channel: a Markov chain whose states carry delays and erasure rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelChain {
    pub chain: MarkovChain,
    pub states: Vec<ChannelState>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelStateDoc {
    delay_ms: f64,
    erasure: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    feedback_erasure: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    states: Vec<ChannelStateDoc>,
    transitions: Vec<Vec<f64>>,
}

impl ChannelChain {
    pub fn new(chain: MarkovChain, states: Vec<ChannelState>) -> Result<Self> {
        if chain.n_states() != states.len() {
            return Err(Error::invalid(format!(
                "channel chain has {} states but {} annotations",
                chain.n_states(),
                states.len()
            )));
        }
        for s in &states {
            s.validate()?;
        }
        Ok(ChannelChain { chain, states })
    }

    /// Channel state whose data and feedback delays are each half of `round_trip_ms`.
    pub fn symmetric_state(round_trip_ms: f64, data_erasure: f64) -> ChannelState {
        let one_way = round_trip_ms / 2000.0;
        ChannelState {
            data_delay: one_way,
            data_erasure,
            feedback_delay: one_way,
            feedback_erasure: 0.0,
        }
    }

    /// Synthetic LEO round-trip profile: 20 ms bins covering 80-440 ms round
    /// trips (40-220 ms per direction) with a sticky birth-death walk.
    pub fn default_leo(data_erasure: f64) -> Self {
        let centers: Vec<f64> = (0..18).map(|i| 90.0 + 20.0 * i as f64).collect();
        let n = centers.len();
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                let up = if i + 1 < n { 0.05 } else { 0.0 };
                let down = if i > 0 { 0.05 } else { 0.0 };
                if i + 1 < n {
                    row[i + 1] = up;
                }
                if i > 0 {
                    row[i - 1] = down;
                }
                row[i] = 1.0 - up - down;
                row
            })
            .collect();
        let states = centers
            .iter()
            .map(|c| Self::symmetric_state(*c, data_erasure))
            .collect();
        ChannelChain {
            chain: MarkovChain { transitions: rows },
            states,
        }
    }

    /// Single-state channel, handy for tests.
    pub fn constant(state: ChannelState) -> Result<Self> {
        Self::new(MarkovChain::identity(1), vec![state])
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn with_data_erasure(mut self, erasure: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&erasure) {
            return Err(Error::invalid(format!("erasure rate {erasure} outside [0, 1]")));
        }
        for s in &mut self.states {
            s.data_erasure = erasure;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ChannelDoc {
            states: self
                .states
                .iter()
                .map(|s| ChannelStateDoc {
                    delay_ms: s.round_trip() * 1000.0,
                    erasure: s.data_erasure,
                    feedback_erasure: s.feedback_erasure,
                })
                .collect(),
            transitions: self.chain.transitions.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelDoc = serde_json::from_str(text)?;
        let chain = MarkovChain::new(doc.transitions)?;
        let states = doc
            .states
            .iter()
            .map(|s| {
                let mut st = Self::symmetric_state(s.delay_ms, s.erasure);
                st.feedback_erasure = s.feedback_erasure;
                st
            })
            .collect();
        Self::new(chain, states)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Round-trip delays logged once per awake step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DelayTrace {
    samples: Vec<(u64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    step: u64,
    delay_ms: f64,
}

impl DelayTrace {
    pub fn new(samples: Vec<(u64, f64)>) -> Result<Self> {
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!(
                    "trace timestamps must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((step, d)) = samples.iter().find(|(_, d)| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid(format!("invalid delay {d} at step {step}")));
        }
        Ok(DelayTrace { samples })
    }

    /// Consecutive step indices starting at 0.
    pub fn from_delays(delays: &[f64]) -> Result<Self> {
        Self::new(delays.iter().enumerate().map(|(i, d)| (i as u64, *d)).collect())
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["step", "delay_ms"] {
            return Err(Error::invalid(format!(
                "delay trace header must be `step,delay_ms`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            samples.push((row.step, row.delay_ms));
        }
        Self::new(samples)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (step, delay_ms) in &self.samples {
            w.serialize(TraceRow {
                step: *step,
                delay_ms: *delay_ms,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Fits a channel chain to a delay trace: occupied `bin_ms` bins become states,
/// consecutive-sample bin transitions become row-normalized probabilities.
/// Bins with no outgoing transition get a self-loop.
pub fn fit_channel_from_trace(trace: &DelayTrace, bin_ms: f64, erasure: f64) -> Result<ChannelChain> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot fit a channel to an empty trace"));
    }
    if !(bin_ms > 0.0 && bin_ms.is_finite()) {
        return Err(Error::invalid(format!("bin width must be positive, got {bin_ms}")));
    }
    if !(0.0..=1.0).contains(&erasure) {
        return Err(Error::invalid(format!("erasure rate {erasure} outside [0, 1]")));
    }
    let bins: Vec<u64> = trace
        .samples
        .iter()
        .map(|(_, d)| (d / bin_ms).floor() as u64)
        .collect();
    let index: BTreeMap<u64, usize> = bins
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    let n = index.len();
    let mut counts = vec![vec![0u64; n]; n];
    for w in bins.windows(2) {
        counts[index[&w[0]]][index[&w[1]]] += 1;
    }
    let rows = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            } else {
                row.iter().map(|c| *c as f64 / total as f64).collect()
            }
        })
        .collect();
    let states = index
        .keys()
        .map(|b| ChannelChain::symmetric_state((*b as f64 + 0.5) * bin_ms, erasure))
        .collect();
    ChannelChain::new(MarkovChain::new(rows)?, states)
}

/// Master seed plus a stream index; each (seed, stream) pair yields an
/// independent ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngSeed {
            master_seed,
            stream_id,
        }
    }

    /// Packs sweep coordinates into a stream id: 24 bits of value index,
    /// 8 bits of strategy index and 32 bits of repetition.
    pub fn for_cell(master_seed: u64, value_index: usize, strategy_index: usize, repetition: usize) -> Self {
        let stream = ((value_index as u64 & 0xFF_FFFF) << 40)
            | ((strategy_index as u64 & 0xFF) << 32)
            | (repetition as u64 & 0xFFFF_FFFF);
        RngSeed::new(master_seed, stream)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// GoT-A: states are split into critical and non-critical. A critical true
/// state shown as a non-critical one at the receiver costs `alpha` per step of
/// AoII; any other mismatch costs `beta_small` per step.
pub fn make_got_a(
    space: &ProcessSpace,
    critical: &[ProcessState],
    alpha: f64,
    beta_small: f64,
    cap: u32,
) -> Result<GoTensor> {
    if let Some(s) = critical.iter().find(|s| !space.contains(**s)) {
        return Err(Error::invalid(format!("critical state {} not in the process space", s.0)));
    }
    if !(alpha > beta_small && beta_small > 0.0) {
        return Err(Error::invalid(format!(
            "GoT-A needs alpha > beta_small > 0, got alpha={alpha}, beta_small={beta_small}"
        )));
    }
    let is_critical = |i: usize| critical.iter().any(|s| s.0 == i);
    GoTensor::from_fn(space.n_states, cap, MetricKind::Aoii, |x, xr, age| {
        if x == xr {
            0.0
        } else if is_critical(x) && !is_critical(xr) {
            alpha * age as f64
        } else {
            beta_small * age as f64
        }
    })
}

/// GoT-B tensor together with the per-pair draws that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGot {
    pub tensor: GoTensor,
    /// Base data quality per (x, x_rx), row-major; drawn from [-0.5 - v, -0.5 + v].
    pub base: Vec<f64>,
    /// Per-step degradation per (x, x_rx), row-major; drawn from [0.5 - v, 0.5 + v].
    pub slope: Vec<f64>,
}

/// GoT-B: random base quality and random linear degradation per state pair,
/// stored as a non-negative cost `-base + slope * age`.
pub fn make_got_b<R: RngCore + ?Sized>(space: &ProcessSpace, v: f64, cap: u32, rng: &mut R) -> Result<RandomGot> {
    if !(v > 0.0 && v <= 0.5) {
        return Err(Error::invalid(format!("GoT-B variability must be in (0, 0.5], got {v}")));
    }
    let n = space.n_states;
    let mut base = Vec::with_capacity(n * n);
    let mut slope = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        base.push(rng.random_range(-0.5 - v..=-0.5 + v));
        slope.push(rng.random_range(0.5 - v..=0.5 + v));
    }
    let tensor = GoTensor::from_fn(n, cap, MetricKind::Aoii, |x, xr, age| {
        let k = x * n + xr;
        -base[k] + slope[k] * age as f64
    })?;
    Ok(RandomGot { tensor, base, slope })
}
