//! Device-side belief: buffered measurement, transition evidence, and
//! distributions over the true state, the receiver's state and the age metric.
//!
//! The device only sees its own measurements and ACKs. Between measurements
//! the belief is propagated with the estimated transition matrix; the AoII
//! belief is kept as a tensor of age distributions conditioned on
//! (true state, receiver state).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GoTensor, MetricKind};

/// Laplace pseudo-count put in every transition cell before any evidence.
pub const DEFAULT_PRIOR_COUNT: f64 = 1.0;

/// Feedback observed by the device for a transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AckReport {
    pub acked: bool,
    /// Round-trip time in seconds; present iff `acked`.
    pub round_trip: Option<f64>,
}

impl AckReport {
    pub fn acked(round_trip: f64) -> Self {
        AckReport {
            acked: true,
            round_trip: Some(round_trip),
        }
    }

    pub fn lost() -> Self {
        AckReport {
            acked: false,
            round_trip: None,
        }
    }
}

/// Age distributions per (true state, receiver state), flattened `[x][x_rx][age]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiiTensor {
    n_states: usize,
    cap: u32,
    data: Vec<f64>,
}

impl AoiiTensor {
    pub fn zeros(n_states: usize, cap: u32) -> Self {
        AoiiTensor {
            n_states,
            cap,
            data: vec![0.0; n_states * n_states * (cap as usize + 1)],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    fn width(&self) -> usize {
        self.cap as usize + 1
    }

    pub fn slice(&self, x: usize, xr: usize) -> &[f64] {
        let w = self.width();
        let start = (x * self.n_states + xr) * w;
        &self.data[start..start + w]
    }

    pub fn slice_mut(&mut self, x: usize, xr: usize) -> &mut [f64] {
        let w = self.width();
        let start = (x * self.n_states + xr) * w;
        &mut self.data[start..start + w]
    }

    pub fn get(&self, x: usize, xr: usize, age: u32) -> f64 {
        self.slice(x, xr)[age as usize]
    }

    /// Puts all mass of slice (x, x_rx) on `age`.
    pub fn set_point_mass(&mut self, x: usize, xr: usize, age: u32) {
        let s = self.slice_mut(x, xr);
        s.fill(0.0);
        s[age as usize] = 1.0;
    }
}

/// Which age belief the device keeps, selected by the GoT's metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeBelief {
    /// Distribution over the receiver's AoI, 0..=cap.
    Aoi(Vec<f64>),
    Aoii(AoiiTensor),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    x_tx: usize,
    /// Last receiver value the device knows was delivered (via ACK).
    x_rx_known: usize,
    proc_counts: Vec<Vec<f64>>,
    d_x: Vec<f64>,
    d_x_rx: Vec<f64>,
    age: AgeBelief,
    n_sleep: u32,
    t_awake: u64,
    /// Last step this belief was advanced to.
    t_last: u64,
}

fn point_mass(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|p| *p /= s);
    }
}

/// Shifts an age distribution one step right, accumulating mass at the cap.
fn shift_age(src: &[f64], dst: &mut [f64]) {
    let m = src.len() - 1;
    dst[0] = 0.0;
    dst[1..=m].copy_from_slice(&src[..m]);
    dst[m] += src[m];
}

/// Row-normalizes transition counts; all-zero rows become uniform.
pub fn normalize_counts(counts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = counts.len();
    counts
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter().map(|c| c / s).collect()
            } else {
                vec![1.0 / n as f64; n]
            }
        })
        .collect()
}

/// One AoII belief step over all receiver states. `d_x_new` must be the
/// predicted (or observed) distribution at the new step.
pub fn tensor_update(prev: &AoiiTensor, d_x_prev: &[f64], d_x_new: &[f64], p_est: &[Vec<f64>]) -> AoiiTensor {
    let all: Vec<usize> = (0..prev.n_states).collect();
    tensor_update_for(prev, d_x_prev, d_x_new, p_est, &all)
}

/// Same as [`tensor_update`], restricted to the listed receiver states; the
/// other slices are left empty.
pub fn tensor_update_for(
    prev: &AoiiTensor,
    d_x_prev: &[f64],
    d_x_new: &[f64],
    p_est: &[Vec<f64>],
    receivers: &[usize],
) -> AoiiTensor {
    let n = prev.n_states;
    let w = prev.width();
    let mut next = AoiiTensor::zeros(n, prev.cap);
    let observed = d_x_new.iter().position(|p| *p == 1.0);
    let mut shifted = vec![0.0; w];
    for &xr in receivers {
        for x in (0..n).filter(|x| d_x_prev[*x] > 0.0) {
            shift_age(prev.slice(x, xr), &mut shifted);
            for x2 in (0..n).filter(|x2| d_x_new[*x2] > 0.0) {
                if x2 == xr {
                    next.set_point_mass(x2, xr, 0);
                    continue;
                }
                let weight = if observed.is_some() {
                    d_x_prev[x]
                } else {
                    d_x_prev[x] * p_est[x][x2] / d_x_new[x2]
                };
                if weight == 0.0 {
                    continue;
                }
                for (t, r) in next.slice_mut(x2, xr).iter_mut().zip(&shifted) {
                    *t += weight * r;
                }
            }
        }
    }
    next
}

impl Belief {
    /// Belief of a device that has just sensed `x0` and knows the receiver
    /// holds the same value.
    pub fn synchronized(n_states: usize, cap: u32, metric: MetricKind, x0: usize, prior_count: f64) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::invalid("belief needs at least 2 process states"));
        }
        if x0 >= n_states {
            return Err(Error::invalid(format!("initial state {x0} out of range")));
        }
        if !(prior_count >= 0.0) {
            return Err(Error::invalid("prior count must be non-negative"));
        }
        let age = match metric {
            MetricKind::Aoi => AgeBelief::Aoi(point_mass(cap as usize + 1, 0)),
            MetricKind::Aoii => {
                let mut t = AoiiTensor::zeros(n_states, cap);
                t.set_point_mass(x0, x0, 0);
                AgeBelief::Aoii(t)
            }
        };
        Ok(Belief {
            x_tx: x0,
            x_rx_known: x0,
            proc_counts: vec![vec![prior_count; n_states]; n_states],
            d_x: point_mass(n_states, x0),
            d_x_rx: point_mass(n_states, x0),
            age,
            n_sleep: 0,
            t_awake: 0,
            t_last: 0,
        })
    }

    /// Replaces the transition evidence, e.g. to start from a known model.
    pub fn with_counts(mut self, counts: Vec<Vec<f64>>) -> Result<Self> {
        let n = self.n_states();
        if counts.len() != n || counts.iter().any(|r| r.len() != n || r.iter().any(|c| !(*c >= 0.0))) {
            return Err(Error::invalid("transition counts must be an n x n non-negative matrix"));
        }
        self.proc_counts = counts;
        Ok(self)
    }

    /// Overrides the true-state distribution and age belief; used to set up
    /// what-if scenarios and oracle comparisons.
    pub fn with_distributions(mut self, d_x: Vec<f64>, age: AgeBelief) -> Result<Self> {
        if d_x.len() != self.n_states() {
            return Err(Error::invalid("distribution length does not match the state space"));
        }
        match (&age, &self.age) {
            (AgeBelief::Aoi(d), AgeBelief::Aoi(old)) if d.len() == old.len() => {}
            (AgeBelief::Aoii(t), AgeBelief::Aoii(old)) if t.n_states == old.n_states && t.cap == old.cap => {}
            _ => return Err(Error::invalid("age belief kind or dimensions do not match")),
        }
        self.d_x = d_x;
        self.age = age;
        Ok(self)
    }

    pub fn with_receiver_distribution(mut self, d_x_rx: Vec<f64>) -> Result<Self> {
        if d_x_rx.len() != self.n_states() {
            return Err(Error::invalid("distribution length does not match the state space"));
        }
        if let Some(i) = d_x_rx.iter().position(|p| *p == 1.0) {
            self.x_rx_known = i;
        }
        self.d_x_rx = d_x_rx;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.d_x.len()
    }

    pub fn metric(&self) -> MetricKind {
        match self.age {
            AgeBelief::Aoi(_) => MetricKind::Aoi,
            AgeBelief::Aoii(_) => MetricKind::Aoii,
        }
    }

    pub fn cap(&self) -> u32 {
        match &self.age {
            AgeBelief::Aoi(d) => d.len() as u32 - 1,
            AgeBelief::Aoii(t) => t.cap,
        }
    }

    pub fn x_tx(&self) -> usize {
        self.x_tx
    }

    pub fn x_rx_known(&self) -> usize {
        self.x_rx_known
    }

    pub fn proc_counts(&self) -> &[Vec<f64>] {
        &self.proc_counts
    }

    pub fn d_x(&self) -> &[f64] {
        &self.d_x
    }

    pub fn d_x_rx(&self) -> &[f64] {
        &self.d_x_rx
    }

    pub fn age(&self) -> &AgeBelief {
        &self.age
    }

    pub fn n_sleep(&self) -> u32 {
        self.n_sleep
    }

    pub fn t_awake(&self) -> u64 {
        self.t_awake
    }

    pub fn t_last(&self) -> u64 {
        self.t_last
    }

    /// Records the decision taken at the last awake step.
    pub fn set_sleep(&mut self, n_sleep: u32) {
        self.n_sleep = n_sleep;
    }

    /// Whether the device is in deep sleep during step `t`.
    pub fn is_asleep_at(&self, t: u64) -> bool {
        t <= self.t_awake + self.n_sleep as u64
    }

    pub fn normalized_proc_est(&self) -> Vec<Vec<f64>> {
        normalize_counts(&self.proc_counts)
    }

    /// Probability that a fresh measurement differs from the receiver's value.
    pub fn mismatch_probability(&self) -> f64 {
        let same: f64 = self.d_x.iter().zip(&self.d_x_rx).map(|(a, b)| a * b).sum();
        (1.0 - same).max(0.0)
    }

    fn active_receivers(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|i| self.d_x_rx[*i] > 0.0).collect()
    }

    /// One unobserved step: propagate the true-state distribution and the age
    /// belief with `p_est`. Callers that propagate many steps pass the
    /// normalized estimate once instead of recomputing it.
    pub fn propagate(&mut self, p_est: &[Vec<f64>]) {
        let n = self.n_states();
        let mut d_new = vec![0.0; n];
        for (i, pi) in self.d_x.iter().enumerate() {
            if *pi > 0.0 {
                for (j, p) in p_est[i].iter().enumerate() {
                    d_new[j] += pi * p;
                }
            }
        }
        normalize(&mut d_new);
        match &mut self.age {
            AgeBelief::Aoi(d) => {
                let mut shifted = vec![0.0; d.len()];
                shift_age(d, &mut shifted);
                *d = shifted;
            }
            AgeBelief::Aoii(t) => {
                let receivers: Vec<usize> = (0..n).filter(|i| self.d_x_rx[*i] > 0.0).collect();
                *t = tensor_update_for(t, &self.d_x, &d_new, p_est, &receivers);
            }
        }
        self.d_x = d_new;
    }

    /// Advances the belief to step `t` (one step after the last update).
    /// While asleep `sensed` must be `None`; when awake it must carry the new
    /// measurement. `ack` is the feedback for a transmission in this step.
    pub fn update(&mut self, t: u64, sensed: Option<usize>, ack: Option<AckReport>) -> Result<()> {
        if self.is_asleep_at(t) {
            if sensed.is_some() {
                return Err(Error::invalid(format!("measurement supplied at step {t} while asleep")));
            }
            let p_est = self.normalized_proc_est();
            self.propagate(&p_est);
        } else {
            let sensed = sensed
                .ok_or_else(|| Error::invalid(format!("awake at step {t} but no measurement supplied")))?;
            self.observe(t, sensed, ack)?;
        }
        self.t_last = t;
        Ok(())
    }

    fn observe(&mut self, t: u64, sensed: usize, ack: Option<AckReport>) -> Result<()> {
        let n = self.n_states();
        if sensed >= n {
            return Err(Error::invalid(format!("sensed state {sensed} out of range")));
        }
        let old = self.x_tx;
        let slept = self.n_sleep as f64;
        if old == sensed {
            self.proc_counts[old][old] += slept + 1.0;
        } else {
            let half = (self.n_sleep / 2) as f64;
            self.proc_counts[old][old] += half;
            self.proc_counts[old][sensed] += 1.0;
            self.proc_counts[sensed][sensed] += slept - half;
        }
        self.x_tx = sensed;
        let acked = ack.is_some_and(|a| a.acked);
        if acked {
            self.x_rx_known = sensed;
        }
        let d_prev = std::mem::replace(&mut self.d_x, point_mass(n, sensed));
        self.d_x_rx = point_mass(n, self.x_rx_known);
        match &mut self.age {
            AgeBelief::Aoi(d) => {
                if acked {
                    *d = point_mass(d.len(), 0);
                } else {
                    let mut shifted = vec![0.0; d.len()];
                    shift_age(d, &mut shifted);
                    *d = shifted;
                }
            }
            AgeBelief::Aoii(tensor) => {
                let receivers = [self.x_rx_known];
                *tensor = tensor_update_for(tensor, &d_prev, &self.d_x, &[], &receivers);
            }
        }
        self.t_awake = t;
        self.n_sleep = 0;
        Ok(())
    }

    /// Replays the unobserved sleep steps up to `t - 1`, then applies the
    /// awake update for step `t`.
    pub fn wake_at(&mut self, t: u64, sensed: usize, ack: Option<AckReport>) -> Result<()> {
        if t <= self.t_last {
            return Err(Error::invalid(format!("step {t} is not after the last update {}", self.t_last)));
        }
        if self.is_asleep_at(t) {
            return Err(Error::invalid(format!("device is still asleep at step {t}")));
        }
        if t > self.t_last + 1 {
            let p_est = self.normalized_proc_est();
            for _ in self.t_last + 1..t {
                self.propagate(&p_est);
            }
        }
        self.observe(t, sensed, ack)?;
        self.t_last = t;
        Ok(())
    }

    /// Expected GoT cost under this belief.
    pub fn predict_cost(&self, got: &GoTensor) -> Result<f64> {
        let n = self.n_states();
        if got.n_states() != n || got.cap() != self.cap() {
            return Err(Error::invalid(format!(
                "GoT is {}x{}x{} but the belief expects {n}x{n}x{}",
                got.n_states(),
                got.n_states(),
                got.cap() + 1,
                self.cap() + 1
            )));
        }
        Ok(self.predict_cost_unchecked(got))
    }

    pub(crate) fn predict_cost_unchecked(&self, got: &GoTensor) -> f64 {
        let mut cost = 0.0;
        let receivers = self.active_receivers();
        for x in (0..self.n_states()).filter(|x| self.d_x[*x] > 0.0) {
            for &xr in &receivers {
                let w = self.d_x[x] * self.d_x_rx[xr];
                let ages: &[f64] = match &self.age {
                    AgeBelief::Aoi(d) => d,
                    AgeBelief::Aoii(t) => t.slice(x, xr),
                };
                let inner: f64 = ages.iter().zip(got.slice(x, xr)).map(|(p, c)| p * c).sum();
                cost += w * inner;
            }
        }
        cost
    }

    /// Checks that every distribution the belief relies on sums to one.
    pub fn check_distributions(&self, tol: f64) -> Result<()> {
        let close = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() <= tol;
        if !close(&self.d_x) {
            return Err(Error::invalid("d_x does not sum to 1"));
        }
        if !close(&self.d_x_rx) {
            return Err(Error::invalid("d_x_rx does not sum to 1"));
        }
        match &self.age {
            AgeBelief::Aoi(d) => {
                if !close(d) {
                    return Err(Error::invalid("AoI distribution does not sum to 1"));
                }
            }
            AgeBelief::Aoii(t) => {
                for x in (0..self.n_states()).filter(|x| self.d_x[*x] > 0.0) {
                    for xr in self.active_receivers() {
                        if !close(t.slice(x, xr)) {
                            return Err(Error::invalid(format!("AoII slice ({x}, {xr}) does not sum to 1")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pure form of [`Belief::update`].
pub fn belief_update(belief: &Belief, t: u64, sensed: Option<usize>, ack: Option<AckReport>) -> Result<Belief> {
    let mut next = belief.clone();
    next.update(t, sensed, ack)?;
    Ok(next)
}

pub fn predict_cost(belief: &Belief, got: &GoTensor) -> Result<f64> {
    belief.predict_cost(got)
}
