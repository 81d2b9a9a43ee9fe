//! Shared domain types and the elementary per-step update rules: age
//! recursions, the phase-time energy model and the weighted cost.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};

/// Default saturation value for age metrics.
pub const DEFAULT_AGE_CAP: u32 = 64;

/// Index of a quantized process state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcessState(pub usize);

impl ProcessState {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A finite process state space with optional physical labels per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpace {
    pub n_states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ProcessSpace {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::invalid(format!(
                "a process space needs at least 2 states, got {n_states}"
            )));
        }
        Ok(ProcessSpace {
            n_states,
            labels: None,
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut space = Self::new(labels.len())?;
        space.labels = Some(labels);
        Ok(space)
    }

    pub fn contains(&self, state: ProcessState) -> bool {
        state.0 < self.n_states
    }
}

/// Delay and erasure rate of the data and feedback channels in one channel state.
/// Delays are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub data_delay: f64,
    pub data_erasure: f64,
    pub feedback_delay: f64,
    pub feedback_erasure: f64,
}

impl ChannelState {
    pub fn validate(&self) -> Result<()> {
        if !(self.data_delay >= 0.0 && self.feedback_delay >= 0.0) {
            return Err(Error::invalid("channel delays must be non-negative"));
        }
        for p in [self.data_erasure, self.feedback_erasure] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("erasure rate {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn round_trip(&self) -> f64 {
        self.data_delay + self.feedback_delay
    }
}

/// A saturating age counter (AoI or AoII), measured in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeValue {
    value: u32,
    cap: u32,
}

impl AgeValue {
    pub fn new(value: u32, cap: u32) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("age cap must be positive"));
        }
        if value > cap {
            return Err(Error::invalid(format!("age {value} exceeds cap {cap}")));
        }
        Ok(AgeValue { value, cap })
    }

    pub fn zero(cap: u32) -> Self {
        AgeValue {
            value: 0,
            cap: cap.max(1),
        }
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn cap(self) -> u32 {
        self.cap
    }

    pub fn incremented(self) -> Self {
        AgeValue {
            value: (self.value + 1).min(self.cap),
            cap: self.cap,
        }
    }

    pub fn reset(self) -> Self {
        AgeValue {
            value: 0,
            cap: self.cap,
        }
    }
}

/// Which age metric keys the goal-oriented tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Aoi,
    Aoii,
}

/// Goal-oriented cost tensor over (process state, receiver state, age).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGoTensor")]
pub struct GoTensor {
    n_states: usize,
    cap: u32,
    metric: MetricKind,
    costs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGoTensor {
    n_states: usize,
    cap: u32,
    metric: MetricKind,
    costs: Vec<f64>,
}

impl TryFrom<RawGoTensor> for GoTensor {
    type Error = Error;

    fn try_from(raw: RawGoTensor) -> Result<Self> {
        GoTensor::from_flat(raw.n_states, raw.cap, raw.metric, raw.costs)
    }
}

impl GoTensor {
    pub fn zeros(n_states: usize, cap: u32, metric: MetricKind) -> Self {
        GoTensor {
            n_states,
            cap,
            metric,
            costs: vec![0.0; n_states * n_states * (cap as usize + 1)],
        }
    }

    pub fn from_fn(
        n_states: usize,
        cap: u32,
        metric: MetricKind,
        mut f: impl FnMut(usize, usize, u32) -> f64,
    ) -> Result<Self> {
        let mut got = Self::zeros(n_states, cap, metric);
        for x in 0..n_states {
            for xr in 0..n_states {
                for d in 0..=cap {
                    let c = f(x, xr, d);
                    if !c.is_finite() {
                        return Err(Error::invalid(format!(
                            "non-finite GoT entry at ({x}, {xr}, {d})"
                        )));
                    }
                    let i = got.offset(x, xr, d);
                    got.costs[i] = c;
                }
            }
        }
        Ok(got)
    }

    /// Rebuilds a tensor from a flat `[x][x_rx][age]` buffer, checking dimensions.
    pub fn from_flat(n_states: usize, cap: u32, metric: MetricKind, costs: Vec<f64>) -> Result<Self> {
        let expected = n_states * n_states * (cap as usize + 1);
        if costs.len() != expected {
            return Err(Error::invalid(format!(
                "GoT buffer has {} entries, expected {expected}",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("GoT entries must be finite"));
        }
        Ok(GoTensor {
            n_states,
            cap,
            metric,
            costs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.costs
    }

    #[inline]
    fn offset(&self, x: usize, xr: usize, age: u32) -> usize {
        (x * self.n_states + xr) * (self.cap as usize + 1) + age as usize
    }

    #[inline]
    pub fn get(&self, x: usize, xr: usize, age: u32) -> f64 {
        self.costs[self.offset(x, xr, age)]
    }

    /// Age profile of one (x, x_rx) pair.
    #[inline]
    pub fn slice(&self, x: usize, xr: usize) -> &[f64] {
        let start = self.offset(x, xr, 0);
        &self.costs[start..start + self.cap as usize + 1]
    }

    pub fn try_get(&self, x: usize, xr: usize, age: u32) -> Result<f64> {
        if x >= self.n_states || xr >= self.n_states || age > self.cap {
            return Err(Error::invalid(format!(
                "GoT index ({x}, {xr}, {age}) out of bounds for {n}x{n}x{m}",
                n = self.n_states,
                m = self.cap + 1
            )));
        }
        Ok(self.get(x, xr, age))
    }

    /// Linear combination `a * self + b * other`; dimensions must agree.
    pub fn combine(&self, a: f64, other: &GoTensor, b: f64) -> Result<GoTensor> {
        if self.n_states != other.n_states || self.cap != other.cap {
            return Err(Error::invalid("GoT dimension mismatch"));
        }
        let costs = self
            .costs
            .iter()
            .zip(&other.costs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GoTensor::from_flat(self.n_states, self.cap, self.metric, costs)
    }

    /// True if every (x, x_rx) age profile is nondecreasing.
    pub fn is_monotone_in_age(&self) -> bool {
        (0..self.n_states).all(|x| {
            (0..self.n_states).all(|xr| self.slice(x, xr).windows(2).all(|w| w[0] <= w[1]))
        })
    }
}

/// Power draw per device mode (watts) and phase durations (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyProfile {
    pub p_wake: f64,
    pub p_sense: f64,
    pub p_antenna: f64,
    pub p_idle: f64,
    pub p_deep_sleep: f64,
    pub t_wake: f64,
    pub t_sense: f64,
    pub t_tx: f64,
    pub step: f64,
}

impl Default for EnergyProfile {
    /// Measured ESP32-S3 sensor-node values with 1 s steps and temperature sensing.
    fn default() -> Self {
        EnergyProfile {
            p_wake: 0.19125,
            p_sense: 0.14345,
            p_antenna: 0.50755,
            p_idle: 0.13795,
            p_deep_sleep: 0.00487,
            t_wake: 0.047,
            t_sense: 0.052,
            t_tx: 0.064,
            step: 1.0,
        }
    }
}

impl EnergyProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.p_wake,
            self.p_sense,
            self.p_antenna,
            self.p_idle,
            self.p_deep_sleep,
            self.t_wake,
            self.t_sense,
            self.t_tx,
            self.step,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("energy profile values must be finite and non-negative"));
        }
        if self.step <= 0.0 {
            return Err(Error::invalid("step duration must be positive"));
        }
        if self.t_wake + self.t_sense + self.t_tx > self.step {
            return Err(Error::invalid(
                "wake-up, sensing and transmission must fit into one step",
            ));
        }
        Ok(())
    }

    /// Antenna time charged for an attempt that receives no ACK.
    pub fn listen_timeout(&self) -> f64 {
        self.step - self.t_wake - self.t_sense
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Weight on energy, in 1/J.
    pub w_e: f64,
    pub w_qual: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_e: 1.0,
            w_qual: 1.0,
        }
    }
}

impl CostWeights {
    pub fn new(w_e: f64, w_qual: f64) -> Result<Self> {
        let w = CostWeights { w_e, w_qual };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_e >= 0.0 && self.w_qual >= 0.0) {
            return Err(Error::invalid("cost weights must be non-negative"));
        }
        if self.w_e == 0.0 && self.w_qual == 0.0 {
            return Err(Error::invalid("cost weights must not both be zero"));
        }
        Ok(())
    }
}

/// Time spent in each device mode during one step, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub wake: f64,
    pub sense: f64,
    pub antenna: f64,
    pub idle: f64,
    pub deep_sleep: f64,
}

impl PhaseTimes {
    pub fn asleep(step: f64) -> Self {
        PhaseTimes {
            deep_sleep: step,
            ..Default::default()
        }
    }

    pub fn total(&self) -> f64 {
        self.wake + self.sense + self.antenna + self.idle + self.deep_sleep
    }

    pub fn validate(&self, step: f64) -> Result<()> {
        let parts = [self.wake, self.sense, self.antenna, self.idle, self.deep_sleep];
        if parts.iter().any(|t| *t < 0.0) {
            return Err(Error::invalid("phase durations must be non-negative"));
        }
        if (self.total() - step).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "phase durations sum to {} instead of the step duration {step}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Number of deep-sleep steps chosen after an awake step; 0 keeps the device awake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Action(pub u32);

impl Action {
    pub const STAY_AWAKE: Action = Action(0);

    pub fn sleep_steps(self) -> u32 {
        self.0
    }
}

/// Ground-truth state of the sender/receiver system at one step.
#[derive(Debug, Clone, Serialize)]
pub struct SystemState {
    pub channel_index: usize,
    pub channel: ChannelState,
    pub x: ProcessState,
    pub x_tx: ProcessState,
    pub x_rx: ProcessState,
    pub aoi_tx: AgeValue,
    pub aoi_rx: AgeValue,
    pub aoii: AgeValue,
    pub belief: Belief,
}

pub fn update_aoi(aoi: AgeValue, delivered: bool) -> AgeValue {
    if delivered {
        aoi.reset()
    } else {
        aoi.incremented()
    }
}

pub fn update_aoii(aoii: AgeValue, x: ProcessState, x_rx: ProcessState) -> AgeValue {
    if x != x_rx {
        aoii.incremented()
    } else {
        aoii.reset()
    }
}

/// Energy in joules drawn during one step.
pub fn energy_cost(phases: &PhaseTimes, profile: &EnergyProfile) -> f64 {
    phases.wake * profile.p_wake
        + phases.sense * profile.p_sense
        + phases.antenna * profile.p_antenna
        + phases.idle * profile.p_idle
        + phases.deep_sleep * profile.p_deep_sleep
}

pub fn quality_cost(got: &GoTensor, x: ProcessState, x_rx: ProcessState, age: AgeValue) -> Result<f64> {
    got.try_get(x.0, x_rx.0, age.value())
}

pub fn total_cost(energy: f64, quality: f64, weights: &CostWeights) -> f64 {
    weights.w_e * energy + weights.w_qual * quality
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn age(v: u32) -> AgeValue {
        AgeValue::new(v, 64).unwrap()
    }

    #[test]
    fn aoi_recursion() {
        assert_eq!(update_aoi(age(5), true).value(), 0);
        assert_eq!(update_aoi(age(5), false).value(), 6);
        assert_eq!(update_aoi(age(64), false).value(), 64);
    }

    #[test]
    fn aoii_recursion() {
        let (a, b, c) = (ProcessState(0), ProcessState(1), ProcessState(2));
        assert_eq!(update_aoii(age(3), b, a).value(), 4);
        assert_eq!(update_aoii(age(3), c, c).value(), 0);
        assert_eq!(update_aoii(age(64), b, a).value(), 64);
    }

    #[test]
    fn age_rejects_value_above_cap() {
        assert!(AgeValue::new(65, 64).is_err());
        assert!(AgeValue::new(0, 0).is_err());
    }

    #[test]
    fn energy_of_full_deep_sleep_step() {
        let profile = EnergyProfile::default();
        let e = energy_cost(&PhaseTimes::asleep(1.0), &profile);
        assert_abs_diff_eq!(e, 0.00487, epsilon = 1e-15);
        assert_eq!(energy_cost(&PhaseTimes::default(), &profile), 0.0);
    }

    #[test]
    fn energy_of_awake_transmit_step() {
        // Independent hand evaluation of each phase product with the measured powers.
        let expected = 0.047 * 0.19125 + 0.052 * 0.14345 + 0.064 * 0.50755 + 0.837 * 0.13795;
        assert_abs_diff_eq!(expected, 0.1643955, epsilon = 1e-7);
        let phases = PhaseTimes {
            wake: 0.047,
            sense: 0.052,
            antenna: 0.064,
            idle: 0.837,
            deep_sleep: 0.0,
        };
        phases.validate(1.0).unwrap();
        assert_abs_diff_eq!(energy_cost(&phases, &EnergyProfile::default()), 0.1643955, epsilon = 1e-7);
    }

    #[test]
    fn phase_times_must_sum_to_step() {
        let bad = PhaseTimes {
            idle: 0.5,
            ..Default::default()
        };
        assert!(bad.validate(1.0).is_err());
    }

    #[test]
    fn total_cost_examples() {
        let w = CostWeights::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(total_cost(0.00487, 0.0, &w), 0.00487);
        assert_abs_diff_eq!(total_cost(0.1, 0.2, &CostWeights::new(2.0, 1.0).unwrap()), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(total_cost(0.163, 0.01, &w), 0.173, epsilon = 1e-15);
    }

    #[test]
    fn weights_reject_all_zero() {
        assert!(CostWeights::new(0.0, 0.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn quality_cost_bounds_checked() {
        let got = GoTensor::from_fn(3, 4, MetricKind::Aoii, |x, xr, d| (x * 100 + xr * 10) as f64 + d as f64).unwrap();
        let c = quality_cost(&got, ProcessState(2), ProcessState(1), AgeValue::new(3, 4).unwrap()).unwrap();
        assert_eq!(c, 213.0);
        assert!(quality_cost(&got, ProcessState(3), ProcessState(0), AgeValue::zero(4)).is_err());
        assert!(got.try_get(0, 0, 5).is_err());
    }

    #[test]
    fn default_profile_is_valid() {
        let p = EnergyProfile::default();
        p.validate().unwrap();
        assert_abs_diff_eq!(p.listen_timeout(), 0.901, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn ages_stay_within_cap(cap in 1u32..100, ops in proptest::collection::vec(any::<bool>(), 0..300)) {
            let mut a = AgeValue::zero(cap);
            let mut b = AgeValue::zero(cap);
            for (i, delivered) in ops.iter().enumerate() {
                a = update_aoi(a, *delivered);
                b = update_aoii(b, ProcessState(i % 2), ProcessState(usize::from(*delivered)));
                prop_assert!(a.value() <= cap && b.value() <= cap);
            }
        }

        #[test]
        fn energy_is_linear_in_phase_durations(
            t in proptest::array::uniform5(0.0f64..1.0),
            s in 0.0f64..10.0,
        ) {
            let profile = EnergyProfile::default();
            let p = PhaseTimes { wake: t[0], sense: t[1], antenna: t[2], idle: t[3], deep_sleep: t[4] };
            let scaled = PhaseTimes { wake: s * t[0], sense: s * t[1], antenna: s * t[2], idle: s * t[3], deep_sleep: s * t[4] };
            let lhs = energy_cost(&scaled, &profile);
            let rhs = s * energy_cost(&p, &profile);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn total_cost_reduces_to_single_terms(e in 0.0f64..10.0, q in 0.0f64..10.0, we in 0.0f64..5.0, wq in 0.01f64..5.0) {
            let w = CostWeights::new(we, wq).unwrap();
            prop_assert_eq!(total_cost(e, 0.0, &w), we * e);
            prop_assert_eq!(total_cost(0.0, q, &w), wq * q);
        }
    }
}
