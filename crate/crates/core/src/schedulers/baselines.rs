use rand::{Rng, RngCore};

use super::{DecisionContext, Strategy, StrategyId, TransmitMode};
use crate::error::Result;
use crate::model::{Action, CostWeights, EnergyProfile};

/// AoI threshold above which a transmission pays for its own energy:
/// `floor(sqrt(2 w_e E_tx / w_qual)) + 1`, where `E_tx` is the energy of one
/// sense, wake-up and transmission.
pub fn threshold_theta(weights: &CostWeights, profile: &EnergyProfile) -> Result<u32> {
    weights.validate()?;
    profile.validate()?;
    let e_tx = profile.t_sense * profile.p_sense + profile.t_wake * profile.p_wake + profile.t_tx * profile.p_antenna;
    Ok((2.0 * weights.w_e * e_tx / weights.w_qual).sqrt().floor() as u32 + 1)
}

/// Never sleeps.
#[derive(Debug, Clone, Default)]
pub struct AlwaysTransmit {
    gated: bool,
}

impl AlwaysTransmit {
    pub fn new(gated: bool) -> Self {
        AlwaysTransmit { gated }
    }
}

impl Strategy for AlwaysTransmit {
    fn id(&self) -> StrategyId {
        StrategyId::Always
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Action {
        Action::STAY_AWAKE
    }

    fn transmit_mode(&self) -> TransmitMode {
        if self.gated {
            TransmitMode::MetricGated
        } else {
            TransmitMode::EveryAwakeStep
        }
    }
}

/// Sleeps for the maximum duration forever, without ever waking.
#[derive(Debug, Clone)]
pub struct NeverTransmit {
    max_sleep: u32,
}

impl NeverTransmit {
    pub fn new(max_sleep: u32) -> Self {
        NeverTransmit { max_sleep }
    }
}

impl Strategy for NeverTransmit {
    fn id(&self) -> StrategyId {
        StrategyId::Never
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Action {
        Action(self.max_sleep)
    }

    fn renew_sleep(&self) -> Option<Action> {
        (self.max_sleep > 0).then_some(Action(self.max_sleep))
    }
}

/// Sleeps a uniformly drawn number of steps after every awake step.
#[derive(Debug, Clone)]
pub struct RandomSleep {
    min_sleep: u32,
    max_sleep: u32,
}

impl RandomSleep {
    pub fn new(min_sleep: u32, max_sleep: u32) -> Self {
        RandomSleep { min_sleep, max_sleep }
    }
}

impl Strategy for RandomSleep {
    fn id(&self) -> StrategyId {
        StrategyId::Random
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>, rng: &mut dyn RngCore) -> Action {
        Action(rng.random_range(self.min_sleep..=self.max_sleep))
    }
}

/// Sends on every awake step and, once a report is acknowledged, sleeps
/// until the receiver's AoI reaches `theta`.
#[derive(Debug, Clone)]
pub struct Threshold {
    theta: u32,
}

impl Threshold {
    pub fn new(theta: u32) -> Self {
        Threshold { theta: theta.max(1) }
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }
}

impl Strategy for Threshold {
    fn id(&self) -> StrategyId {
        StrategyId::Threshold
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Action {
        match ctx.outcome {
            Some(o) if o.transmitted && !o.acked => Action::STAY_AWAKE,
            _ => Action(self.theta - 1),
        }
    }

    fn transmit_mode(&self) -> TransmitMode {
        TransmitMode::EveryAwakeStep
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_for(w_e: f64) -> u32 {
        threshold_theta(&CostWeights::new(w_e, 1.0).unwrap(), &EnergyProfile::default()).unwrap()
    }

    #[test]
    fn theta_matches_hand_values() {
        // E_tx = 0.052*0.14345 + 0.047*0.19125 + 0.064*0.50755 = 0.04893135
        for w in [0.125, 0.5, 1.0, 4.0, 8.0] {
            assert_eq!(theta_for(w), 1, "w_e = {w}");
        }
        assert_eq!(theta_for(16.0), 2);
        assert_eq!(theta_for(32.0), 2);
        assert_eq!(theta_for(100.0), 4);
        assert_eq!(theta_for(10_000.0), 32);
    }

    #[test]
    fn never_renews_unless_zero() {
        assert_eq!(NeverTransmit::new(300).renew_sleep(), Some(Action(300)));
        assert_eq!(NeverTransmit::new(0).renew_sleep(), None);
    }
}
