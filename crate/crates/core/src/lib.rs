//! Discrete-time simulator for deep-sleep scheduling of a battery-powered
//! sensor that reports a Markov process over a delayed, lossy satellite link.

pub mod belief;
pub mod error;
pub mod harness;
pub mod model;
pub mod schedulers;
pub mod sim;
pub mod stochastic;

pub use belief::{AckReport, AgeBelief, AoiiTensor, Belief};
pub use error::{Error, Result};
pub use model::*;
pub use stochastic::*;
pub use schedulers::{LinkEstimator, Strategy, StrategyConfig, StrategyId};
pub use sim::{run_episode, CostLedger, EpisodeSummary, SimConfig, Simulator, StepRecord};
