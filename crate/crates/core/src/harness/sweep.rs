//! Parameter sweeps: every (value, strategy, repetition) cell is one episode
//! with its own seed stream, so cells can run in any order on any thread.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PreparedExperiment, SweepParameter};
use crate::error::{Error, Result};
use crate::schedulers::StrategyId;
use crate::sim::run_episode;
use crate::stochastic::RngSeed;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub strategies: Vec<StrategyId>,
    pub repetitions: usize,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    /// Uses the config's `[sweep]` section.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let s = cfg
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep: section missing".into()))?;
        Ok(SweepSpec {
            parameter: s.parameter,
            values: s.values.clone().unwrap_or_else(|| s.parameter.default_values()),
            strategies: s.strategies.clone(),
            repetitions: s.repetitions,
            base: cfg.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.strategies.is_empty() || self.repetitions == 0 {
            return Err(Error::Config(
                "sweep needs at least one value, one strategy and one repetition".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() * self.strategies.len() * self.repetitions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub parameter_value: f64,
    pub strategy: StrategyId,
    pub repetition: usize,
    pub c_e: f64,
    pub c_qual: f64,
    pub c_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub strategy: StrategyId,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResults {
    pub parameter: SweepParameter,
    pub seed: u64,
    pub repetitions: usize,
    pub rows: Vec<ResultRow>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs every cell on the current rayon pool. Rows come back sorted by
/// (value index, strategy index, repetition) regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResults> {
    spec.validate()?;
    let prepared: Vec<PreparedExperiment> = spec
        .values
        .iter()
        .map(|v| spec.base.with_parameter(spec.parameter, *v)?.prepare())
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..spec.values.len())
        .flat_map(|vi| {
            (0..spec.strategies.len()).flat_map(move |si| (0..spec.repetitions).map(move |r| (vi, si, r)))
        })
        .collect();
    let seed = spec.base.seed;
    let rows = cells
        .par_iter()
        .map(|&(vi, si, rep)| {
            let strategy = spec.strategies[si];
            let cell_seed = RngSeed::for_cell(seed, vi, si, rep);
            let ledger = run_episode(prepared[vi].sim_config(strategy, cell_seed, false))?;
            Ok(ResultRow {
                parameter_value: spec.values[vi],
                strategy,
                repetition: rep,
                c_e: ledger.c_e(),
                c_qual: ledger.c_qual(),
                c_avg: ledger.c_avg(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResults {
        parameter: spec.parameter,
        seed,
        repetitions: spec.repetitions,
        rows,
    })
}

impl SweepResults {
    /// Mean and interquartile band of `c_avg` per (value, strategy), in row order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: Vec<(f64, StrategyId, Vec<f64>)> = Vec::new();
        for r in &self.rows {
            match groups
                .iter_mut()
                .find(|(v, s, _)| v.to_bits() == r.parameter_value.to_bits() && *s == r.strategy)
            {
                Some((_, _, costs)) => costs.push(r.c_avg),
                None => groups.push((r.parameter_value, r.strategy, vec![r.c_avg])),
            }
        }
        groups
            .into_iter()
            .map(|(value, strategy, mut costs)| {
                costs.sort_by(f64::total_cmp);
                SummaryRow {
                    value,
                    strategy,
                    mean: costs.iter().sum::<f64>() / costs.len() as f64,
                    q25: quantile(&costs, 0.25),
                    q75: quantile(&costs, 0.75),
                }
            })
            .collect()
    }

    pub fn mean_cost(&self, value: f64, strategy: StrategyId) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.value == value && s.strategy == strategy)
            .map(|s| s.mean)
    }

    pub fn write_results_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.summary() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn meta(&self, preset: &str) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "parameter": self.parameter.as_str(),
            "repetitions": self.repetitions,
            "preset": preset,
            "versions": { "sleepsched": env!("CARGO_PKG_VERSION") },
        })
    }

    /// Writes `results.csv`, `summary.csv` and `meta.json` into `dir`.
    pub fn write_all(&self, dir: &Path, preset: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_results_csv(&dir.join("results.csv"))?;
        self.write_summary_csv(&dir.join("summary.csv"))?;
        let meta = serde_json::to_string_pretty(&self.meta(preset))?;
        std::fs::write(dir.join("meta.json"), meta + "\n")?;
        Ok(())
    }
}

/// Preset label recorded in metadata: fewer than 100 repetitions is "desk".
pub fn preset_name(repetitions: usize) -> &'static str {
    if repetitions < 100 {
        "desk"
    } else {
        "full"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-12);
        assert!((quantile(&v, 0.75) - 3.25).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn preset_labels() {
        assert_eq!(preset_name(10), "desk");
        assert_eq!(preset_name(100), "full");
    }
}
