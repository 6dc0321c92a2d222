//! Many independent runs in parallel, aggregated into per-episode medians
//! and interquartile bands.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, EnvSpec, RunConfig};
use crate::metrics::{MetricsSink, NullSink, RunRecord};
use crate::run::run_exploration;
use crate::HarnessError;

/// A base configuration and the axes it is expanded along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub seeds: Vec<u64>,
    /// Chain lengths; empty keeps the base length.
    #[serde(default)]
    pub lengths: Vec<usize>,
    /// `[start, end, step]`, appended to `lengths`.
    #[serde(default)]
    pub length_range: Option<[usize; 3]>,
    /// Agents; empty keeps the base agent.
    #[serde(default)]
    pub agents: Vec<AgentKind>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

impl SweepSpec {
    /// `start..=end` in steps of `step`.
    pub fn length_range(start: usize, end: usize, step: usize) -> Vec<usize> {
        (start..=end).step_by(step.max(1)).collect()
    }

    /// One configuration per (length, agent, seed), grouped so that runs
    /// differing only in seed share a group.
    pub fn expand(&self, base: &RunConfig) -> Result<Vec<RunConfig>, HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("a sweep needs at least one seed".into()));
        }
        let mut all = self.lengths.clone();
        if let Some([start, end, step]) = self.length_range {
            all.extend(Self::length_range(start, end, step));
        }
        let lengths: Vec<Option<usize>> = if all.is_empty() {
            vec![None]
        } else {
            all.into_iter().map(Some).collect()
        };
        let agents: Vec<AgentKind> = if self.agents.is_empty() { vec![base.agent] } else { self.agents.clone() };
        let mut out = Vec::new();
        for length in &lengths {
            for &agent in &agents {
                for &seed in &self.seeds {
                    let mut cfg = base.clone();
                    cfg.agent = agent;
                    cfg.seed = seed;
                    if let Some(l) = length {
                        match &mut cfg.env {
                            EnvSpec::Chain(c) => c.length = *l,
                            EnvSpec::MountainCar(_) => {
                                return Err(HarnessError::Config("lengths only apply to the chain".into()))
                            }
                        }
                    }
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}

/// Name shared by runs that differ only in seed.
pub fn group_name(cfg: &RunConfig) -> String {
    match cfg.env {
        EnvSpec::Chain(c) => format!("chain{}-L{}-{}", if c.trap { "-trap" } else { "" }, c.length, cfg.agent.name()),
        EnvSpec::MountainCar(_) => format!("mcar-{}", cfg.agent.name()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub episode: usize,
    pub runs: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub rows: Vec<AggregateRow>,
    /// Runs of the group that failed and were left out.
    pub failed: usize,
}

#[derive(Debug)]
pub struct SweepResult {
    pub configs: Vec<RunConfig>,
    pub outcomes: Vec<Result<RunRecord, HarnessError>>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, group: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.group == group)
    }
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-episode percentiles of the explored fraction over the given records.
/// Records shorter than the longest one hold their last value.
pub fn aggregate_records(group: &str, records: &[&RunRecord], failed: usize) -> Aggregate {
    let episodes = records.iter().filter_map(|r| r.rows.last()).map(|r| r.episode).max().unwrap_or(0);
    let rows = (1..=episodes)
        .map(|ep| {
            let values: Vec<f64> = records.iter().map(|r| r.fraction_at(ep)).collect();
            AggregateRow {
                group: group.to_string(),
                episode: ep,
                runs: values.len(),
                median: percentile(&values, 0.5),
                p25: percentile(&values, 0.25),
                p75: percentile(&values, 0.75),
            }
        })
        .collect();
    Aggregate {
        group: group.to_string(),
        rows,
        failed,
    }
}

/// Runs every configuration on a pool of `parallelism` threads. `sink_for`
/// supplies the metrics sink of each run by index.
pub fn run_sweep_with<F>(cfgs: &[RunConfig], parallelism: usize, sink_for: F) -> Result<SweepResult, HarnessError>
where
    F: Fn(usize, &RunConfig) -> Result<Box<dyn MetricsSink + Send>, HarnessError> + Sync,
{
    if cfgs.is_empty() {
        return Err(HarnessError::Config("a sweep needs at least one configuration".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Vec<Result<RunRecord, HarnessError>> = pool.install(|| {
        cfgs.par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let mut sink = sink_for(i, cfg)?;
                run_exploration(cfg, sink.as_mut())
            })
            .collect()
    });
    let mut groups: BTreeMap<String, (Vec<&RunRecord>, usize)> = BTreeMap::new();
    let mut order = Vec::new();
    for (cfg, outcome) in cfgs.iter().zip(&outcomes) {
        let name = group_name(cfg);
        if !groups.contains_key(&name) {
            order.push(name.clone());
        }
        let entry = groups.entry(name).or_default();
        match outcome {
            Ok(r) => entry.0.push(r),
            Err(_) => entry.1 += 1,
        }
    }
    let aggregates = order
        .iter()
        .map(|name| {
            let (records, failed) = &groups[name];
            aggregate_records(name, records, *failed)
        })
        .collect();
    Ok(SweepResult {
        configs: cfgs.to_vec(),
        outcomes,
        aggregates,
    })
}

pub fn run_sweep(cfgs: &[RunConfig], parallelism: usize) -> Result<SweepResult, HarnessError> {
    run_sweep_with(cfgs, parallelism, |_, _| Ok(Box::new(NullSink)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{EpisodeRow, RunSummary};

    fn constant_record(value: f64, episodes: usize) -> RunRecord {
        RunRecord {
            rows: (1..=episodes)
                .map(|episode| EpisodeRow {
                    episode,
                    env_steps: 0,
                    explored_fraction: value,
                    mean_plan_utility: None,
                    max_position: None,
                })
                .collect(),
            summary: RunSummary {
                agent: "random".into(),
                seed: 0,
                episodes,
                total_steps: 0,
                final_fraction: value,
                episodes_to_full: None,
                max_position: None,
            },
            coverage: None,
        }
    }

    #[test]
    fn percentiles_of_constants_are_constant() {
        let a = constant_record(0.3, 4);
        let agg = aggregate_records("g", &[&a, &a, &a], 0);
        for row in agg.rows {
            assert_eq!((row.median, row.p25, row.p75), (0.3, 0.3, 0.3));
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert_eq!(percentile(&v, 0.25), 1.75);
        assert_eq!(percentile(&v, 1.0), 4.0);
    }

    #[test]
    fn length_sweep_expands_to_seventeen_groups() {
        let spec = SweepSpec {
            seeds: vec![0, 1],
            lengths: vec![],
            length_range: Some([20, 100, 5]),
            agents: vec![],
            parallelism: 1,
        };
        let cfgs = spec.expand(&RunConfig::chain(50, false)).unwrap();
        let groups: std::collections::BTreeSet<String> = cfgs.iter().map(group_name).collect();
        assert_eq!(groups.len(), 17);
        assert_eq!(cfgs.len(), 34);
    }

    #[test]
    fn identical_seeds_have_no_spread() {
        let mut cfg = RunConfig::chain(10, false);
        cfg.agent = AgentKind::Random;
        cfg.episodes = 4;
        let cfgs = vec![cfg; 5];
        let result = run_sweep(&cfgs, 2).unwrap();
        for row in &result.aggregates[0].rows {
            assert_eq!(row.p25, row.p75);
            assert_eq!(row.median, row.p25);
        }
    }
}
