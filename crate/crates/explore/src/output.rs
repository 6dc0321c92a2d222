//! Output directory layout:
//!
//! - `config.toml`: the fully resolved base configuration
//! - `runs/<group>-seed<k>.jsonl`: episode rows, flushed as they happen
//! - `summary.csv`: one line per completed run
//! - `aggregate.csv`: per-group, per-episode median and quartiles
//! - `coverage/<group>-seed<k>.csv`: occupancy grids (continuous runs)
//! - `errors.jsonl`: one line per failed run

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::metrics::{write_summaries, JsonlSink, MetricsSink};
use crate::sweep::{group_name, run_sweep_with, SweepResult};
use crate::HarnessError;

pub fn run_file_stem(cfg: &RunConfig) -> String {
    format!("{}-seed{}", group_name(cfg), cfg.seed)
}

/// Runs `cfgs` and writes every artifact under `out`.
pub fn run_to_dir(base: &RunConfig, cfgs: &[RunConfig], parallelism: usize, out: &Path) -> Result<SweepResult, HarnessError> {
    fs::create_dir_all(out.join("runs"))?;
    fs::write(out.join("config.toml"), base.to_toml_string()?)?;
    let runs_dir: PathBuf = out.join("runs");
    let result = run_sweep_with(cfgs, parallelism, |_, cfg| {
        let file = File::create(runs_dir.join(format!("{}.jsonl", run_file_stem(cfg))))?;
        Ok(Box::new(JsonlSink::new(BufWriter::new(file))) as Box<dyn MetricsSink + Send>)
    })?;
    write_results(&result, out)?;
    Ok(result)
}

pub fn write_results(result: &SweepResult, out: &Path) -> Result<(), HarnessError> {
    let summaries: Vec<_> = result
        .outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|r| r.summary.clone())
        .collect();
    write_summaries(File::create(out.join("summary.csv"))?, &summaries)?;

    let mut agg = csv::Writer::from_path(out.join("aggregate.csv"))?;
    for a in &result.aggregates {
        for row in &a.rows {
            agg.serialize(row)?;
        }
    }
    agg.flush()?;

    let mut errors: Option<BufWriter<File>> = None;
    for (cfg, outcome) in result.configs.iter().zip(&result.outcomes) {
        match outcome {
            Ok(record) => {
                if let Some(cov) = &record.coverage {
                    fs::create_dir_all(out.join("coverage"))?;
                    fs::write(out.join("coverage").join(format!("{}.csv", run_file_stem(cfg))), cov.to_csv())?;
                }
            }
            Err(e) => {
                if errors.is_none() {
                    errors = Some(BufWriter::new(File::create(out.join("errors.jsonl"))?));
                }
                let w = errors.as_mut().expect("just created");
                let mut line = e.to_json();
                line["run"] = serde_json::json!(run_file_stem(cfg));
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n")?;
            }
        }
    }
    if let Some(mut w) = errors {
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AgentKind;

    #[test]
    fn writes_the_documented_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = RunConfig::chain(10, false);
        base.agent = AgentKind::Random;
        base.episodes = 3;
        let cfgs: Vec<_> = (0..2).map(|seed| RunConfig { seed, ..base.clone() }).collect();
        run_to_dir(&base, &cfgs, 1, dir.path()).unwrap();
        for f in ["config.toml", "summary.csv", "aggregate.csv", "runs/chain-L10-random-seed1.jsonl"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let rows = fs::read_to_string(dir.path().join("runs/chain-L10-random-seed0.jsonl")).unwrap();
        assert_eq!(rows.lines().count(), 3);
        let echoed = RunConfig::from_toml_str(&fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap();
        assert_eq!(echoed, base);
    }
}
