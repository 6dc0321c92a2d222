//! Run records and their on-disk forms: one JSON object per episode,
//! appended and flushed as the run progresses, plus a CSV summary.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageMap;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    /// 1-based, warm-up episodes included.
    pub episode: usize,
    /// Environment steps taken so far.
    pub env_steps: u64,
    /// Explored transitions (discrete) or grid coverage (continuous).
    pub explored_fraction: f64,
    /// Mean planned utility over the episode's planned steps.
    pub mean_plan_utility: Option<f64>,
    /// Highest true position reached so far (continuous).
    pub max_position: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub agent: String,
    pub seed: u64,
    pub episodes: usize,
    pub total_steps: u64,
    pub final_fraction: f64,
    /// First episode after which every transition had been seen.
    pub episodes_to_full: Option<usize>,
    pub max_position: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<EpisodeRow>,
    pub summary: RunSummary,
    pub coverage: Option<CoverageMap>,
}

impl RunRecord {
    /// Explored fraction after `episode` (1-based). Runs that stopped early
    /// keep their final value.
    pub fn fraction_at(&self, episode: usize) -> f64 {
        self.rows
            .iter()
            .take_while(|r| r.episode <= episode)
            .last()
            .map_or(0.0, |r| r.explored_fraction)
    }
}

/// Receives episode rows as they are produced.
pub trait MetricsSink {
    fn record(&mut self, row: &EpisodeRow) -> Result<(), HarnessError>;
}

#[derive(Debug, Default)]
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &EpisodeRow) -> Result<(), HarnessError> {
        Ok(())
    }
}

/// Writes each row as a JSON line with the elapsed wall-clock time and
/// flushes immediately.
#[derive(Debug)]
pub struct JsonlSink<W: Write> {
    out: W,
    start: Instant,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out, start: Instant::now() }
    }
}

impl<W: Write> MetricsSink for JsonlSink<W> {
    fn record(&mut self, row: &EpisodeRow) -> Result<(), HarnessError> {
        let mut value = serde_json::to_value(row)?;
        value["wall_clock_s"] = serde_json::json!(self.start.elapsed().as_secs_f64());
        serde_json::to_writer(&mut self.out, &value)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes run summaries as CSV with a header row.
pub fn write_summaries<W: Write>(out: W, summaries: &[RunSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(episode: usize, f: f64) -> EpisodeRow {
        EpisodeRow {
            episode,
            env_steps: episode as u64 * 10,
            explored_fraction: f,
            mean_plan_utility: None,
            max_position: None,
        }
    }

    #[test]
    fn jsonl_rows_are_valid_prefixes() {
        let mut buf = Vec::new();
        {
            let mut sink = JsonlSink::new(&mut buf);
            sink.record(&row(1, 0.1)).unwrap();
            sink.record(&row(2, 0.2)).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for (i, l) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["episode"], i + 1);
            assert!(v["wall_clock_s"].is_number());
        }
    }

    #[test]
    fn fraction_is_held_after_early_stop() {
        let rec = RunRecord {
            rows: vec![row(1, 0.5), row(2, 1.0)],
            summary: RunSummary {
                agent: "max".into(),
                seed: 0,
                episodes: 2,
                total_steps: 20,
                final_fraction: 1.0,
                episodes_to_full: Some(2),
                max_position: None,
            },
            coverage: None,
        };
        assert_eq!(rec.fraction_at(0), 0.0);
        assert_eq!(rec.fraction_at(1), 0.5);
        assert_eq!(rec.fraction_at(40), 1.0);
    }

    #[test]
    fn summary_csv_has_header() {
        let mut buf = Vec::new();
        let s = RunSummary {
            agent: "eb".into(),
            seed: 3,
            episodes: 60,
            total_steps: 3540,
            final_fraction: 0.4,
            episodes_to_full: None,
            max_position: None,
        };
        write_summaries(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("agent,seed,episodes,total_steps,final_fraction,episodes_to_full,max_position\n"));
        assert!(text.contains("eb,3,60,3540,0.4,,"));
    }
}
