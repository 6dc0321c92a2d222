use max_core::models::History;
use max_core::State;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Occupancy histogram of a 2-d state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMap {
    pub bins: usize,
    /// `counts[i][j]`: visits with the first coordinate in bin `i` and the
    /// second in bin `j`.
    pub counts: Vec<Vec<u32>>,
    pub fraction: f64,
}

impl CoverageMap {
    pub fn empty(bins: usize) -> Self {
        Self {
            bins,
            counts: vec![vec![0; bins]; bins],
            fraction: 0.0,
        }
    }

    /// Dense comma-separated matrix, one row per first-coordinate bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    fn bin(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
        let t = ((x - lo) / (hi - lo) * bins as f64).floor();
        (t.max(0.0) as usize).min(bins - 1)
    }

    /// Adds one visit; coordinates outside the bounds land in the edge bins.
    pub fn add(&mut self, point: &[f64], bounds: [(f64, f64); 2]) {
        let i = Self::bin(point[0], bounds[0].0, bounds[0].1, self.bins);
        let j = Self::bin(point[1], bounds[1].0, bounds[1].1, self.bins);
        self.counts[i][j] += 1;
        let nonempty = self.counts.iter().flatten().filter(|&&c| c > 0).count();
        self.fraction = nonempty as f64 / (self.bins * self.bins) as f64;
    }
}

/// Histogram of the states visited in `history` over a `bins × bins` grid
/// spanning `bounds`. Each transition contributes its next state, and its
/// start state when that does not continue the previous transition.
pub fn coverage_map(history: &History, bins: usize, bounds: [(f64, f64); 2]) -> Result<CoverageMap, HarnessError> {
    if bins == 0 {
        return Err(HarnessError::Config("coverage needs at least one bin".into()));
    }
    let mut map = CoverageMap::empty(bins);
    let mut previous: Option<&State> = None;
    for t in history.transitions() {
        for (s, include) in [(&t.s, previous != Some(&t.s)), (&t.s_next, true)] {
            if !include {
                continue;
            }
            let v = s.values()?;
            if v.len() != 2 {
                return Err(max_core::Error::Validation(format!("coverage needs 2-d states, got {}", v.len())).into());
            }
            map.add(v, bounds);
        }
        previous = Some(&t.s_next);
    }
    Ok(map)
}
