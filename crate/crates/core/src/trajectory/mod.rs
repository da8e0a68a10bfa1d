//! Trajectory data: cluster assignment, rate extraction, a synthetic
//! generator, and replay of recorded mobility with simulated communication.

mod assign;
mod extract;
mod io;
mod replay;
mod synth;

pub use assign::{
    assign_clusters, AssignOptions, Assignment, Axis, RegionSet, RegionShape, RegionSpec,
};
pub use extract::extract_rates;
pub use io::{read_sequences, read_trajectories, write_records, write_sequences, ColumnMapping};
pub use replay::{replay_ensemble, replay_with_communication, InformedSeed, ReplayOptions};
pub use synth::{sequences_to_records, synth_trajectories};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{InflowMode, TabulatedRates};
use crate::topology::{ClusterGraph, Region};

/// Where a vehicle is at one sample instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Position {
    Xy { x: f64, y: f64 },
    Cluster(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub vehicle_id: u64,
    pub t: f64,
    pub position: Position,
}

/// One stay in a cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub cluster: usize,
    pub enter_t: f64,
    pub leave_t: f64,
}

/// A vehicle's path through the study area.
///
/// `entry` is the virtual entry cluster it came from (`None` if it was
/// already inside when observation began); `exit` the virtual exit cluster
/// it left through. `censored` marks a final visit cut off by the end of
/// observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSequence {
    pub vehicle_id: u64,
    pub entry: Option<usize>,
    pub visits: Vec<Visit>,
    pub exit: Option<usize>,
    pub censored: bool,
}

impl ClusterSequence {
    pub fn first_enter(&self) -> Option<f64> {
        self.visits.first().map(|v| v.enter_t)
    }

    pub fn last_leave(&self) -> Option<f64> {
        self.visits.last().map(|v| v.leave_t)
    }
}

/// Mobility rates measured from cluster sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// `1 / mean sojourn` per cluster; `None` where no visit was completed.
    pub lambda: Vec<Option<f64>>,
    /// Fraction of departures from `i` that went to `j`.
    pub p: Vec<Vec<f64>>,
    /// Entries per second `(i, j, rate)` from virtual entry `i` into `j`.
    pub entry: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub visit_counts: Vec<usize>,
    /// Distinct vehicles in the dataset.
    #[serde(default)]
    pub vehicle_count: usize,
    /// Observation window length in seconds.
    #[serde(default)]
    pub duration: f64,
}

impl RateTable {
    pub fn clusters(&self) -> usize {
        self.lambda.len()
    }

    /// `lambda_i * p_ij`, or `None` when `lambda_i` is undefined.
    pub fn rate(&self, i: usize, j: usize) -> Option<f64> {
        self.lambda[i].map(|l| l * self.p[i][j])
    }

    pub fn total_entry_flow(&self) -> f64 {
        self.entry.iter().map(|e| e.2).sum()
    }

    /// Per-vehicle rates for the mobility edges of `g`.
    ///
    /// Fails if a transition was observed that `g` does not allow, or if a
    /// study cluster that vehicles can reach has no measured sojourn.
    pub fn tabulated(&self, g: &ClusterGraph, inflow: InflowMode) -> Result<TabulatedRates> {
        if self.clusters() != g.len()
            || self.p.len() != g.len()
            || self.p.iter().any(|r| r.len() != g.len())
        {
            return Err(Error::config(format!(
                "rate table has {} clusters, graph has {}",
                self.clusters(),
                g.len()
            )));
        }
        if self.vehicle_count == 0 {
            return Err(Error::config("rate table records no vehicles"));
        }
        for (i, row) in self.p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                if pij > 0.0 && !g.has_edge(i, j) {
                    return Err(Error::config(format!(
                        "observed move {i} -> {j} is not a mobility edge"
                    )));
                }
            }
        }
        for &(i, j, _) in &self.entry {
            if g.region(i) != Region::VirtualEntry || !g.has_edge(i, j) {
                return Err(Error::config(format!(
                    "entry flow {i} -> {j} does not leave a virtual entry cluster along an edge"
                )));
            }
        }
        let mut rates = Vec::new();
        for (j, k) in g.mobility_edges() {
            match g.region(j) {
                Region::VirtualEntry | Region::VirtualExit => continue,
                _ => {}
            }
            match self.lambda[j] {
                Some(l) => {
                    let r = l * self.p[j][k];
                    if r > 0.0 {
                        rates.push((j, k, r));
                    }
                }
                None if !g.in_neighbors(j).is_empty() => {
                    return Err(Error::UndefinedRate {
                        cluster: j,
                        reason: "no completed visit was observed".into(),
                    })
                }
                None => {}
            }
        }
        let mut entry = self.entry.clone();
        entry.sort_by_key(|e| (e.0, e.1));
        Ok(TabulatedRates {
            rates,
            entry,
            total_vehicles: self.vehicle_count as f64,
            inflow,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_table_json_shape() {
        let t = RateTable {
            lambda: vec![None, Some(0.5)],
            p: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            entry: vec![(0, 1, 2.0)],
            visit_counts: vec![0, 4],
            vehicle_count: 4,
            duration: 2.0,
        };
        let text = t.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["entry"][0], serde_json::json!([0, 1, 2.0]));
        assert!(v["lambda"][0].is_null());
        assert_eq!(RateTable::from_json(&text).unwrap(), t);
        let minimal = r#"{"lambda":[null,0.5],"p":[[0,1],[0,0]],"entry":[[0,1,2.0]]}"#;
        assert_eq!(RateTable::from_json(minimal).unwrap().entry, t.entry);
    }

    #[test]
    fn tabulated_rejects_unknown_edges_and_missing_rates() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![Region::VirtualEntry, Region::Study, Region::VirtualExit],
            vec![0, 1, 2],
            &[(0, 1), (1, 2)],
            &[],
        )
        .unwrap();
        let good = RateTable {
            lambda: vec![None, Some(0.5), None],
            p: vec![vec![0.0; 3], vec![0.0, 0.0, 1.0], vec![0.0; 3]],
            entry: vec![(0, 1, 2.0)],
            visit_counts: vec![0, 3, 0],
            vehicle_count: 3,
            duration: 1.5,
        };
        let t = good
            .tabulated(&g, InflowMode::ReservoirProportional)
            .unwrap();
        assert_eq!(t.rates, vec![(1, 2, 0.5)]);
        assert_eq!(t.total_vehicles, 3.0);

        let mut bad = good.clone();
        bad.p[1] = vec![1.0, 0.0, 0.0];
        assert!(bad
            .tabulated(&g, InflowMode::Constant)
            .unwrap_err()
            .is_config());

        let mut missing = good;
        missing.lambda[1] = None;
        assert!(matches!(
            missing.tabulated(&g, InflowMode::Constant),
            Err(Error::UndefinedRate { cluster: 1, .. })
        ));
    }
}
