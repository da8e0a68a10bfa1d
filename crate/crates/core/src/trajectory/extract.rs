use std::collections::BTreeSet;

use super::{ClusterSequence, RateTable};
use crate::error::{Error, Result};
use crate::topology::{ClusterGraph, Region};

/// Measures mobility rates from cluster sequences.
///
/// `lambda_i` is the reciprocal of the mean completed sojourn in `i`;
/// censored final visits are left out. `p_ij` counts observed departures
/// `i -> j` (including departures into a virtual exit). Entry rates are the
/// number of vehicles arriving from each virtual entry cluster divided by the
/// observation window, which defaults to the span of all visits.
pub fn extract_rates(
    sequences: &[ClusterSequence],
    g: &ClusterGraph,
    duration: Option<f64>,
) -> Result<RateTable> {
    let j_count = g.len();
    let mut sojourn = vec![0.0; j_count];
    let mut visits = vec![0usize; j_count];
    let mut departures = vec![vec![0usize; j_count]; j_count];
    let mut entries = vec![vec![0usize; j_count]; j_count];
    let mut ids = BTreeSet::new();
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);

    for s in sequences {
        ids.insert(s.vehicle_id);
        for v in &s.visits {
            if v.cluster >= j_count {
                return Err(Error::config(format!(
                    "vehicle {} visits unknown cluster {}",
                    s.vehicle_id, v.cluster
                )));
            }
            t_lo = t_lo.min(v.enter_t);
            t_hi = t_hi.max(v.leave_t);
        }
        for (idx, v) in s.visits.iter().enumerate() {
            let next = match s.visits.get(idx + 1) {
                Some(n) => Some(n.cluster),
                None if s.censored => continue,
                None => s.exit,
            };
            if let Some(k) = next {
                if !g.has_edge(v.cluster, k) {
                    return Err(Error::config(format!(
                        "vehicle {} moves {} -> {k}, which is not a mobility edge",
                        s.vehicle_id, v.cluster
                    )));
                }
                departures[v.cluster][k] += 1;
            }
            sojourn[v.cluster] += v.leave_t - v.enter_t;
            visits[v.cluster] += 1;
        }
        if let (Some(i), Some(first)) = (s.entry, s.visits.first()) {
            if g.region(i) != Region::VirtualEntry || !g.has_edge(i, first.cluster) {
                return Err(Error::config(format!(
                    "vehicle {} enters {} from {i}, which is not a virtual entry edge",
                    s.vehicle_id, first.cluster
                )));
            }
            entries[i][first.cluster] += 1;
        }
    }
    if visits.iter().all(|&v| v == 0) {
        return Err(Error::Empty("no completed visit in any cluster".into()));
    }
    let duration = match duration {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => {
            return Err(Error::config(format!(
                "observation duration must be positive, got {d}"
            )))
        }
        None if t_hi > t_lo => t_hi - t_lo,
        None => return Err(Error::config("observation window has zero length")),
    };

    let lambda = (0..j_count)
        .map(|i| (visits[i] > 0 && sojourn[i] > 0.0).then(|| visits[i] as f64 / sojourn[i]))
        .collect();
    let p = departures
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| {
                    if total == 0 {
                        0.0
                    } else {
                        c as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut entry = Vec::new();
    for (i, row) in entries.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                entry.push((i, j, c as f64 / duration));
            }
        }
    }
    Ok(RateTable {
        lambda,
        p,
        entry,
        visit_counts: visits,
        vehicle_count: ids.len(),
        duration,
    })
}
