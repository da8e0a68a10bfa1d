use std::collections::BTreeSet;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::ClusterSequence;
use crate::ctmc::{average_runs, Ensemble};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::series::{sample_grid, PropagationSeries, Units};
use crate::topology::ClusterGraph;

/// Which vehicles carry the message when they enter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InformedSeed {
    /// Each vehicle independently with this probability.
    Bernoulli { probability: f64 },
    /// Exactly this many vehicles, chosen uniformly without replacement.
    ExactCount { informed: usize },
}

impl InformedSeed {
    fn draw(&self, vehicles: usize, rng: &mut SimRng) -> Result<Vec<bool>> {
        match *self {
            InformedSeed::Bernoulli { probability } => {
                if !(0.0..=1.0).contains(&probability) {
                    return Err(Error::config(format!(
                        "seeding probability must lie in [0, 1], got {probability}"
                    )));
                }
                Ok((0..vehicles)
                    .map(|_| rng::uniform(rng) < probability)
                    .collect())
            }
            InformedSeed::ExactCount { informed } => {
                if informed > vehicles {
                    return Err(Error::config(format!(
                        "cannot inform {informed} of {vehicles} vehicles"
                    )));
                }
                let mut flags = vec![false; vehicles];
                for i in index::sample(rng, vehicles, informed) {
                    flags[i] = true;
                }
                Ok(flags)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    pub seeding: InformedSeed,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    /// Defaults to the end of the data; longer horizons are truncated.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_sample_dt() -> f64 {
    1.0
}

const OUTSIDE: usize = usize::MAX;

struct Change {
    t: f64,
    vehicle: usize,
    to: usize,
}

/// Replays recorded mobility and samples communication on top of it.
///
/// Cluster occupancy is piecewise constant between recorded moves; on each
/// such interval the inform rates `beta_jk / N * nI_j * nS_k` are constant,
/// so events are drawn exactly from an exponential clock on their total and
/// the clock is restarted at every move. `N` is the number of distinct
/// vehicle ids. Before entering, a vehicle sits in its virtual entry cluster
/// (or outside every cluster if it has none); after leaving it sits in its
/// virtual exit cluster (or outside). `rho` counts informed vehicles wherever
/// they are.
pub fn replay_with_communication(
    sequences: &[ClusterSequence],
    g: &ClusterGraph,
    opts: &ReplayOptions,
    seed: u64,
) -> Result<PropagationSeries> {
    let ids: BTreeSet<u64> = sequences.iter().map(|s| s.vehicle_id).collect();
    if ids.is_empty() {
        return Err(Error::Empty("no vehicle sequences to replay".into()));
    }
    let n = ids.len() as f64;
    let data_end = sequences
        .iter()
        .filter_map(ClusterSequence::last_leave)
        .fold(0.0, f64::max);
    let horizon = match opts.horizon {
        Some(h) if h > data_end + 1e-9 => {
            warn!("replay horizon {h} exceeds the data ({data_end}); truncating");
            data_end
        }
        Some(h) => h,
        None => data_end,
    };
    let times = sample_grid(horizon, opts.sample_dt)?;

    let mut rng = rng::seeded(seed);
    let informed = opts.seeding.draw(sequences.len(), &mut rng)?;

    let j_count = g.len();
    let mut location = vec![OUTSIDE; sequences.len()];
    let mut changes = Vec::new();
    for (v, s) in sequences.iter().enumerate() {
        for c in s
            .visits
            .iter()
            .map(|v| v.cluster)
            .chain(s.entry)
            .chain(s.exit)
        {
            if c >= j_count {
                return Err(Error::config(format!(
                    "vehicle {} refers to unknown cluster {c}",
                    s.vehicle_id
                )));
            }
        }
        location[v] = s.entry.unwrap_or(OUTSIDE);
        for visit in &s.visits {
            changes.push(Change {
                t: visit.enter_t,
                vehicle: v,
                to: visit.cluster,
            });
        }
        if !s.censored {
            if let Some(last) = s.visits.last() {
                changes.push(Change {
                    t: last.leave_t,
                    vehicle: v,
                    to: s.exit.unwrap_or(OUTSIDE),
                });
            }
        }
    }
    // stable: a vehicle's own changes stay in order at equal times
    changes.sort_by(|a, b| a.t.total_cmp(&b.t));

    let mut state = ReplayState::new(j_count, &location, &informed);
    let pairs: Vec<(usize, usize, f64)> = g.comm_pairs().collect();
    let mut rates = vec![0.0; pairs.len()];
    let mut rec_i = Vec::with_capacity(times.len());
    let mut rec_s = Vec::with_capacity(times.len());
    let mut rho = Vec::with_capacity(times.len());
    let mut next_sample = 0;
    let mut ci = 0;
    // moves recorded at t <= 0 define the initial occupancy
    while ci < changes.len() && changes[ci].t <= 0.0 {
        state.relocate(changes[ci].vehicle, changes[ci].to);
        ci += 1;
    }
    let mut t = 0.0;
    while next_sample < times.len() {
        let next_change = changes.get(ci).map_or(f64::INFINITY, |c| c.t);
        let mut total = 0.0;
        for (r, &(j, k, beta)) in rates.iter_mut().zip(&pairs) {
            *r = beta / n * state.n_informed[j] as f64 * state.susceptible[k].len() as f64;
            total += *r;
        }
        let t_event = if total > 0.0 {
            t + rng::exponential(&mut rng, total)
        } else {
            f64::INFINITY
        };
        let t_next = t_event.min(next_change);
        while next_sample < times.len() && times[next_sample] < t_next {
            state.record(n, &mut rec_i, &mut rec_s, &mut rho);
            next_sample += 1;
        }
        if next_sample == times.len() {
            break;
        }
        if t_event < next_change {
            let target = rng::uniform(&mut rng) * total;
            let mut acc = 0.0;
            let mut chosen = rates.len() - 1;
            for (p, &r) in rates.iter().enumerate() {
                acc += r;
                if target < acc && r > 0.0 {
                    chosen = p;
                    break;
                }
            }
            let k = pairs[chosen].1;
            state.inform_random(k, &mut rng);
            t = t_event;
        } else {
            while ci < changes.len() && changes[ci].t == next_change {
                state.relocate(changes[ci].vehicle, changes[ci].to);
                ci += 1;
            }
            t = next_change;
        }
    }
    let mut series = PropagationSeries::new(times, rec_i, rec_s, Units::Counts, n)?;
    series.rho = rho;
    Ok(series)
}

/// `runs` replays with seeds `base_seed + i`; `mean.rho` is the pointwise
/// mean of the runs' `rho`.
pub fn replay_ensemble(
    sequences: &[ClusterSequence],
    g: &ClusterGraph,
    opts: &ReplayOptions,
    runs: usize,
    base_seed: u64,
) -> Result<Ensemble> {
    let n = sequences
        .iter()
        .map(|s| s.vehicle_id)
        .collect::<BTreeSet<_>>()
        .len() as f64;
    let mut e = average_runs(runs, n.max(1.0), false, |i| {
        replay_with_communication(sequences, g, opts, base_seed.wrapping_add(i as u64))
    })?;
    e.mean.rho = e.mean_rho.clone();
    Ok(e)
}

struct ReplayState {
    location: Vec<usize>,
    informed: Vec<bool>,
    n_informed: Vec<u64>,
    /// Non-informed vehicles per cluster, with each vehicle's slot.
    susceptible: Vec<Vec<usize>>,
    slot: Vec<usize>,
    total_informed: u64,
}

impl ReplayState {
    fn new(clusters: usize, location: &[usize], informed: &[bool]) -> Self {
        let mut s = Self {
            location: vec![OUTSIDE; location.len()],
            informed: informed.to_vec(),
            n_informed: vec![0; clusters],
            susceptible: vec![Vec::new(); clusters],
            slot: vec![0; location.len()],
            total_informed: informed.iter().filter(|&&b| b).count() as u64,
        };
        for (v, &c) in location.iter().enumerate() {
            s.relocate(v, c);
        }
        s
    }

    fn relocate(&mut self, v: usize, to: usize) {
        let from = self.location[v];
        if from == to {
            return;
        }
        if from != OUTSIDE {
            if self.informed[v] {
                self.n_informed[from] -= 1;
            } else {
                self.remove_susceptible(v, from);
            }
        }
        if to != OUTSIDE {
            if self.informed[v] {
                self.n_informed[to] += 1;
            } else {
                self.slot[v] = self.susceptible[to].len();
                self.susceptible[to].push(v);
            }
        }
        self.location[v] = to;
    }

    fn remove_susceptible(&mut self, v: usize, c: usize) {
        let list = &mut self.susceptible[c];
        let i = self.slot[v];
        list.swap_remove(i);
        if i < list.len() {
            self.slot[list[i]] = i;
        }
    }

    fn inform_random(&mut self, k: usize, rng: &mut SimRng) {
        let len = self.susceptible[k].len();
        let pick = ((rng::uniform(rng) * len as f64) as usize).min(len - 1);
        let v = self.susceptible[k][pick];
        self.remove_susceptible(v, k);
        self.informed[v] = true;
        self.n_informed[k] += 1;
        self.total_informed += 1;
    }

    fn record(
        &self,
        n: f64,
        rec_i: &mut Vec<Vec<f64>>,
        rec_s: &mut Vec<Vec<f64>>,
        rho: &mut Vec<f64>,
    ) {
        rec_i.push(self.n_informed.iter().map(|&v| v as f64).collect());
        rec_s.push(self.susceptible.iter().map(|l| l.len() as f64).collect());
        rho.push(self.total_informed as f64 / n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Region;
    use crate::trajectory::Visit;

    fn pair_graph(beta: f64) -> ClusterGraph {
        ClusterGraph::new(
            vec![[0.0, 0.0]],
            vec![Region::Study],
            vec![0],
            &[],
            &[(0, 0, beta)],
        )
        .unwrap()
    }

    fn resident(id: u64, from: f64, to: f64) -> ClusterSequence {
        ClusterSequence {
            vehicle_id: id,
            entry: None,
            visits: vec![Visit {
                cluster: 0,
                enter_t: from,
                leave_t: to,
            }],
            exit: None,
            censored: false,
        }
    }

    #[test]
    fn no_communication_keeps_seeded_fraction() {
        let g = pair_graph(0.0);
        let seqs: Vec<_> = (0..10).map(|i| resident(i, 0.0, 20.0)).collect();
        let opts = ReplayOptions {
            seeding: InformedSeed::ExactCount { informed: 3 },
            sample_dt: 1.0,
            horizon: None,
        };
        let s = replay_with_communication(&seqs, &g, &opts, 4).unwrap();
        assert_eq!(s.len(), 21);
        assert!(s.rho.iter().all(|&r| (r - 0.3).abs() < 1e-15));
    }

    #[test]
    fn never_informs_absent_vehicles() {
        // vehicle 1 arrives at t = 5 and leaves at t = 8; only then may it be informed
        let g = pair_graph(50.0);
        let mut a = resident(0, 0.0, 20.0);
        a.censored = true;
        let seqs = vec![a, resident(1, 5.0, 8.0)];
        let opts = ReplayOptions {
            seeding: InformedSeed::ExactCount { informed: 1 },
            sample_dt: 0.5,
            horizon: None,
        };
        for seed in 0..20 {
            let s = replay_with_communication(&seqs, &g, &opts, seed).unwrap();
            for (t, row) in s.times.iter().zip(&s.informed) {
                if *t < 5.0 {
                    assert!(s.rho[(t * 2.0) as usize] == 0.5);
                }
                assert!(row[0] <= 2.0);
            }
        }
    }

    #[test]
    fn horizon_is_truncated() {
        let g = pair_graph(1.0);
        let seqs = vec![resident(0, 0.0, 5.0)];
        let opts = ReplayOptions {
            seeding: InformedSeed::Bernoulli { probability: 1.0 },
            sample_dt: 1.0,
            horizon: Some(100.0),
        };
        let s = replay_with_communication(&seqs, &g, &opts, 1).unwrap();
        assert_eq!(*s.times.last().unwrap(), 5.0);
    }

    #[test]
    fn bad_seeding() {
        let g = pair_graph(1.0);
        let seqs = vec![resident(0, 0.0, 5.0)];
        let opts = ReplayOptions {
            seeding: InformedSeed::ExactCount { informed: 2 },
            sample_dt: 1.0,
            horizon: None,
        };
        assert!(replay_with_communication(&seqs, &g, &opts, 1)
            .unwrap_err()
            .is_config());
    }
}
