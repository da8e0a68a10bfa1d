//! Exact stochastic simulation of the cluster-level Markov chain.
//!
//! The state is the vector of informed and non-informed counts per cluster.
//! Three kinds of transition exist: an informed vehicle moves along a
//! mobility edge, a non-informed vehicle moves, or an informed vehicle in `j`
//! informs a non-informed one in `k` at rate `beta_jk / N * nI_j * nS_k`.
//!
//! Events are sampled with Gillespie's direct method. Transition rates live
//! in a binary sum tree laid out as `[move informed | move non-informed |
//! inform]`, each block in lexicographic `(j, k)` order; after an event only
//! the leaves touching the changed clusters are recomputed. Internal nodes are
//! always the sum of their two children, so the tree is a pure function of its
//! leaves and incremental updates give bit-identical runs to a full rebuild.

use crate::error::{Error, Result};
use crate::rates::{Densities, EdgeTable, MobilityModel, VehicleClass};
use crate::rng::{self, SimRng};
use crate::series::{sample_grid, PropagationSeries, Units};
use crate::topology::{ClusterGraph, RoutingTable};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub informed: Vec<u64>,
    pub susceptible: Vec<u64>,
}

impl SystemState {
    pub fn new(informed: Vec<u64>, susceptible: Vec<u64>) -> Result<Self> {
        if informed.len() != susceptible.len() {
            return Err(Error::config(
                "informed and non-informed vectors differ in length",
            ));
        }
        Ok(Self {
            informed,
            susceptible,
        })
    }

    /// `n` non-informed vehicles in each of `clusters` clusters.
    pub fn uniform(clusters: usize, n: u64) -> Self {
        Self {
            informed: vec![0; clusters],
            susceptible: vec![n; clusters],
        }
    }

    pub fn clusters(&self) -> usize {
        self.informed.len()
    }

    pub fn total(&self) -> u64 {
        self.informed.iter().sum::<u64>() + self.susceptible.iter().sum::<u64>()
    }

    pub fn total_informed(&self) -> u64 {
        self.informed.iter().sum()
    }

    /// Turns `count` non-informed vehicles of cluster `j` into informed ones.
    pub fn seed(&mut self, j: usize, count: u64) -> Result<()> {
        if count > self.susceptible[j] {
            return Err(Error::config(format!(
                "cannot inform {count} vehicles in cluster {j}: only {} present",
                self.susceptible[j]
            )));
        }
        self.susceptible[j] -= count;
        self.informed[j] += count;
        Ok(())
    }

    fn check_for(&self, g: &ClusterGraph) -> Result<()> {
        if self.clusters() != g.len() {
            return Err(Error::config(format!(
                "state has {} clusters, graph has {}",
                self.clusters(),
                g.len()
            )));
        }
        if self.total() == 0 {
            return Err(Error::config("state holds no vehicles"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    MoveInformed,
    MoveSusceptible,
    Inform,
}

/// One possible jump. For `Inform`, `from` holds the informing vehicle's
/// cluster and `to` the cluster of the vehicle being informed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

impl Transition {
    fn apply(&self, s: &mut SystemState) {
        match self.kind {
            TransitionKind::MoveInformed => {
                s.informed[self.from] -= 1;
                s.informed[self.to] += 1;
            }
            TransitionKind::MoveSusceptible => {
                s.susceptible[self.from] -= 1;
                s.susceptible[self.to] += 1;
            }
            TransitionKind::Inform => {
                s.susceptible[self.to] -= 1;
                s.informed[self.to] += 1;
            }
        }
    }
}

fn occupancy_of(s: &SystemState, n: f64) -> Vec<f64> {
    s.informed
        .iter()
        .zip(&s.susceptible)
        .map(|(&i, &k)| (i + k) as f64 / n)
        .collect()
}

/// Every transition with non-zero rate out of `s`, in selection order.
pub fn enumerate_transitions(
    s: &SystemState,
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
) -> Result<Vec<Transition>> {
    s.check_for(g)?;
    let table = EdgeTable::new(g, model, routing)?;
    let n = s.total() as f64;
    let occ = occupancy_of(s, n);
    let occ = Densities(&occ);
    let mut out = Vec::new();
    for (kind, class, counts) in [
        (
            TransitionKind::MoveInformed,
            VehicleClass::Informed,
            &s.informed,
        ),
        (
            TransitionKind::MoveSusceptible,
            VehicleClass::Susceptible,
            &s.susceptible,
        ),
    ] {
        for e in 0..table.len() {
            let (j, k) = table.edge(e);
            let rate = table.rate(e, class, &occ) * counts[j] as f64;
            if rate > 0.0 {
                out.push(Transition {
                    kind,
                    from: j,
                    to: k,
                    rate,
                });
            }
        }
    }
    for (j, k, beta) in g.comm_pairs() {
        let rate = beta / n * s.informed[j] as f64 * s.susceptible[k] as f64;
        if rate > 0.0 {
            out.push(Transition {
                kind: TransitionKind::Inform,
                from: j,
                to: k,
                rate,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// Total rate is zero; nothing can happen any more.
    Absorbed,
    Jump {
        next: SystemState,
        dt: f64,
        transition: Transition,
    },
}

/// One direct-method step from `s`: an exponential holding time on the total
/// rate, then a transition chosen with probability proportional to its rate
/// by a strict prefix-sum scan.
pub fn gillespie_step(
    s: &SystemState,
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
    rng: &mut SimRng,
) -> Result<Step> {
    let transitions = enumerate_transitions(s, g, model, routing)?;
    let total: f64 = transitions.iter().map(|t| t.rate).sum();
    if total <= 0.0 {
        return Ok(Step::Absorbed);
    }
    let dt = rng::exponential(rng, total);
    let target = rng::uniform(rng) * total;
    let mut acc = 0.0;
    let mut chosen = *transitions
        .last()
        .expect("positive total implies a transition");
    for t in &transitions {
        acc += t.rate;
        if target < acc {
            chosen = *t;
            break;
        }
    }
    let mut next = s.clone();
    chosen.apply(&mut next);
    Ok(Step::Jump {
        next,
        dt,
        transition: chosen,
    })
}

/// Binary tree of partial sums over a fixed number of leaves.
#[derive(Clone, Debug)]
struct SumTree {
    cap: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(len: usize) -> Self {
        let cap = len.max(1).next_power_of_two();
        Self {
            cap,
            nodes: vec![0.0; 2 * cap],
        }
    }

    #[inline]
    fn set(&mut self, i: usize, v: f64) {
        let mut p = self.cap + i;
        self.nodes[p] = v;
        while p > 1 {
            p /= 2;
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
        }
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    #[inline]
    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf `i` with `cum(i - 1) <= target < cum(i)`; never lands on a zero leaf.
    #[inline]
    fn find(&self, mut target: f64) -> usize {
        let mut p = 1;
        while p < self.cap {
            let left = 2 * p;
            if target < self.nodes[left] || self.nodes[left + 1] == 0.0 {
                p = left;
            } else {
                target -= self.nodes[left];
                p = left + 1;
            }
        }
        p - self.cap
    }
}

/// Incremental Gillespie engine over one realisation.
#[derive(Clone, Debug)]
pub struct Simulator {
    table: EdgeTable,
    pairs: Vec<(usize, usize, f64)>,
    n: f64,
    state: SystemState,
    occ: Vec<f64>,
    tree: SumTree,
    time: f64,
    out_edges: Vec<Vec<usize>>,
    incident_edges: Vec<Vec<usize>>,
    pairs_from: Vec<Vec<usize>>,
    pairs_to: Vec<Vec<usize>>,
    full_recompute: bool,
    scratch: Vec<usize>,
}

impl Simulator {
    pub fn new(
        g: &ClusterGraph,
        model: &MobilityModel,
        routing: &RoutingTable,
        init: SystemState,
    ) -> Result<Self> {
        init.check_for(g)?;
        let table = EdgeTable::new(g, model, routing)?;
        let pairs: Vec<_> = g.comm_pairs().collect();
        let j = g.len();
        let mut out_edges = vec![Vec::new(); j];
        let mut incident_edges = vec![Vec::new(); j];
        for e in 0..table.len() {
            let (a, b) = table.edge(e);
            out_edges[a].push(e);
            incident_edges[a].push(e);
            incident_edges[b].push(e);
        }
        let mut pairs_from = vec![Vec::new(); j];
        let mut pairs_to = vec![Vec::new(); j];
        for (p, &(a, b, _)) in pairs.iter().enumerate() {
            pairs_from[a].push(p);
            pairs_to[b].push(p);
        }
        let n = init.total() as f64;
        let occ = occupancy_of(&init, n);
        let tree = SumTree::new(2 * table.len() + pairs.len());
        let mut sim = Self {
            table,
            pairs,
            n,
            state: init,
            occ,
            tree,
            time: 0.0,
            out_edges,
            incident_edges,
            pairs_from,
            pairs_to,
            full_recompute: false,
            scratch: Vec::new(),
        };
        sim.recompute_all();
        Ok(sim)
    }

    /// Rebuild every leaf after each event instead of only the touched ones.
    pub fn set_full_recompute(&mut self, on: bool) {
        self.full_recompute = on;
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn leaf_rate(&self, i: usize) -> f64 {
        let e_count = self.table.len();
        let occ = Densities(&self.occ);
        if i < e_count {
            let (j, _) = self.table.edge(i);
            self.table.rate(i, VehicleClass::Informed, &occ) * self.state.informed[j] as f64
        } else if i < 2 * e_count {
            let e = i - e_count;
            let (j, _) = self.table.edge(e);
            self.table.rate(e, VehicleClass::Susceptible, &occ) * self.state.susceptible[j] as f64
        } else {
            let (a, b, beta) = self.pairs[i - 2 * e_count];
            beta / self.n * self.state.informed[a] as f64 * self.state.susceptible[b] as f64
        }
    }

    fn recompute_all(&mut self) {
        for i in 0..2 * self.table.len() + self.pairs.len() {
            let r = self.leaf_rate(i);
            self.tree.set(i, r);
        }
    }

    fn transition_at(&self, i: usize) -> Transition {
        let e_count = self.table.len();
        let rate = self.tree.get(i);
        if i < e_count {
            let (from, to) = self.table.edge(i);
            Transition {
                kind: TransitionKind::MoveInformed,
                from,
                to,
                rate,
            }
        } else if i < 2 * e_count {
            let (from, to) = self.table.edge(i - e_count);
            Transition {
                kind: TransitionKind::MoveSusceptible,
                from,
                to,
                rate,
            }
        } else {
            let (from, to, _) = self.pairs[i - 2 * e_count];
            Transition {
                kind: TransitionKind::Inform,
                from,
                to,
                rate,
            }
        }
    }

    /// Samples the next event. Returns the holding time and the transition,
    /// or `None` if the chain is absorbed. The event is not applied until
    /// [`apply`](Self::apply) is called, so callers can record the state at
    /// sample instants that fall inside the holding interval.
    pub fn propose(&self, rng: &mut SimRng) -> Option<(f64, usize)> {
        let total = self.tree.total();
        if total <= 0.0 {
            return None;
        }
        let dt = rng::exponential(rng, total);
        let target = rng::uniform(rng) * total;
        Some((dt, self.tree.find(target)))
    }

    pub fn apply(&mut self, dt: f64, leaf: usize) -> Transition {
        let t = self.transition_at(leaf);
        t.apply(&mut self.state);
        self.time += dt;
        if self.full_recompute {
            if t.kind != TransitionKind::Inform {
                self.occ[t.from] =
                    (self.state.informed[t.from] + self.state.susceptible[t.from]) as f64 / self.n;
                self.occ[t.to] =
                    (self.state.informed[t.to] + self.state.susceptible[t.to]) as f64 / self.n;
            }
            self.recompute_all();
            return t;
        }
        let e_count = self.table.len();
        let mut touched = std::mem::take(&mut self.scratch);
        touched.clear();
        match t.kind {
            TransitionKind::MoveInformed | TransitionKind::MoveSusceptible => {
                for c in [t.from, t.to] {
                    self.occ[c] =
                        (self.state.informed[c] + self.state.susceptible[c]) as f64 / self.n;
                }
                let offset = if t.kind == TransitionKind::MoveInformed {
                    0
                } else {
                    e_count
                };
                for c in [t.from, t.to] {
                    if self.table.occupancy_dependent() {
                        for &e in &self.incident_edges[c] {
                            touched.push(e);
                            touched.push(e_count + e);
                        }
                    } else {
                        touched.extend(self.out_edges[c].iter().map(|&e| offset + e));
                    }
                    let pairs = if t.kind == TransitionKind::MoveInformed {
                        &self.pairs_from[c]
                    } else {
                        &self.pairs_to[c]
                    };
                    touched.extend(pairs.iter().map(|&p| 2 * e_count + p));
                }
            }
            TransitionKind::Inform => {
                let c = t.to;
                for &e in &self.out_edges[c] {
                    touched.push(e);
                    touched.push(e_count + e);
                }
                touched.extend(self.pairs_from[c].iter().map(|&p| 2 * e_count + p));
                touched.extend(self.pairs_to[c].iter().map(|&p| 2 * e_count + p));
            }
        }
        for &i in &touched {
            let r = self.leaf_rate(i);
            self.tree.set(i, r);
        }
        self.scratch = touched;
        t
    }

    /// Draws and applies one event.
    pub fn step(&mut self, rng: &mut SimRng) -> Option<(f64, Transition)> {
        let (dt, leaf) = self.propose(rng)?;
        Some((dt, self.apply(dt, leaf)))
    }
}

/// One realisation sampled at `0, sample_dt, ..., horizon`. The recorded
/// state at a sample instant includes every event up to and including it.
pub fn run(
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
    init: &SystemState,
    horizon: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<PropagationSeries> {
    let times = sample_grid(horizon, sample_dt)?;
    let mut sim = Simulator::new(g, model, routing, init.clone())?;
    let mut rng = rng::seeded(seed);
    simulate_on_grid(&mut sim, &times, &mut rng)
}

fn simulate_on_grid(
    sim: &mut Simulator,
    times: &[f64],
    rng: &mut SimRng,
) -> Result<PropagationSeries> {
    let mut informed = Vec::with_capacity(times.len());
    let mut susceptible = Vec::with_capacity(times.len());
    let record = |s: &SystemState, inf: &mut Vec<Vec<f64>>, sus: &mut Vec<Vec<f64>>| {
        inf.push(s.informed.iter().map(|&v| v as f64).collect());
        sus.push(s.susceptible.iter().map(|&v| v as f64).collect());
    };
    let mut next_sample = 0;
    while next_sample < times.len() {
        match sim.propose(rng) {
            None => {
                while next_sample < times.len() {
                    record(sim.state(), &mut informed, &mut susceptible);
                    next_sample += 1;
                }
            }
            Some((dt, leaf)) => {
                let t_event = sim.time() + dt;
                while next_sample < times.len() && times[next_sample] < t_event {
                    record(sim.state(), &mut informed, &mut susceptible);
                    next_sample += 1;
                }
                if next_sample < times.len() {
                    sim.apply(dt, leaf);
                }
            }
        }
    }
    PropagationSeries::new(times.to_vec(), informed, susceptible, Units::Counts, sim.n)
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    /// Pointwise mean of per-cluster counts; `rho` of the mean counts.
    pub mean: PropagationSeries,
    /// Pointwise mean of each run's own `rho`.
    pub mean_rho: Vec<f64>,
    pub runs: Option<Vec<PropagationSeries>>,
}

impl Ensemble {
    /// Largest gap between the two ways of averaging `rho`. Zero up to
    /// rounding whenever every run has the same population.
    pub fn averaging_gap(&self) -> f64 {
        self.mean
            .rho
            .iter()
            .zip(&self.mean_rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Independent realisations with seeds `base_seed + i`, averaged in run order.
/// The result does not depend on how runs are scheduled across threads.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
    init: &SystemState,
    horizon: f64,
    sample_dt: f64,
    runs: usize,
    base_seed: u64,
    keep_runs: bool,
) -> Result<Ensemble> {
    let times = sample_grid(horizon, sample_dt)?;
    let template = Simulator::new(g, model, routing, init.clone())?;
    let one = |i: usize| -> Result<PropagationSeries> {
        let mut sim = template.clone();
        let mut rng = rng::seeded(base_seed.wrapping_add(i as u64));
        simulate_on_grid(&mut sim, &times, &mut rng)
    };

    average_runs(runs, init.total() as f64, keep_runs, one)
}

/// Runs `one(0..runs)` (in parallel batches when enabled) and accumulates the
/// results in index order, so the sums are bit-identical however the runs
/// were scheduled.
/// Running sums of informed counts, non-informed counts and per-run `rho`,
/// plus the sample times.
type Sums = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

pub(crate) fn average_runs<F>(runs: usize, total: f64, keep_runs: bool, one: F) -> Result<Ensemble>
where
    F: Fn(usize) -> Result<PropagationSeries> + Sync,
{
    if runs == 0 {
        return Err(Error::config("ensemble needs at least one run"));
    }
    let mut sums: Option<Sums> = None;
    let mut kept = Vec::new();
    const BATCH: usize = 32;
    let mut start = 0;
    while start < runs {
        let end = (start + BATCH).min(runs);
        #[cfg(feature = "parallel")]
        let batch: Vec<Result<PropagationSeries>> = {
            use rayon::prelude::*;
            (start..end).into_par_iter().map(&one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let batch: Vec<Result<PropagationSeries>> = (start..end).map(&one).collect();
        for series in batch {
            let series = series?;
            let (sum_i, sum_s, sum_rho, _) = sums.get_or_insert_with(|| {
                let zeros = vec![vec![0.0; series.clusters()]; series.len()];
                (
                    zeros.clone(),
                    zeros,
                    vec![0.0; series.len()],
                    series.times.clone(),
                )
            });
            for t in 0..series.len() {
                for (acc, v) in sum_i[t].iter_mut().zip(&series.informed[t]) {
                    *acc += v;
                }
                for (acc, v) in sum_s[t].iter_mut().zip(&series.susceptible[t]) {
                    *acc += v;
                }
                sum_rho[t] += series.rho[t];
            }
            if keep_runs {
                kept.push(series);
            }
        }
        start = end;
    }
    let (mut sum_i, mut sum_s, mut sum_rho, times) = sums.expect("at least one run");
    let scale = 1.0 / runs as f64;
    for row in sum_i.iter_mut().chain(sum_s.iter_mut()) {
        row.iter_mut().for_each(|v| *v *= scale);
    }
    sum_rho.iter_mut().for_each(|v| *v *= scale);
    let mean = PropagationSeries::new(times, sum_i, sum_s, Units::Counts, total)?;
    Ok(Ensemble {
        mean,
        mean_rho: sum_rho,
        runs: keep_runs.then_some(kept),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Region;

    fn single(beta: f64) -> ClusterGraph {
        ClusterGraph::new(
            vec![[0.0, 0.0]],
            vec![Region::Periphery],
            vec![0],
            &[],
            &[(0, 0, beta)],
        )
        .unwrap()
    }

    #[test]
    fn single_inform_transition() {
        let g = single(3.0);
        let s = SystemState::new(vec![1], vec![1]).unwrap();
        let r = RoutingTable::uniform(&g);
        let ts = enumerate_transitions(&s, &g, &MobilityModel::uniform(0.1), &r).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].kind, TransitionKind::Inform);
        assert_eq!(ts[0].rate, 1.5);
    }

    #[test]
    fn single_move_transition() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![Region::Periphery; 2],
            vec![0, 1],
            &[(0, 1)],
            &[],
        )
        .unwrap();
        let r = RoutingTable::uniform(&g);
        let s = SystemState::new(vec![5, 0], vec![0, 0]).unwrap();
        let ts = enumerate_transitions(&s, &g, &MobilityModel::uniform(0.1), &r).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].kind, TransitionKind::MoveInformed);
        assert!((ts[0].rate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absorbed_when_all_informed_and_static() {
        let g = single(3.0);
        let s = SystemState::new(vec![4], vec![0]).unwrap();
        let r = RoutingTable::uniform(&g);
        let mut rng = rng::seeded(1);
        assert_eq!(
            gillespie_step(&s, &g, &MobilityModel::uniform(0.1), &r, &mut rng).unwrap(),
            Step::Absorbed
        );
        let series = run(&g, &MobilityModel::uniform(0.1), &r, &s, 5.0, 1.0, 1).unwrap();
        assert!(series.rho.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn step_applies_inform() {
        let g = single(3.0);
        let s = SystemState::new(vec![1], vec![1]).unwrap();
        let r = RoutingTable::uniform(&g);
        let mut rng = rng::seeded(9);
        match gillespie_step(&s, &g, &MobilityModel::uniform(0.1), &r, &mut rng).unwrap() {
            Step::Jump { next, dt, .. } => {
                assert_eq!(next.informed, vec![2]);
                assert_eq!(next.susceptible, vec![0]);
                assert!(dt > 0.0);
            }
            Step::Absorbed => panic!("expected a jump"),
        }
    }

    #[test]
    fn sum_tree_selection() {
        let mut t = SumTree::new(5);
        for (i, v) in [1.0, 0.0, 2.0, 0.0, 3.0].into_iter().enumerate() {
            t.set(i, v);
        }
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(3.0), 4);
        assert_eq!(t.find(5.999_999), 4);
        // target at or past the total never selects a zero leaf
        assert_eq!(t.find(6.0), 4);
    }

    #[test]
    fn seeding_rejects_overdraw() {
        let mut s = SystemState::uniform(2, 3);
        assert!(s.seed(0, 4).is_err());
        s.seed(0, 2).unwrap();
        assert_eq!(s.informed, vec![2, 0]);
        assert_eq!(s.total(), 6);
    }
}
