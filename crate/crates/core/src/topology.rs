//! Clustered road networks.
//!
//! A [`ClusterGraph`] holds the directed mobility network (which cluster a
//! vehicle may move to next) and the communication network (which cluster
//! pairs exchange messages, with rate numerator `beta`). Grids with a central
//! business district (CBD) are generated by [`build_grid`]; routing
//! probabilities biased toward or away from the CBD come from
//! [`routing_probabilities`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances closer than this are treated as equal when classifying moves.
const DIST_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Cbd,
    Periphery,
    Study,
    VirtualEntry,
    VirtualExit,
}

impl Region {
    pub fn is_virtual(self) -> bool {
        matches!(self, Region::VirtualEntry | Region::VirtualExit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterGraph {
    centers: Vec<[f64; 2]>,
    region: Vec<Region>,
    segment_of: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    /// Per source cluster, `(target, beta)` with `beta > 0`, sorted by target.
    comm_out: Vec<Vec<(usize, f64)>>,
}

impl ClusterGraph {
    /// Builds a graph and checks the structural invariants.
    pub fn new(
        centers: Vec<[f64; 2]>,
        region: Vec<Region>,
        segment_of: Vec<usize>,
        mobility: &[(usize, usize)],
        comm: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = centers.len();
        if n == 0 {
            return Err(Error::config("graph must have at least one cluster"));
        }
        if region.len() != n || segment_of.len() != n {
            return Err(Error::config(format!(
                "centers ({n}), region ({}) and segments ({}) differ in length",
                region.len(),
                segment_of.len()
            )));
        }
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(j, k) in mobility {
            if j >= n || k >= n {
                return Err(Error::config(format!(
                    "mobility edge {j}->{k} out of range"
                )));
            }
            if j == k {
                return Err(Error::config(format!("mobility self-loop on cluster {j}")));
            }
            if region[j] == Region::VirtualExit {
                return Err(Error::config(format!(
                    "exit cluster {j} has an outgoing edge"
                )));
            }
            if region[k] == Region::VirtualEntry && region[j] == Region::Study {
                return Err(Error::config(format!(
                    "entry cluster {k} has an incoming edge from study cluster {j}"
                )));
            }
            out[j].insert(k);
        }
        let mut comm_map: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for &(j, k, beta) in comm {
            if j >= n || k >= n {
                return Err(Error::config(format!("comm pair {j}-{k} out of range")));
            }
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::config(format!(
                    "comm rate {beta} on {j}-{k} is not a finite non-negative value"
                )));
            }
            if beta == 0.0 {
                continue;
            }
            if region[j].is_virtual() || region[k].is_virtual() {
                return Err(Error::config(format!(
                    "virtual cluster in comm pair {j}-{k}"
                )));
            }
            comm_map[j].insert(k, beta);
        }
        let out_edges: Vec<Vec<usize>> = out.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut in_edges = vec![Vec::new(); n];
        for (j, ks) in out_edges.iter().enumerate() {
            for &k in ks {
                in_edges[k].push(j);
            }
        }
        Ok(Self {
            centers,
            region,
            segment_of,
            out_edges,
            in_edges,
            comm_out: comm_map
                .into_iter()
                .map(|m| m.into_iter().collect())
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, j: usize) -> [f64; 2] {
        self.centers[j]
    }

    pub fn region(&self, j: usize) -> Region {
        self.region[j]
    }

    pub fn regions(&self) -> &[Region] {
        &self.region
    }

    pub fn segment_of(&self, j: usize) -> usize {
        self.segment_of[j]
    }

    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out_edges[j]
    }

    pub fn in_neighbors(&self, k: usize) -> &[usize] {
        &self.in_edges[k]
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        self.out_edges[j].binary_search(&k).is_ok()
    }

    /// Mobility edges in lexicographic `(j, k)` order.
    pub fn mobility_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(j, ks)| ks.iter().map(move |&k| (j, k)))
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// Communication pairs with positive rate, lexicographic in `(j, k)`.
    pub fn comm_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.comm_out
            .iter()
            .enumerate()
            .flat_map(|(j, ks)| ks.iter().map(move |&(k, b)| (j, k, b)))
    }

    pub fn comm_from(&self, j: usize) -> &[(usize, f64)] {
        &self.comm_out[j]
    }

    pub fn comm_rate(&self, j: usize, k: usize) -> f64 {
        match self.comm_out[j].binary_search_by_key(&k, |&(t, _)| t) {
            Ok(i) => self.comm_out[j][i].1,
            Err(_) => 0.0,
        }
    }

    pub fn cbd_clusters(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.region[j] == Region::Cbd)
            .collect()
    }

    /// Clusters where vehicles are actually observed: everything but the
    /// virtual entry/exit bookkeeping clusters.
    pub fn study_clusters(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| !self.region[j].is_virtual())
            .collect()
    }

    /// Returns a copy whose communication network links every pair of
    /// non-virtual clusters on the same segment (including each cluster with
    /// itself) at rate `beta`.
    pub fn with_segment_comm(&self, beta: f64) -> Result<Self> {
        let n = self.len();
        let mut comm = Vec::new();
        for j in 0..n {
            if self.region[j].is_virtual() {
                continue;
            }
            for k in 0..n {
                if !self.region[k].is_virtual() && self.segment_of[j] == self.segment_of[k] {
                    comm.push((j, k, beta));
                }
            }
        }
        self.with_comm(&comm)
    }

    /// Returns a copy with each non-virtual cluster communicating only with
    /// itself at rate `beta`.
    pub fn with_self_comm(&self, beta: f64) -> Result<Self> {
        let comm: Vec<_> = (0..self.len())
            .filter(|&j| !self.region[j].is_virtual())
            .map(|j| (j, j, beta))
            .collect();
        self.with_comm(&comm)
    }

    pub fn with_comm(&self, comm: &[(usize, usize, f64)]) -> Result<Self> {
        let mobility: Vec<_> = self.mobility_edges().collect();
        Self::new(
            self.centers.clone(),
            self.region.clone(),
            self.segment_of.clone(),
            &mobility,
            comm,
        )
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            centers: self.centers.clone(),
            region: self.region.clone(),
            segments: self.segment_of.clone(),
            mobility: self.mobility_edges().map(|(j, k)| [j, k]).collect(),
            comm: self
                .comm_pairs()
                .map(|(j, k, b)| CommEntry(j, k, b))
                .collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let mobility: Vec<_> = file.mobility.iter().map(|e| (e[0], e[1])).collect();
        let comm: Vec<_> = file.comm.iter().map(|c| (c.0, c.1, c.2)).collect();
        Self::new(
            file.centers.clone(),
            file.region.clone(),
            file.segments.clone(),
            &mobility,
            &comm,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }
}

/// On-disk graph representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub centers: Vec<[f64; 2]>,
    pub region: Vec<Region>,
    pub segments: Vec<usize>,
    pub mobility: Vec<[usize; 2]>,
    pub comm: Vec<CommEntry>,
}

/// `[j, k, beta]`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommEntry(pub usize, pub usize, pub f64);

/// Axis-aligned rectangle in grid coordinates (intersection indices).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbdRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Whether segments lying on the rectangle's edges belong to the CBD.
    pub include_boundary: bool,
}

impl CbdRect {
    fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 - DIST_EPS
            && p[0] <= self.x1 + DIST_EPS
            && p[1] >= self.y0 - DIST_EPS
            && p[1] <= self.y1 + DIST_EPS
    }

    fn on_boundary(&self, p: [f64; 2]) -> bool {
        (p[0] - self.x0).abs() < DIST_EPS
            || (p[0] - self.x1).abs() < DIST_EPS
            || (p[1] - self.y0).abs() < DIST_EPS
            || (p[1] - self.y1).abs() < DIST_EPS
    }

    fn contains_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        if !(self.contains_point(a) && self.contains_point(b)) {
            return false;
        }
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        self.include_boundary || !self.on_boundary(mid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of north-south roads (distinct x coordinates).
    pub avenues: usize,
    /// Number of east-west roads (distinct y coordinates).
    pub streets: usize,
    #[serde(default)]
    pub cbd: Option<CbdRect>,
    #[serde(default)]
    pub allow_u_turns: bool,
}

/// One two-way road segment between adjacent intersections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSegment {
    pub from: (usize, usize),
    pub to: (usize, usize),
    /// Cluster travelling `from -> to`.
    pub forward: usize,
    /// Cluster travelling `to -> from`.
    pub backward: usize,
}

/// A grid graph together with the segment layout used to build it.
#[derive(Clone, Debug)]
pub struct Grid {
    pub graph: ClusterGraph,
    pub segments: Vec<GridSegment>,
    pub spec: GridSpec,
}

impl Grid {
    /// Cluster travelling from intersection `a` to the adjacent intersection `b`.
    pub fn cluster_toward(&self, a: (usize, usize), b: (usize, usize)) -> Option<usize> {
        self.segments.iter().find_map(|s| {
            if s.from == a && s.to == b {
                Some(s.forward)
            } else if s.from == b && s.to == a {
                Some(s.backward)
            } else {
                None
            }
        })
    }

    /// Both directional clusters of the segment joining `a` and `b`.
    pub fn segment_clusters(&self, a: (usize, usize), b: (usize, usize)) -> Option<[usize; 2]> {
        Some([self.cluster_toward(a, b)?, self.cluster_toward(b, a)?])
    }

    /// Clusters of the four segments bounding the unit block whose
    /// lower-left corner is `(x, y)`.
    pub fn block_boundary_clusters(&self, x: usize, y: usize) -> Option<Vec<usize>> {
        let corners = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
        let mut out = Vec::new();
        for i in 0..4 {
            out.extend(self.segment_clusters(corners[i], corners[(i + 1) % 4])?);
        }
        Some(out)
    }

    /// Clusters of every segment incident to intersection `p`.
    pub fn incident_clusters(&self, p: (usize, usize)) -> Vec<usize> {
        self.segments
            .iter()
            .filter(|s| s.from == p || s.to == p)
            .flat_map(|s| [s.forward, s.backward])
            .collect()
    }
}

/// Builds a two-way grid. Each segment between adjacent intersections becomes
/// two clusters, one per travel direction, centred at the segment midpoint.
/// A cluster feeds every cluster leaving its downstream intersection, except
/// its own reverse direction unless U-turns are allowed.
pub fn build_grid(spec: &GridSpec) -> Result<Grid> {
    let (nx, ny) = (spec.avenues, spec.streets);
    if nx < 2 || ny < 2 {
        return Err(Error::config(format!(
            "grid needs at least 2 avenues and 2 streets, got {nx}x{ny}"
        )));
    }
    if let Some(r) = &spec.cbd {
        let (mx, my) = ((nx - 1) as f64, (ny - 1) as f64);
        if r.x0 > r.x1 || r.y0 > r.y1 || r.x0 < 0.0 || r.y0 < 0.0 || r.x1 > mx || r.y1 > my {
            return Err(Error::config(format!(
                "CBD rectangle ({}, {})-({}, {}) is not inside the {nx}x{ny} grid",
                r.x0, r.y0, r.x1, r.y1
            )));
        }
    }

    let mut segments = Vec::new();
    for y in 0..ny {
        for x in 0..nx - 1 {
            segments.push(((x, y), (x + 1, y)));
        }
    }
    for x in 0..nx {
        for y in 0..ny - 1 {
            segments.push(((x, y), (x, y + 1)));
        }
    }

    let j_total = segments.len() * 2;
    let mut centers = Vec::with_capacity(j_total);
    let mut region = Vec::with_capacity(j_total);
    let mut segment_of = Vec::with_capacity(j_total);
    let mut layout = Vec::with_capacity(segments.len());
    // (tail, head) intersections for each directional cluster
    let mut ends = Vec::with_capacity(j_total);
    for (s, &(a, b)) in segments.iter().enumerate() {
        let pa = [a.0 as f64, a.1 as f64];
        let pb = [b.0 as f64, b.1 as f64];
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        let tag = match &spec.cbd {
            Some(r) if r.contains_segment(pa, pb) => Region::Cbd,
            _ => Region::Periphery,
        };
        for &(tail, head) in &[(a, b), (b, a)] {
            centers.push(mid);
            region.push(tag);
            segment_of.push(s);
            ends.push((tail, head));
        }
        layout.push(GridSegment {
            from: a,
            to: b,
            forward: 2 * s,
            backward: 2 * s + 1,
        });
    }

    let mut mobility = Vec::new();
    for (j, &(tail_j, head_j)) in ends.iter().enumerate() {
        for (k, &(tail_k, head_k)) in ends.iter().enumerate() {
            if j == k || tail_k != head_j {
                continue;
            }
            let u_turn = head_k == tail_j;
            if u_turn && !spec.allow_u_turns {
                continue;
            }
            mobility.push((j, k));
        }
    }

    let graph = ClusterGraph::new(centers, region, segment_of, &mobility, &[])?;
    Ok(Grid {
        graph,
        segments: layout,
        spec: spec.clone(),
    })
}

/// A straight two-way road split into `clusters / 2` segments. Vehicles run
/// to the end of each carriageway and turn back onto the other one, so the
/// system stays closed. Same-segment clusters communicate at rate `beta`.
pub fn build_chain(clusters: usize, beta: f64) -> Result<ClusterGraph> {
    if clusters < 2 || !clusters.is_multiple_of(2) {
        return Err(Error::config(format!(
            "a chain needs an even number of clusters >= 2, got {clusters}"
        )));
    }
    let segs = clusters / 2;
    let mut centers = Vec::with_capacity(clusters);
    let mut segment_of = Vec::with_capacity(clusters);
    for s in 0..segs {
        for _ in 0..2 {
            centers.push([s as f64 + 0.5, 0.0]);
            segment_of.push(s);
        }
    }
    // 2s travels east, 2s+1 travels west
    let mut mobility = Vec::with_capacity(clusters);
    for s in 0..segs {
        let east = 2 * s;
        let west = 2 * s + 1;
        if s + 1 < segs {
            mobility.push((east, 2 * (s + 1)));
        } else {
            mobility.push((east, west));
        }
        if s > 0 {
            mobility.push((west, 2 * (s - 1) + 1));
        } else {
            mobility.push((west, east));
        }
    }
    let graph = ClusterGraph::new(
        centers,
        vec![Region::Periphery; clusters],
        segment_of,
        &mobility,
        &[],
    )?;
    graph.with_segment_comm(beta)
}

/// `d(x, D)`: smallest Euclidean distance between the centre of `x` and the
/// centre of any CBD cluster.
pub fn distance_to_cbd(g: &ClusterGraph, x: usize) -> Result<f64> {
    let cbd = g.cbd_clusters();
    if cbd.is_empty() {
        return Err(Error::config("graph has no CBD clusters"));
    }
    Ok(min_distance(g, x, &cbd))
}

fn min_distance(g: &ClusterGraph, x: usize, cbd: &[usize]) -> f64 {
    let cx = g.center(x);
    cbd.iter()
        .map(|&y| {
            let cy = g.center(y);
            ((cx[0] - cy[0]).powi(2) + (cx[1] - cy[1]).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    TowardCbd,
    TowardPeriphery,
}

/// Applies the CBD decision rule to a move `j -> k`.
pub fn classify_direction(g: &ClusterGraph, j: usize, k: usize) -> Result<Direction> {
    let cbd = g.cbd_clusters();
    if cbd.is_empty() {
        return Err(Error::config("graph has no CBD clusters"));
    }
    Ok(classify_with(g, &cbd, j, k))
}

fn classify_with(g: &ClusterGraph, cbd: &[usize], j: usize, k: usize) -> Direction {
    let dj = min_distance(g, j, cbd);
    let dk = min_distance(g, k, cbd);
    if dj > dk + DIST_EPS {
        Direction::TowardCbd
    } else if dj + DIST_EPS < dk {
        Direction::TowardPeriphery
    } else {
        let j_in = g.region(j) == Region::Cbd;
        let k_in = g.region(k) == Region::Cbd;
        // d(x, D) = 0 exactly when x is in D, so equal distances imply equal membership.
        assert_eq!(
            j_in, k_in,
            "clusters {j} and {k} are equidistant from the CBD but only one is inside it"
        );
        if j_in {
            Direction::TowardCbd
        } else {
            Direction::TowardPeriphery
        }
    }
}

/// Routing probabilities `p_jk` for each mobility edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTable {
    gamma: f64,
    /// Aligned with `ClusterGraph::out_neighbors(j)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl RoutingTable {
    /// Equal split over the outgoing edges of every cluster.
    pub fn uniform(g: &ClusterGraph) -> Self {
        let rows = (0..g.len())
            .map(|j| {
                let out = g.out_neighbors(j);
                let p = 1.0 / out.len().max(1) as f64;
                out.iter().map(|&k| (k, p)).collect()
            })
            .collect();
        Self { gamma: 1.0, rows }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        &self.rows[j]
    }

    pub fn p(&self, j: usize, k: usize) -> f64 {
        self.rows[j]
            .binary_search_by_key(&k, |&(t, _)| t)
            .map(|i| self.rows[j][i].1)
            .unwrap_or(0.0)
    }
}

/// Biases each cluster's next-hop choice by `gamma`: the probability of a
/// toward-CBD neighbour is `gamma` times that of a toward-periphery one.
pub fn routing_probabilities(g: &ClusterGraph, gamma: f64) -> Result<RoutingTable> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::config(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let cbd = g.cbd_clusters();
    if cbd.is_empty() {
        return Err(Error::config("routing needs at least one CBD cluster"));
    }
    let mut rows = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        let out = g.out_neighbors(j);
        if out.is_empty() {
            if g.region(j) != Region::VirtualExit {
                return Err(Error::config(format!("cluster {j} has no outgoing edge")));
            }
            rows.push(Vec::new());
            continue;
        }
        let dirs: Vec<Direction> = out.iter().map(|&k| classify_with(g, &cbd, j, k)).collect();
        let toward = dirs.iter().filter(|&&d| d == Direction::TowardCbd).count() as f64;
        let away = out.len() as f64 - toward;
        let p_o = 1.0 / (toward * gamma + away);
        let p_d = gamma * p_o;
        rows.push(
            out.iter()
                .zip(&dirs)
                .map(|(&k, d)| (k, if *d == Direction::TowardCbd { p_d } else { p_o }))
                .collect(),
        );
    }
    Ok(RoutingTable { gamma, rows })
}

/// Blocks entry into every cluster of `blocked`: all edges `i -> j` with
/// `j` blocked are removed. Vehicles already inside may still leave and
/// still communicate. Routing must be recomputed on the result.
pub fn block_clusters(g: &ClusterGraph, blocked: &BTreeSet<usize>) -> ClusterGraph {
    let mut out = g.clone();
    for ks in out.out_edges.iter_mut() {
        ks.retain(|k| !blocked.contains(k));
    }
    for &k in blocked {
        if k < out.in_edges.len() {
            out.in_edges[k].clear();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid6() -> Grid {
        build_grid(&GridSpec {
            avenues: 6,
            streets: 6,
            cbd: Some(CbdRect {
                x0: 2.0,
                y0: 2.0,
                x1: 3.0,
                y1: 3.0,
                include_boundary: true,
            }),
            allow_u_turns: false,
        })
        .unwrap()
    }

    #[test]
    fn grid_cluster_counts() {
        assert_eq!(grid6().graph.len(), 120);
        let g9 = build_grid(&GridSpec {
            avenues: 9,
            streets: 9,
            cbd: None,
            allow_u_turns: false,
        })
        .unwrap();
        assert_eq!(g9.graph.len(), 288);
    }

    #[test]
    fn degenerate_cbd_is_all_periphery() {
        let g = build_grid(&GridSpec {
            avenues: 2,
            streets: 2,
            cbd: Some(CbdRect {
                x0: 0.0,
                y0: 0.0,
                x1: 0.0,
                y1: 0.0,
                include_boundary: true,
            }),
            allow_u_turns: false,
        })
        .unwrap();
        assert_eq!(g.graph.len(), 8);
        assert!(g.graph.regions().iter().all(|&r| r == Region::Periphery));
    }

    #[test]
    fn cbd_outside_grid_is_rejected() {
        let err = build_grid(&GridSpec {
            avenues: 3,
            streets: 3,
            cbd: Some(CbdRect {
                x0: 1.0,
                y0: 1.0,
                x1: 5.0,
                y1: 2.0,
                include_boundary: true,
            }),
            allow_u_turns: false,
        })
        .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn boundary_inclusivity() {
        let spec = |inc| GridSpec {
            avenues: 6,
            streets: 6,
            cbd: Some(CbdRect {
                x0: 1.0,
                y0: 1.0,
                x1: 4.0,
                y1: 4.0,
                include_boundary: inc,
            }),
            allow_u_turns: false,
        };
        let with = build_grid(&spec(true)).unwrap().graph.cbd_clusters().len();
        let without = build_grid(&spec(false)).unwrap().graph.cbd_clusters().len();
        // 3x3 blocks: 24 segments inside-or-on; 12 of them on the boundary
        assert_eq!(with, 48);
        assert_eq!(without, 24);
    }

    #[test]
    fn no_u_turns_by_default() {
        let g = grid6();
        for (j, k) in g.graph.mobility_edges() {
            assert_ne!(g.graph.segment_of(j), g.graph.segment_of(k));
        }
        // corner clusters arriving at a corner intersection have one exit
        let c = g.cluster_toward((1, 0), (0, 0)).unwrap();
        assert_eq!(
            g.graph.out_neighbors(c),
            &[g.cluster_toward((0, 0), (0, 1)).unwrap()]
        );
        // interior intersections give three choices
        let c = g.cluster_toward((1, 2), (2, 2)).unwrap();
        assert_eq!(g.graph.out_neighbors(c).len(), 3);
    }

    #[test]
    fn distance_to_cbd_brute_force() {
        let g = grid6();
        let cbd = g.graph.cbd_clusters();
        for x in 0..g.graph.len() {
            let c = g.graph.center(x);
            let mut best = f64::INFINITY;
            for &y in &cbd {
                let d = g.graph.center(y);
                best = best.min(((c[0] - d[0]).powi(2) + (c[1] - d[1]).powi(2)).sqrt());
            }
            let d = distance_to_cbd(&g.graph, x).unwrap();
            assert_eq!(d, best);
            assert_eq!(d == 0.0, g.graph.region(x) == Region::Cbd);
        }
        // mirror images across the centre are equidistant
        let a = g.cluster_toward((0, 0), (1, 0)).unwrap();
        let b = g.cluster_toward((5, 5), (4, 5)).unwrap();
        assert_eq!(
            distance_to_cbd(&g.graph, a).unwrap(),
            distance_to_cbd(&g.graph, b).unwrap()
        );
    }

    #[test]
    fn no_cbd_errors() {
        let g = build_grid(&GridSpec {
            avenues: 3,
            streets: 3,
            cbd: None,
            allow_u_turns: false,
        })
        .unwrap();
        assert!(distance_to_cbd(&g.graph, 0).is_err());
        assert!(routing_probabilities(&g.graph, 1.0).is_err());
    }

    #[test]
    fn classify_rules() {
        let g = grid6();
        // inward along the bottom-left approach: (1,2)->(2,2) feeds the CBD corner
        let j = g.cluster_toward((1, 2), (2, 2)).unwrap();
        let into = g.cluster_toward((2, 2), (3, 2)).unwrap();
        assert_eq!(
            classify_direction(&g.graph, j, into).unwrap(),
            Direction::TowardCbd
        );
        let away = g.cluster_toward((2, 2), (2, 1)).unwrap();
        assert_eq!(
            classify_direction(&g.graph, j, away).unwrap(),
            Direction::TowardPeriphery
        );
        // inside the CBD at equal (zero) distance
        let a = g.cluster_toward((2, 2), (3, 2)).unwrap();
        let b = g.cluster_toward((3, 2), (3, 3)).unwrap();
        assert_eq!(
            classify_direction(&g.graph, a, b).unwrap(),
            Direction::TowardCbd
        );
        // every edge classifies without hitting the mixed case
        for (j, k) in g.graph.mobility_edges() {
            classify_direction(&g.graph, j, k).unwrap();
        }
    }

    #[test]
    fn routing_three_neighbours_one_inward() {
        let g = grid6();
        let gamma = 3.0;
        let r = routing_probabilities(&g.graph, gamma).unwrap();
        let mut checked = 0;
        for j in 0..g.graph.len() {
            let out = g.graph.out_neighbors(j);
            if out.len() != 3 || g.graph.region(j) != Region::Periphery {
                continue;
            }
            let dirs: Vec<_> = out
                .iter()
                .map(|&k| classify_direction(&g.graph, j, k).unwrap())
                .collect();
            if dirs.iter().filter(|&&d| d == Direction::TowardCbd).count() != 1 {
                continue;
            }
            for (&k, d) in out.iter().zip(&dirs) {
                let want = match d {
                    Direction::TowardCbd => gamma / (gamma + 2.0),
                    Direction::TowardPeriphery => 1.0 / (gamma + 2.0),
                };
                assert!((r.p(j, k) - want).abs() < 1e-15);
            }
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn gamma_one_is_uniform() {
        let g = grid6();
        let r = routing_probabilities(&g.graph, 1.0).unwrap();
        assert_eq!(r, RoutingTable::uniform(&g.graph));
    }

    #[test]
    fn isolated_cluster_is_config_error() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![Region::Cbd, Region::Periphery],
            vec![0, 1],
            &[(0, 1)],
            &[],
        )
        .unwrap();
        assert!(routing_probabilities(&g, 2.0).unwrap_err().is_config());
    }

    #[test]
    fn blocking() {
        let g = grid6();
        assert_eq!(block_clusters(&g.graph, &BTreeSet::new()), g.graph);
        let all: BTreeSet<usize> = (0..g.graph.len()).collect();
        assert_eq!(block_clusters(&g.graph, &all).edge_count(), 0);
        let r: BTreeSet<usize> = g
            .segment_clusters((2, 2), (3, 2))
            .unwrap()
            .into_iter()
            .collect();
        let b = block_clusters(&g.graph, &r);
        for (_, k) in b.mobility_edges() {
            assert!(!r.contains(&k));
        }
        for &k in &r {
            assert_eq!(b.out_neighbors(k), g.graph.out_neighbors(k));
        }
    }

    #[test]
    fn chain_is_closed() {
        let g = build_chain(10, 3.0).unwrap();
        for j in 0..10 {
            assert_eq!(g.out_neighbors(j).len(), 1);
            assert_eq!(g.comm_from(j).len(), 2);
        }
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn graph_invariants_enforced() {
        let centers = vec![[0.0, 0.0]; 3];
        let regions = vec![Region::VirtualEntry, Region::Study, Region::VirtualExit];
        let segs = vec![0, 1, 2];
        assert!(ClusterGraph::new(
            centers.clone(),
            regions.clone(),
            segs.clone(),
            &[(2, 1)],
            &[]
        )
        .is_err());
        assert!(ClusterGraph::new(
            centers.clone(),
            regions.clone(),
            segs.clone(),
            &[(1, 0)],
            &[]
        )
        .is_err());
        assert!(ClusterGraph::new(
            centers.clone(),
            regions.clone(),
            segs.clone(),
            &[(1, 1)],
            &[]
        )
        .is_err());
        assert!(ClusterGraph::new(
            centers.clone(),
            regions.clone(),
            segs.clone(),
            &[],
            &[(0, 1, 1.0)]
        )
        .is_err());
        assert!(
            ClusterGraph::new(centers, regions, segs, &[(0, 1), (1, 2)], &[(1, 1, 1.0)]).is_ok()
        );
    }

    #[test]
    fn json_round_trip() {
        let g = grid6().graph.with_segment_comm(3.0).unwrap();
        let back = ClusterGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        let text = g.to_json().unwrap();
        assert!(text.contains("\"mobility\"") && text.contains("\"comm\""));
    }
}
