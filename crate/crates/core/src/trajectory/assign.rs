use serde::{Deserialize, Serialize};

use super::{ClusterSequence, Position, TrajectoryRecord, Visit};
use crate::error::{Error, Result};
use crate::topology::{ClusterGraph, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Geometry of one cluster's region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// Simple polygon given by its vertices in order.
    Polygon(Vec<[f64; 2]>),
    /// Interval `[from, to)` along a road axis, optionally limited laterally
    /// (e.g. to a set of lanes).
    Band {
        axis: Axis,
        from: f64,
        to: f64,
        #[serde(default)]
        lateral: Option<[f64; 2]>,
    },
}

impl RegionShape {
    /// Distance from `p` to the region's boundary, or `None` if `p` is outside.
    pub fn depth(&self, p: [f64; 2]) -> Option<f64> {
        match self {
            RegionShape::Polygon(pts) => {
                if !point_in_polygon(pts, p) {
                    return None;
                }
                let n = pts.len();
                Some(
                    (0..n)
                        .map(|i| segment_distance(p, pts[i], pts[(i + 1) % n]))
                        .fold(f64::INFINITY, f64::min),
                )
            }
            RegionShape::Band {
                axis,
                from,
                to,
                lateral,
            } => {
                let (along, across) = match axis {
                    Axis::X => (p[0], p[1]),
                    Axis::Y => (p[1], p[0]),
                };
                if along < *from || along >= *to {
                    return None;
                }
                let mut d = (along - from).min(to - along);
                if let Some([lo, hi]) = lateral {
                    if across < *lo || across > *hi {
                        return None;
                    }
                    d = d.min(across - lo).min(hi - across);
                }
                Some(d)
            }
        }
    }
}

fn point_in_polygon(pts: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub cluster: usize,
    #[serde(flatten)]
    pub shape: RegionShape,
}

/// Region definitions as read from the region JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub regions: Vec<RegionSpec>,
    /// Metres a position must lie inside a new region before a move is
    /// registered.
    #[serde(default = "default_hysteresis")]
    pub hysteresis: f64,
}

fn default_hysteresis() -> f64 {
    0.5
}

impl RegionSet {
    pub fn new(regions: Vec<RegionSpec>) -> Self {
        Self {
            regions,
            hysteresis: default_hysteresis(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if !(set.hysteresis >= 0.0) {
            return Err(Error::config("hysteresis must be non-negative"));
        }
        for r in &set.regions {
            if let RegionShape::Polygon(p) = &r.shape {
                if p.len() < 3 {
                    return Err(Error::config(format!(
                        "region of cluster {} has fewer than 3 vertices",
                        r.cluster
                    )));
                }
            }
        }
        Ok(set)
    }

    /// First region containing `p`, with its depth.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, f64)> {
        self.regions
            .iter()
            .find_map(|r| r.shape.depth(p).map(|d| (r.cluster, d)))
    }
}

#[derive(Clone, Debug, Default)]
pub struct AssignOptions<'a> {
    /// Used to resolve virtual entry/exit clusters.
    pub graph: Option<&'a ClusterGraph>,
    /// Observation window; defaults to the span of the records.
    pub window: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    pub sequences: Vec<ClusterSequence>,
    /// Position samples outside every region; excluded.
    pub outside_samples: usize,
    /// Vehicles with no sample inside the study area; excluded.
    pub dropped_vehicles: usize,
}

const TIME_EPS: f64 = 1e-9;

/// Maps position samples to clusters and collapses them into visits.
///
/// A vehicle stays in its current cluster until a sample lies at least
/// `regions.hysteresis` inside another region. Records that already carry a
/// cluster id bypass geometry; ids of virtual entry/exit clusters mark where
/// the vehicle came from or went to.
pub fn assign_clusters(
    records: &[TrajectoryRecord],
    regions: &RegionSet,
    opts: &AssignOptions,
) -> Result<Assignment> {
    let mut out = Assignment::default();
    if records.is_empty() {
        return Ok(out);
    }
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.t.total_cmp(&b.t)));
    for w in sorted.windows(2) {
        if w[0].vehicle_id == w[1].vehicle_id && w[1].t <= w[0].t {
            return Err(Error::config(format!(
                "vehicle {} has two samples at t = {}",
                w[0].vehicle_id, w[0].t
            )));
        }
    }
    let (start, end) = opts.window.unwrap_or_else(|| {
        let lo = sorted.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
        let hi = sorted.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });

    let mut i = 0;
    while i < sorted.len() {
        let id = sorted[i].vehicle_id;
        let mut j = i;
        while j < sorted.len() && sorted[j].vehicle_id == id {
            j += 1;
        }
        match assign_vehicle(
            &sorted[i..j],
            regions,
            opts.graph,
            start,
            end,
            &mut out.outside_samples,
        )? {
            Some(seq) => out.sequences.push(seq),
            None => out.dropped_vehicles += 1,
        }
        i = j;
    }
    Ok(out)
}

fn assign_vehicle(
    samples: &[&TrajectoryRecord],
    regions: &RegionSet,
    graph: Option<&ClusterGraph>,
    start: f64,
    end: f64,
    outside: &mut usize,
) -> Result<Option<ClusterSequence>> {
    let region_of = |c: usize| graph.map(|g| g.region(c));
    let mut seq = ClusterSequence {
        vehicle_id: samples[0].vehicle_id,
        entry: None,
        visits: Vec::new(),
        exit: None,
        censored: false,
    };
    let mut last_t = samples[0].t;
    for r in samples {
        let (cluster, depth) = match r.position {
            Position::Cluster(c) => {
                if let Some(g) = graph {
                    if c >= g.len() {
                        return Err(Error::config(format!(
                            "record refers to unknown cluster {c}"
                        )));
                    }
                }
                match region_of(c) {
                    Some(Region::VirtualEntry) => {
                        if seq.visits.is_empty() {
                            seq.entry = Some(c);
                        }
                        continue;
                    }
                    Some(Region::VirtualExit) => {
                        if let Some(v) = seq.visits.last_mut() {
                            v.leave_t = r.t;
                            seq.exit = Some(c);
                        }
                        last_t = r.t;
                        break;
                    }
                    _ => (c, f64::INFINITY),
                }
            }
            Position::Xy { x, y } => match regions.locate([x, y]) {
                Some(hit) => hit,
                None => {
                    *outside += 1;
                    continue;
                }
            },
        };
        last_t = r.t;
        match seq.visits.last_mut() {
            None => seq.visits.push(Visit {
                cluster,
                enter_t: r.t,
                leave_t: r.t,
            }),
            Some(v) if v.cluster == cluster => v.leave_t = r.t,
            Some(v) => {
                if depth >= regions.hysteresis {
                    v.leave_t = r.t;
                    seq.visits.push(Visit {
                        cluster,
                        enter_t: r.t,
                        leave_t: r.t,
                    });
                } else {
                    v.leave_t = r.t;
                }
            }
        }
    }
    let Some(first) = seq.visits.first().copied() else {
        return Ok(None);
    };
    let last = *seq.visits.last().expect("non-empty");
    if seq.exit.is_none() {
        if last_t >= end - TIME_EPS {
            seq.censored = true;
        } else if let Some(g) = graph {
            seq.exit = g
                .out_neighbors(last.cluster)
                .iter()
                .copied()
                .find(|&k| g.region(k) == Region::VirtualExit);
        }
    }
    if seq.entry.is_none() && first.enter_t > start + TIME_EPS {
        if let Some(g) = graph {
            seq.entry = g
                .in_neighbors(first.cluster)
                .iter()
                .copied()
                .find(|&k| g.region(k) == Region::VirtualEntry);
        }
    }
    Ok(Some(seq))
}
