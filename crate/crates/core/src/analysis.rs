//! Metrics over propagation series: informed fraction, deviation between two
//! series, information reach, congestion and per-segment export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{PropagationSeries, Units};
use crate::topology::ClusterGraph;

/// What the informed mass is divided by.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Denominator {
    /// Vehicles currently in the clusters of the series.
    Occupancy,
    /// The series' fixed total, reservoirs included.
    Total,
}

/// `rho(t)` recomputed from per-cluster levels.
pub fn informed_fraction(series: &PropagationSeries, denominator: Denominator) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("series has no samples".into()));
    }
    (0..series.len())
        .map(|t| {
            let informed: f64 = series.informed[t].iter().sum();
            let total = match denominator {
                Denominator::Occupancy => informed + series.susceptible[t].iter().sum::<f64>(),
                Denominator::Total => series.total,
            };
            if total > 0.0 {
                Ok(informed / total)
            } else {
                Err(Error::config(format!(
                    "no vehicles at t = {}",
                    series.times[t]
                )))
            }
        })
        .collect()
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => values[i],
        Err(i) => {
            let (t0, t1) = (times[i - 1], times[i]);
            let w = (t - t0) / (t1 - t0);
            values[i - 1] + w * (values[i] - values[i - 1])
        }
    }
}

/// Largest `|rho_a(t) - rho_b(t)|`. When the grids differ, both `rho`
/// curves are interpolated linearly onto the union of their sample instants
/// inside the common time range.
pub fn max_deviation(a: &PropagationSeries, b: &PropagationSeries) -> Result<f64> {
    max_curve_deviation(&a.times, &a.rho, &b.times, &b.rho)
}

/// [`max_deviation`] for bare curves.
pub fn max_curve_deviation(ta: &[f64], ya: &[f64], tb: &[f64], yb: &[f64]) -> Result<f64> {
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Empty("cannot compare an empty series".into()));
    }
    if ta == tb {
        return Ok(ya
            .iter()
            .zip(yb)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max));
    }
    let lo = ta[0].max(tb[0]);
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    if lo > hi {
        return Err(Error::Empty("series do not overlap in time".into()));
    }
    let mut grid: Vec<f64> = ta
        .iter()
        .chain(tb)
        .copied()
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid
        .iter()
        .map(|&t| (interpolate(ta, ya, t) - interpolate(tb, yb, t)).abs())
        .fold(0.0, f64::max))
}

/// Multiplier turning the series' levels into vehicle counts.
fn count_scale(series: &PropagationSeries, n: Option<f64>) -> Result<f64> {
    match (series.units, n) {
        (Units::Counts, _) => Ok(1.0),
        (Units::Fractions, Some(n)) if n > 0.0 => Ok(n),
        (Units::Fractions, _) => Err(Error::config(
            "a fractional series needs the vehicle total N",
        )),
    }
}

/// Fraction of non-virtual clusters holding at least `threshold` informed
/// vehicles at each sample. Fractional series are scaled by `n` first.
pub fn cluster_reach(
    series: &PropagationSeries,
    g: &ClusterGraph,
    threshold: f64,
    n: Option<f64>,
) -> Result<Vec<f64>> {
    let scale = count_scale(series, n)?;
    let study = g.study_clusters();
    if study.is_empty() {
        return Err(Error::config("graph has no study clusters"));
    }
    Ok(series
        .informed
        .iter()
        .map(|row| {
            study
                .iter()
                .filter(|&&j| row[j] * scale >= threshold)
                .count() as f64
                / study.len() as f64
        })
        .collect())
}

/// How a cluster counts as congested relative to its baseline occupancy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CongestionRule {
    /// Occupancy above `baseline * (1 + pct / 100)`.
    Percent(f64),
    /// Occupancy above `baseline + delta` vehicles.
    Absolute(f64),
}

/// Fraction of non-virtual clusters whose occupancy exceeds the rule's
/// threshold at each sample. `baseline` is in vehicles.
pub fn congestion_fraction(
    series: &PropagationSeries,
    g: &ClusterGraph,
    baseline: &[f64],
    rule: CongestionRule,
    n: Option<f64>,
) -> Result<Vec<f64>> {
    let scale = count_scale(series, n)?;
    if baseline.len() != g.len() {
        return Err(Error::config("baseline does not match the graph"));
    }
    let study = g.study_clusters();
    if study.is_empty() {
        return Err(Error::config("graph has no study clusters"));
    }
    let limit: Vec<f64> = baseline
        .iter()
        .map(|&b| match rule {
            CongestionRule::Percent(p) => b * (1.0 + p / 100.0),
            CongestionRule::Absolute(d) => b + d,
        })
        .collect();
    Ok((0..series.len())
        .map(|t| {
            study
                .iter()
                .filter(|&&j| series.occupancy(t, j) * scale > limit[j])
                .count() as f64
                / study.len() as f64
        })
        .collect())
}

/// Share of the vehicles present that sit in `clusters`, at each sample.
pub fn occupancy_share(series: &PropagationSeries, clusters: &[usize]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("series has no samples".into()));
    }
    if clusters.iter().any(|&j| j >= series.clusters()) {
        return Err(Error::config("cluster index outside the series"));
    }
    Ok((0..series.len())
        .map(|t| {
            let all: f64 = (0..series.clusters()).map(|j| series.occupancy(t, j)).sum();
            let part: f64 = clusters.iter().map(|&j| series.occupancy(t, j)).sum();
            if all > 0.0 {
                part / all
            } else {
                0.0
            }
        })
        .collect())
}

/// One road segment at one instant, ready for plotting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentRecord {
    pub segment_id: usize,
    pub x: f64,
    pub y: f64,
    pub informed_count: f64,
    pub total_count: f64,
    pub thickness_informed: f64,
    pub thickness_total: f64,
}

/// Aggregates the clusters of each segment at the sample nearest `t`.
/// Thickness is the count times `unit_width`.
pub fn export_geographic(
    series: &PropagationSeries,
    g: &ClusterGraph,
    t: f64,
    unit_width: f64,
    n: Option<f64>,
) -> Result<Vec<SegmentRecord>> {
    if series.is_empty() {
        return Err(Error::Empty("series has no samples".into()));
    }
    let (first, last) = (series.times[0], series.times[series.len() - 1]);
    if t < first - 1e-9 || t > last + 1e-9 {
        return Err(Error::config(format!(
            "t = {t} is outside the series range [{first}, {last}]"
        )));
    }
    let scale = count_scale(series, n)?;
    let idx = (0..series.len())
        .min_by(|&a, &b| {
            (series.times[a] - t)
                .abs()
                .total_cmp(&(series.times[b] - t).abs())
        })
        .expect("non-empty");
    let mut acc: BTreeMap<usize, (f64, f64, f64, f64, usize)> = BTreeMap::new();
    for j in g.study_clusters() {
        let e = acc
            .entry(g.segment_of(j))
            .or_insert((0.0, 0.0, 0.0, 0.0, 0));
        let c = g.center(j);
        e.0 += series.informed[idx][j] * scale;
        e.1 += series.occupancy(idx, j) * scale;
        e.2 += c[0];
        e.3 += c[1];
        e.4 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(segment_id, (inf, tot, x, y, k))| SegmentRecord {
            segment_id,
            x: x / k as f64,
            y: y / k as f64,
            informed_count: inf,
            total_count: tot,
            thickness_informed: inf * unit_width,
            thickness_total: tot * unit_width,
        })
        .collect())
}

pub fn write_segments<W: Write>(w: W, records: &[SegmentRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// First sample at which curve `b` rises above curve `a` after having been
/// at or below it, i.e. the instant `b` overtakes `a`.
pub fn crossover_time(times: &[f64], a: &[f64], b: &[f64]) -> Option<f64> {
    let mut was_behind = false;
    for ((&t, &x), &y) in times.iter().zip(a).zip(b) {
        if y <= x {
            was_behind = true;
        } else if was_behind {
            return Some(t);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_grid, GridSpec, Region};

    fn series(
        times: Vec<f64>,
        inf: Vec<Vec<f64>>,
        sus: Vec<Vec<f64>>,
        total: f64,
    ) -> PropagationSeries {
        PropagationSeries::new(times, inf, sus, Units::Counts, total).unwrap()
    }

    #[test]
    fn fraction_variants() {
        let s = series(
            vec![0.0, 1.0],
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![vec![3.0, 3.0], vec![2.0, 2.0]],
            10.0,
        );
        assert_eq!(
            informed_fraction(&s, Denominator::Occupancy).unwrap(),
            vec![0.25, 0.5]
        );
        assert_eq!(
            informed_fraction(&s, Denominator::Total).unwrap(),
            vec![0.2, 0.4]
        );
        let empty = series(vec![0.0], vec![vec![0.0]], vec![vec![0.0]], 1.0);
        assert!(informed_fraction(&empty, Denominator::Occupancy).is_err());
    }

    #[test]
    fn deviation_on_shared_and_different_grids() {
        let a = series(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![4.0]; 3],
            4.0,
        );
        assert_eq!(max_deviation(&a, &a).unwrap(), 0.0);
        let b = series(
            vec![0.0, 2.0],
            vec![vec![0.0], vec![4.0]],
            vec![vec![4.0]; 2],
            4.0,
        );
        // b interpolates to rho = 0.5 at t = 1, a has 0.25; at t = 2, 1.0 vs 0.5
        assert_eq!(max_deviation(&a, &b).unwrap(), 0.5);
        assert_eq!(
            max_deviation(&b, &a).unwrap(),
            max_deviation(&a, &b).unwrap()
        );
        let c = series(vec![5.0, 6.0], vec![vec![0.0]; 2], vec![vec![1.0]; 2], 1.0);
        assert!(max_deviation(&a, &c).is_err());
    }

    #[test]
    fn reach_and_congestion() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]],
            vec![
                Region::Periphery,
                Region::Periphery,
                Region::Periphery,
                Region::VirtualExit,
            ],
            vec![0, 0, 1, 2],
            &[(0, 1), (1, 2), (2, 3)],
            &[],
        )
        .unwrap();
        let s = series(
            vec![0.0, 1.0],
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![3.0, 1.0, 1.0, 5.0]],
            vec![vec![9.0, 10.0, 10.0, 0.0], vec![9.0, 10.25, 20.0, 0.0]],
            30.0,
        );
        assert_eq!(
            cluster_reach(&s, &g, 1.0, None).unwrap(),
            vec![1.0 / 3.0, 1.0]
        );
        let base = vec![10.0, 10.0, 10.0, 0.0];
        let pct = congestion_fraction(&s, &g, &base, CongestionRule::Percent(15.0), None).unwrap();
        // occupancies 12, 11.25, 21 against 11.5 (15%) and 11 (+1)
        assert_eq!(pct, vec![0.0, 2.0 / 3.0]);
        let abs = congestion_fraction(&s, &g, &base, CongestionRule::Absolute(1.0), None).unwrap();
        assert_eq!(abs, vec![0.0, 1.0]);
        let same = series(vec![0.0], vec![vec![0.0; 4]], vec![base.clone()], 30.0);
        assert_eq!(
            congestion_fraction(&same, &g, &base, CongestionRule::Percent(15.0), None).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn fractional_reach_needs_n() {
        let g = ClusterGraph::new(vec![[0.0, 0.0]], vec![Region::Periphery], vec![0], &[], &[])
            .unwrap();
        let s = PropagationSeries::new(
            vec![0.0],
            vec![vec![0.01]],
            vec![vec![0.99]],
            Units::Fractions,
            1.0,
        )
        .unwrap();
        assert!(cluster_reach(&s, &g, 1.0, None).is_err());
        assert_eq!(cluster_reach(&s, &g, 1.0, Some(100.0)).unwrap(), vec![1.0]);
        assert_eq!(cluster_reach(&s, &g, 1.0, Some(50.0)).unwrap(), vec![0.0]);
    }

    #[test]
    fn geographic_export_on_grid() {
        let grid = build_grid(&GridSpec {
            avenues: 6,
            streets: 6,
            cbd: None,
            allow_u_turns: false,
        })
        .unwrap();
        let g = &grid.graph;
        let mut inf = vec![0.0; g.len()];
        inf[0] = 7.0;
        let s = series(vec![0.0], vec![inf], vec![vec![100.0; g.len()]], 12_007.0);
        let recs = export_geographic(&s, g, 0.0, 0.01, None).unwrap();
        assert_eq!(recs.len(), 60);
        assert!(recs.iter().all(|r| r.total_count >= 200.0));
        assert_eq!(recs.iter().map(|r| r.total_count).sum::<f64>(), 12_007.0);
        assert!((recs[0].thickness_informed - 0.07).abs() < 1e-15);
        assert!(export_geographic(&s, g, 5.0, 1.0, None).is_err());
        let mut buf = Vec::new();
        write_segments(&mut buf, &recs).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(
            "segment_id,x,y,informed_count,total_count,thickness_informed,thickness_total\n"
        ));
    }

    #[test]
    fn crossover() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(
            crossover_time(&t, &[0.1, 0.3, 0.5, 0.7], &[0.1, 0.2, 0.6, 0.9]),
            Some(2.0)
        );
        assert_eq!(
            crossover_time(&t, &[0.1, 0.3, 0.5, 0.7], &[0.1, 0.3, 0.5, 0.7]),
            None
        );
    }
}
