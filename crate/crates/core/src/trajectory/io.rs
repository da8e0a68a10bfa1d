use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ClusterSequence, Position, TrajectoryRecord, Visit};
use crate::error::{Error, Result};

/// Names of the CSV columns holding each field, plus unit conversions.
/// NGSIM exports, for example, use `Vehicle_ID`, `Global_Time` (ms) and
/// `Local_X`/`Local_Y` (feet).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default = "default_vehicle")]
    pub vehicle_id: String,
    #[serde(default = "default_t")]
    pub t: String,
    #[serde(default)]
    pub x: Option<String>,
    #[serde(default)]
    pub y: Option<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    /// Multiplier turning the time column into seconds.
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Multiplier turning positions into metres.
    #[serde(default = "one")]
    pub position_scale: f64,
    /// Shift times so the earliest record is at `t = 0`.
    #[serde(default)]
    pub rebase_time: bool,
}

fn default_vehicle() -> String {
    "vehicle_id".into()
}
fn default_t() -> String {
    "t".into()
}
fn one() -> f64 {
    1.0
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            vehicle_id: default_vehicle(),
            t: default_t(),
            x: None,
            y: None,
            cluster: None,
            time_scale: 1.0,
            position_scale: 1.0,
            rebase_time: false,
        }
    }
}

impl ColumnMapping {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::config(format!("trajectory csv has no column '{name}'")))
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| {
            Error::config(format!(
                "bad {what} value in trajectory csv line {:?}",
                rec.position().map(|p| p.line())
            ))
        })
}

/// Reads trajectory samples. Without explicit `x`/`y`/`cluster` columns in
/// the mapping, a `cluster` header selects pre-assigned clusters and `x`,`y`
/// headers select positions.
pub fn read_trajectories<R: Read>(r: R, mapping: &ColumnMapping) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let id = column(&headers, &mapping.vehicle_id)?;
    let t = column(&headers, &mapping.t)?;
    let has = |name: &str| headers.iter().any(|h| h.trim() == name);
    let cluster_col = match &mapping.cluster {
        Some(c) => Some(column(&headers, c)?),
        None if mapping.x.is_none() && has("cluster") => Some(column(&headers, "cluster")?),
        None => None,
    };
    let xy = if cluster_col.is_some() {
        None
    } else {
        let x = column(&headers, mapping.x.as_deref().unwrap_or("x"))?;
        let y = column(&headers, mapping.y.as_deref().unwrap_or("y"))?;
        Some((x, y))
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vehicle_id: u64 = parse(&rec, id, "vehicle_id")?;
        let time: f64 = parse::<f64>(&rec, t, "time")? * mapping.time_scale;
        let position = match (cluster_col, xy) {
            (Some(c), _) => Position::Cluster(parse(&rec, c, "cluster")?),
            (None, Some((x, y))) => Position::Xy {
                x: parse::<f64>(&rec, x, "x")? * mapping.position_scale,
                y: parse::<f64>(&rec, y, "y")? * mapping.position_scale,
            },
            (None, None) => unreachable!("either cluster or xy columns are resolved"),
        };
        out.push(TrajectoryRecord {
            vehicle_id,
            t: time,
            position,
        });
    }
    if mapping.rebase_time {
        let t0 = out.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
        out.iter_mut().for_each(|r| r.t -= t0);
    }
    Ok(out)
}

/// Writes records as `vehicle_id,t,x,y` or `vehicle_id,t,cluster` depending
/// on the first record.
pub fn write_records<W: Write>(w: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let clustered = matches!(
        records.first().map(|r| r.position),
        Some(Position::Cluster(_))
    );
    if clustered {
        out.write_record(["vehicle_id", "t", "cluster"])?;
    } else {
        out.write_record(["vehicle_id", "t", "x", "y"])?;
    }
    for r in records {
        match r.position {
            Position::Cluster(c) if clustered => {
                out.write_record([r.vehicle_id.to_string(), r.t.to_string(), c.to_string()])?
            }
            Position::Xy { x, y } if !clustered => out.write_record([
                r.vehicle_id.to_string(),
                r.t.to_string(),
                x.to_string(),
                y.to_string(),
            ])?,
            _ => return Err(Error::config("records mix positions and cluster ids")),
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct VisitRow {
    vehicle_id: u64,
    cluster: usize,
    enter_t: f64,
    leave_t: f64,
    entry: Option<usize>,
    exit: Option<usize>,
    censored: bool,
}

/// One row per visit: `vehicle_id,cluster,enter_t,leave_t,entry,exit,censored`.
pub fn write_sequences<W: Write>(w: W, sequences: &[ClusterSequence]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in sequences {
        for v in &s.visits {
            out.serialize(VisitRow {
                vehicle_id: s.vehicle_id,
                cluster: v.cluster,
                enter_t: v.enter_t,
                leave_t: v.leave_t,
                entry: s.entry,
                exit: s.exit,
                censored: s.censored,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads the format of [`write_sequences`]; rows of one vehicle must be
/// contiguous and in time order.
pub fn read_sequences<R: Read>(r: R) -> Result<Vec<ClusterSequence>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<ClusterSequence> = Vec::new();
    for row in rdr.deserialize::<VisitRow>() {
        let row = row?;
        let visit = Visit {
            cluster: row.cluster,
            enter_t: row.enter_t,
            leave_t: row.leave_t,
        };
        match out.last_mut() {
            Some(s) if s.vehicle_id == row.vehicle_id => {
                if s.last_leave().is_some_and(|t| visit.enter_t < t) {
                    return Err(Error::config(format!(
                        "visits of vehicle {} are out of order",
                        row.vehicle_id
                    )));
                }
                s.visits.push(visit)
            }
            _ => out.push(ClusterSequence {
                vehicle_id: row.vehicle_id,
                entry: row.entry,
                visits: vec![visit],
                exit: row.exit,
                censored: row.censored,
            }),
        }
    }
    Ok(out)
}
