use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Vehicle counts per cluster.
    Counts,
    /// Fractions of the total population per cluster.
    Fractions,
}

/// Per-cluster informed / non-informed levels sampled on a time grid.
///
/// `rho[t] = sum_j informed[t][j] / total`, where `total` is the whole
/// population (`N` for counts, `1` for fractions), reservoirs included.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationSeries {
    pub times: Vec<f64>,
    pub informed: Vec<Vec<f64>>,
    pub susceptible: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub units: Units,
    pub total: f64,
}

impl PropagationSeries {
    pub fn new(
        times: Vec<f64>,
        informed: Vec<Vec<f64>>,
        susceptible: Vec<Vec<f64>>,
        units: Units,
        total: f64,
    ) -> Result<Self> {
        if times.len() != informed.len() || times.len() != susceptible.len() {
            return Err(Error::config("series rows do not match the time grid"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("series times must be strictly increasing"));
        }
        if !(total > 0.0) {
            return Err(Error::config("series total must be positive"));
        }
        let rho = informed
            .iter()
            .map(|row| row.iter().sum::<f64>() / total)
            .collect();
        Ok(Self {
            times,
            informed,
            susceptible,
            rho,
            units,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn clusters(&self) -> usize {
        self.informed.first().map_or(0, Vec::len)
    }

    /// Total vehicles (or mass) in cluster `j` at sample `t`.
    pub fn occupancy(&self, t: usize, j: usize) -> f64 {
        self.informed[t][j] + self.susceptible[t][j]
    }

    /// Converts to counts for a population of `n` vehicles (no-op on counts).
    pub fn to_counts(&self, n: f64) -> Self {
        match self.units {
            Units::Counts => self.clone(),
            Units::Fractions => {
                let scale = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    m.iter()
                        .map(|r| r.iter().map(|v| v * n).collect())
                        .collect()
                };
                Self {
                    times: self.times.clone(),
                    informed: scale(&self.informed),
                    susceptible: scale(&self.susceptible),
                    rho: self.rho.clone(),
                    units: Units::Counts,
                    total: self.total * n,
                }
            }
        }
    }

    /// Writes `t,rho,I_1..I_J,S_1..S_J`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let j = self.clusters();
        let mut header = vec!["t".to_string(), "rho".to_string()];
        header.extend((1..=j).map(|c| format!("I_{c}")));
        header.extend((1..=j).map(|c| format!("S_{c}")));
        out.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = Vec::with_capacity(2 + 2 * j);
            row.push(self.times[t].to_string());
            row.push(self.rho[t].to_string());
            row.extend(self.informed[t].iter().map(f64::to_string));
            row.extend(self.susceptible[t].iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Reads a series written by [`write_csv`](Self::write_csv). The stored
    /// `rho` column is kept as-is.
    pub fn read_csv<R: Read>(r: R, units: Units, total: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2
            || &headers[0] != "t"
            || &headers[1] != "rho"
            || (headers.len() - 2) % 2 != 0
        {
            return Err(Error::config(
                "series csv must start with t,rho and hold I/S column pairs",
            ));
        }
        let j = (headers.len() - 2) / 2;
        let (mut times, mut rho, mut informed, mut susceptible) = (vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::config(format!("bad number in series csv: {e}")))?;
            times.push(vals[0]);
            rho.push(vals[1]);
            informed.push(vals[2..2 + j].to_vec());
            susceptible.push(vals[2 + j..].to_vec());
        }
        let mut s = Self::new(times, informed, susceptible, units, total)?;
        s.rho = rho;
        Ok(s)
    }
}

/// Evenly spaced sample instants `0, dt, 2 dt, ...` up to and including the
/// horizon (the last instant is clamped to the horizon).
pub fn sample_grid(horizon: f64, sample_dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(Error::config(format!(
            "sample_dt must be positive, got {sample_dt}"
        )));
    }
    let steps = (horizon / sample_dt + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * sample_dt).collect();
    if horizon - times[times.len() - 1] > 1e-9 * horizon.max(1.0) {
        times.push(horizon);
    } else {
        let last = times.len() - 1;
        times[last] = times[last].min(horizon);
    }
    Ok(times)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_horizon() {
        assert_eq!(sample_grid(3.0, 1.0).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sample_grid(2.5, 1.0).unwrap(), vec![0.0, 1.0, 2.0, 2.5]);
        assert_eq!(sample_grid(831.7, 1.0).unwrap().len(), 833);
        assert!(sample_grid(0.0, 1.0).is_err());
        assert!(sample_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let s = PropagationSeries::new(
            vec![0.0, 1.0],
            vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![2.0, 1.0], vec![1.0, 1.0]],
            Units::Counts,
            4.0,
        )
        .unwrap();
        assert_eq!(s.rho, vec![0.25, 0.5]);
        let text = s.to_csv_string().unwrap();
        assert!(text.starts_with("t,rho,I_1,I_2,S_1,S_2\n"));
        let back = PropagationSeries::read_csv(text.as_bytes(), Units::Counts, 4.0).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_unsorted_times() {
        assert!(PropagationSeries::new(
            vec![1.0, 1.0],
            vec![vec![0.0]; 2],
            vec![vec![1.0]; 2],
            Units::Counts,
            1.0
        )
        .is_err());
    }
}
