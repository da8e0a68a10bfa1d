//! Fluid limit of the chain: the drift field and its numerical integration.
//!
//! State vectors are stacked as `[I_1..I_J, S_1..S_J]` (fractions of `N`).
//! The default integrator is the Dormand–Prince 5(4) pair with its
//! fourth-order dense output; a fixed-step classical RK4 is kept as a
//! bit-reproducible baseline.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::ctmc::SystemState;
use crate::error::{Error, Result};
use crate::rates::{EdgeTable, InflowMode, MobilityModel, Occupancy, RateLaw, VehicleClass};
use crate::series::{sample_grid, PropagationSeries, Units};
use crate::topology::{ClusterGraph, Region, RoutingTable};
use crate::trajectory::RateTable;

/// Real-valued informed / non-informed mass per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub informed: Vec<f64>,
    pub susceptible: Vec<f64>,
}

impl FluidState {
    pub fn new(informed: Vec<f64>, susceptible: Vec<f64>) -> Result<Self> {
        if informed.len() != susceptible.len() {
            return Err(Error::config(
                "informed and non-informed vectors differ in length",
            ));
        }
        if informed
            .iter()
            .chain(&susceptible)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::config(
                "fluid state entries must be finite and non-negative",
            ));
        }
        Ok(Self {
            informed,
            susceptible,
        })
    }

    /// Fractions of the chain state's population.
    pub fn from_counts(s: &SystemState) -> Self {
        let n = s.total() as f64;
        Self {
            informed: s.informed.iter().map(|&v| v as f64 / n).collect(),
            susceptible: s.susceptible.iter().map(|&v| v as f64 / n).collect(),
        }
    }

    pub fn clusters(&self) -> usize {
        self.informed.len()
    }

    pub fn mass(&self) -> f64 {
        self.informed.iter().sum::<f64>() + self.susceptible.iter().sum::<f64>()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.informed.clone();
        v.extend_from_slice(&self.susceptible);
        v
    }

    pub fn from_slice(y: &[f64]) -> Self {
        let j = y.len() / 2;
        Self {
            informed: y[..j].to_vec(),
            susceptible: y[j..].to_vec(),
        }
    }
}

impl Occupancy for FluidState {
    #[inline]
    fn occupancy(&self, j: usize) -> f64 {
        self.informed[j] + self.susceptible[j]
    }
}

/// Occupancy read straight out of a stacked state vector.
struct Stacked<'a>(&'a [f64], usize);

impl Occupancy for Stacked<'_> {
    #[inline]
    fn occupancy(&self, j: usize) -> f64 {
        self.0[j] + self.0[self.1 + j]
    }
}

/// Graph, rates and communication pairs compiled for repeated drift calls.
#[derive(Clone, Debug)]
pub struct FluidSystem {
    clusters: usize,
    table: EdgeTable,
    comm: Vec<(usize, usize, f64)>,
}

impl FluidSystem {
    pub fn new(g: &ClusterGraph, model: &MobilityModel, routing: &RoutingTable) -> Result<Self> {
        Ok(Self {
            clusters: g.len(),
            table: EdgeTable::new(g, model, routing)?,
            comm: g.comm_pairs().collect(),
        })
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    /// Writes the drift at stacked state `y` into `dy`.
    pub fn drift_into(&self, y: &[f64], dy: &mut [f64]) {
        let j_count = self.clusters;
        debug_assert_eq!(y.len(), 2 * j_count);
        dy.iter_mut().for_each(|v| *v = 0.0);
        let occ = Stacked(y, j_count);
        for e in 0..self.table.len() {
            let (j, k) = self.table.edge(e);
            let fi = self.table.rate(e, VehicleClass::Informed, &occ) * y[j];
            dy[j] -= fi;
            dy[k] += fi;
            let fs = self.table.rate(e, VehicleClass::Susceptible, &occ) * y[j_count + j];
            dy[j_count + j] -= fs;
            dy[j_count + k] += fs;
        }
        for &(j, k, beta) in &self.comm {
            let flow = beta * y[j] * y[j_count + k];
            dy[k] += flow;
            dy[j_count + k] -= flow;
        }
    }

    pub fn drift(&self, y: &[f64]) -> Vec<f64> {
        let mut dy = vec![0.0; y.len()];
        self.drift_into(y, &mut dy);
        dy
    }
}

/// Drift of the fluid limit at `x`, stacked as `[dI; dS]`.
pub fn drift(
    x: &FluidState,
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
) -> Result<Vec<f64>> {
    if x.clusters() != g.len() {
        return Err(Error::config("fluid state does not match the graph"));
    }
    Ok(FluidSystem::new(g, model, routing)?.drift(&x.to_vec()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Dormand–Prince 5(4) with step control on a relative/absolute tolerance.
    Adaptive,
    /// Classical RK4 with a fixed step, shortened to land on sample instants.
    FixedRk4 { dt: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub tol: f64,
    pub method: Method,
    /// Abort after this many attempted steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            method: Method::Adaptive,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn fixed(dt: f64) -> Self {
        Self {
            method: Method::FixedRk4 { dt },
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Most negative component seen at any output sample before clipping.
    pub min_component: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub series: PropagationSeries,
    pub stats: SolverStats,
}

/// Integrates from `x0` and samples at `0, sample_dt, ..., horizon`.
/// `rho` is normalised by the initial total mass.
pub fn integrate(
    x0: &FluidState,
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
    horizon: f64,
    sample_dt: f64,
    opts: &OdeOptions,
) -> Result<PropagationSeries> {
    let sys = FluidSystem::new(g, model, routing)?;
    let times = sample_grid(horizon, sample_dt)?;
    Ok(solve(&sys, x0, &times, opts)?.series)
}

/// Integrates a compiled system and samples at the given instants, which must
/// start at 0 and increase strictly.
pub fn solve(
    sys: &FluidSystem,
    x0: &FluidState,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Solution> {
    if x0.clusters() != sys.clusters {
        return Err(Error::config("fluid state does not match the graph"));
    }
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::config(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("sample times must start at 0 and increase"));
    }
    let total = x0.mass();
    if !(total > 0.0) {
        return Err(Error::config("initial state has no mass"));
    }
    let y0 = x0.to_vec();
    let (rows, mut stats) = match opts.method {
        Method::Adaptive => dopri5(sys, &y0, times, opts)?,
        Method::FixedRk4 { dt } => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!(
                    "fixed step must be positive, got {dt}"
                )));
            }
            rk4(sys, &y0, times, dt)?
        }
    };
    let j = sys.clusters;
    let mut informed = Vec::with_capacity(rows.len());
    let mut susceptible = Vec::with_capacity(rows.len());
    let mut min_component = 0.0f64;
    for mut y in rows {
        for v in y.iter_mut() {
            min_component = min_component.min(*v);
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        susceptible.push(y.split_off(j));
        informed.push(y);
    }
    if min_component < -1e-9 {
        warn!("fluid state dipped to {min_component:e} before clipping");
    }
    stats.min_component = min_component;
    let series = PropagationSeries::new(
        times.to_vec(),
        informed,
        susceptible,
        Units::Fractions,
        total,
    )?;
    Ok(Solution { series, stats })
}

// Dormand–Prince 5(4) tableau. The drift does not depend on time, so the
// stage nodes are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn integration_error(t: f64, reason: impl Into<String>, y: &[f64]) -> Error {
    Error::Integration {
        t,
        reason: reason.into(),
        state: y.to_vec(),
    }
}

fn scaled_rms(v: &[f64], y: &[f64], tol: f64) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(e, yi)| {
            let sc = tol + tol * yi.abs();
            (e / sc).powi(2)
        })
        .sum();
    (sum / v.len() as f64).sqrt()
}

/// Starting step from the usual two-derivative-estimate heuristic.
fn initial_step(sys: &FluidSystem, y0: &[f64], f0: &[f64], tol: f64, span: f64) -> f64 {
    let d0 = scaled_rms(y0, y0, tol);
    let d1 = scaled_rms(f0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let f1 = sys.drift(&y1);
    let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&df, y0, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

type Rows = (Vec<Vec<f64>>, SolverStats);

fn dopri5(sys: &FluidSystem, y0: &[f64], times: &[f64], opts: &OdeOptions) -> Result<Rows> {
    let n = y0.len();
    let tol = opts.tol;
    let t_end = *times.last().expect("non-empty sample grid");
    let mut rows = Vec::with_capacity(times.len());
    rows.push(y0.to_vec());
    let mut stats = SolverStats::default();
    if times.len() == 1 {
        return Ok((rows, stats));
    }

    let mut y = y0.to_vec();
    let mut k1 = sys.drift(&y);
    stats.evaluations += 1;
    let mut h = initial_step(sys, &y, &k1, tol, t_end);
    stats.evaluations += 1;
    let mut t = 0.0;
    let mut next = 1;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut just_rejected = false;

    while next < times.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(integration_error(t, "step budget exhausted", &y));
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(integration_error(
                t,
                format!("step size underflow (h = {h:e})"),
                &y,
            ));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.drift_into(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.drift_into(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.drift_into(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.drift_into(&tmp, &mut k5);
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.drift_into(&tmp, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.drift_into(&y_new, &mut k7);
        stats.evaluations += 6;

        let mut sum = 0.0;
        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol + tol * y[i].abs().max(y_new[i].abs());
            sum += (err[i] / sc).powi(2);
        }
        let e = (sum / n as f64).sqrt();
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            just_rejected = true;
            continue;
        }

        if e <= 1.0 {
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };
            while next < times.len() && times[next] <= t_new {
                let ts = times[next];
                if ts == t_new {
                    rows.push(y_new.clone());
                } else {
                    let s = (ts - t) / h;
                    let s1 = 1.0 - s;
                    let row = (0..n)
                        .map(|i| {
                            let ydiff = y_new[i] - y[i];
                            let bspl = h * k1[i] - ydiff;
                            let c3 = ydiff - h * k7[i] - bspl;
                            let c4 = h
                                * (D1 * k1[i]
                                    + D3 * k3[i]
                                    + D4 * k4[i]
                                    + D5 * k5[i]
                                    + D6 * k6[i]
                                    + D7 * k7[i]);
                            y[i] + s * (ydiff + s1 * (bspl + s * (c3 + s1 * c4)))
                        })
                        .collect();
                    rows.push(row);
                }
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = if e == 0.0 { 10.0 } else { 0.9 * e.powf(-0.2) };
            fac = fac.clamp(0.2, 10.0);
            if just_rejected {
                fac = fac.min(1.0);
            }
            just_rejected = false;
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * e.powf(-0.2)).max(0.2);
            just_rejected = true;
        }
    }
    Ok((rows, stats))
}

fn rk4(sys: &FluidSystem, y0: &[f64], times: &[f64], dt: f64) -> Result<Rows> {
    let n = y0.len();
    let mut rows = Vec::with_capacity(times.len());
    rows.push(y0.to_vec());
    let mut stats = SolverStats::default();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            sys.drift_into(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            sys.drift_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            sys.drift_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            sys.drift_into(&tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            stats.accepted += 1;
            stats.evaluations += 4;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(integration_error(w[1], "non-finite state", &y));
        }
        rows.push(y.clone());
    }
    Ok((rows, stats))
}

/// Informed seeding of the reservoir of an open system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSeed {
    /// Fraction of entering vehicles that carry the message.
    pub informed_fraction: f64,
}

/// Initial state and tabulated model for an open study area fed by virtual
/// entry clusters.
///
/// All mass starts in the entry clusters, shared among them in proportion to
/// their total entry flow, so every reservoir would drain at the same time
/// under constant inflow. Study and exit clusters start empty.
pub fn open_system_extend(
    g: &ClusterGraph,
    rates: &RateTable,
    seed: &ReservoirSeed,
    inflow: InflowMode,
) -> Result<(FluidState, MobilityModel)> {
    let f = seed.informed_fraction;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::config(format!(
            "informed fraction must lie in [0, 1], got {f}"
        )));
    }
    let entries: Vec<usize> = (0..g.len())
        .filter(|&j| g.region(j) == Region::VirtualEntry)
        .collect();
    if entries.is_empty() {
        return Err(Error::config(
            "open system needs at least one virtual entry cluster",
        ));
    }
    let table = rates.tabulated(g, inflow)?;
    let mut flow = vec![0.0; g.len()];
    for &(i, _, r) in &table.entry {
        flow[i] += r;
    }
    let total_flow: f64 = entries.iter().map(|&i| flow[i]).sum();
    if !(total_flow > 0.0) {
        return Err(Error::config("rate table has no entry flow"));
    }
    let mut informed = vec![0.0; g.len()];
    let mut susceptible = vec![0.0; g.len()];
    for &i in &entries {
        let mass = flow[i] / total_flow;
        informed[i] = f * mass;
        susceptible[i] = (1.0 - f) * mass;
    }
    Ok((
        FluidState::new(informed, susceptible)?,
        MobilityModel::new(RateLaw::Tabulated(table)),
    ))
}
