//! Case studies on the 9×9 grid, the trajectory validation and the chain
//! benchmark.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::run::write_columns;
use super::{Built, InitialSpec, ScenarioConfig, SeedPlacement, StudySpec};
use crate::analysis::{
    cluster_reach, congestion_fraction, crossover_time, max_curve_deviation, CongestionRule,
};
use crate::ctmc::SystemState;
use crate::error::{Error, Result};
use crate::ode::{solve, FluidState, FluidSystem, OdeOptions, Solution};
use crate::rates::{InflowMode, MobilityModel, RateLaw};
use crate::series::sample_grid;
use crate::topology::build_chain;
use crate::trajectory::{replay_ensemble, InformedSeed, ReplayOptions};

fn integrate_built(cfg: &ScenarioConfig, b: &Built) -> Result<Solution> {
    let sys = FluidSystem::new(&b.graph, &b.model, &b.routing)?;
    let times = sample_grid(cfg.horizon, cfg.sample_dt)?;
    solve(&sys, &b.fluid, &times, &cfg.ode.options())
}

#[derive(Clone, Debug, Serialize)]
pub struct EventReport {
    pub times: Vec<f64>,
    /// Share of clusters holding at least one informed vehicle.
    pub reach: Vec<f64>,
    /// Share of clusters more than `percent` above their initial volume.
    pub congested: Vec<f64>,
    /// Share of clusters holding more than one vehicle above their initial volume.
    pub increased: Vec<f64>,
    pub percent: f64,
}

impl EventReport {
    /// Whether information is ahead of congestion at every `t > 0`.
    pub fn reach_leads(&self) -> bool {
        self.times
            .iter()
            .zip(self.reach.iter().zip(&self.congested))
            .all(|(&t, (r, c))| t == 0.0 || r >= c)
    }
}

pub fn event_study(cfg: &ScenarioConfig) -> Result<EventReport> {
    let percent = match &cfg.study {
        Some(StudySpec::Event { congestion_percent }) => *congestion_percent,
        _ => return Err(Error::config("config has no event study")),
    };
    let b = cfg.build()?;
    let sol = integrate_built(cfg, &b)?;
    let n = Some(b.total());
    let baseline: Vec<f64> = (0..b.graph.len())
        .map(|j| (b.init.informed[j] + b.init.susceptible[j]) as f64)
        .collect();
    Ok(EventReport {
        times: sol.series.times.clone(),
        reach: cluster_reach(&sol.series, &b.graph, 1.0, n)?,
        congested: congestion_fraction(
            &sol.series,
            &b.graph,
            &baseline,
            CongestionRule::Percent(percent),
            n,
        )?,
        increased: congestion_fraction(
            &sol.series,
            &b.graph,
            &baseline,
            CongestionRule::Absolute(1.0),
            n,
        )?,
        percent,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RoadblockReport {
    pub times: Vec<f64>,
    pub betas: Vec<f64>,
    /// `reach[i]` belongs to `betas[i]`.
    pub reach: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub blocked: Vec<usize>,
}

impl RoadblockReport {
    /// Whether reach grows with `beta` at every sample.
    pub fn ordered(&self) -> bool {
        let mut idx: Vec<usize> = (0..self.betas.len()).collect();
        idx.sort_by(|&a, &b| self.betas[a].total_cmp(&self.betas[b]));
        idx.windows(2).all(|w| {
            self.reach[w[0]]
                .iter()
                .zip(&self.reach[w[1]])
                .all(|(lo, hi)| hi >= lo)
        })
    }
}

pub fn roadblock_study(cfg: &ScenarioConfig) -> Result<RoadblockReport> {
    let betas = match &cfg.study {
        Some(StudySpec::Roadblock { betas }) if !betas.is_empty() => betas.clone(),
        _ => return Err(Error::config("config has no roadblock study with betas")),
    };
    let base = cfg.build()?;
    let mut reach = Vec::new();
    let mut rho = Vec::new();
    let mut times = Vec::new();
    for &beta in &betas {
        let comm = cfg.communication.with_beta(beta)?;
        let mut b = base.clone();
        b.graph = cfg.with_communication(b.graph, &comm)?;
        let sol = integrate_built(cfg, &b)?;
        reach.push(cluster_reach(&sol.series, &b.graph, 1.0, Some(b.total()))?);
        rho.push(sol.series.rho.clone());
        times = sol.series.times;
    }
    Ok(RoadblockReport {
        times,
        betas,
        reach,
        rho,
        blocked: base.blocked,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InitialLocationReport {
    pub times: Vec<f64>,
    pub corner: Vec<f64>,
    pub center: Vec<f64>,
    /// First sample at which the center-seeded curve overtakes the other.
    pub crossover: Option<f64>,
}

pub fn initial_location_study(cfg: &ScenarioConfig) -> Result<InitialLocationReport> {
    let (informed, corner, center) = match &cfg.study {
        Some(StudySpec::InitialLocation {
            informed,
            corner,
            center,
        }) => (*informed, corner, center),
        _ => return Err(Error::config("config has no initial-location study")),
    };
    let per_cluster = match &cfg.initial {
        InitialSpec::Uniform { per_cluster, .. } => *per_cluster,
        _ => {
            return Err(Error::config(
                "the initial-location study needs a uniform start",
            ))
        }
    };
    let run = |place: &super::ClusterRef| -> Result<Vec<f64>> {
        let mut c = cfg.clone();
        c.initial = InitialSpec::Uniform {
            per_cluster,
            seeds: vec![SeedPlacement {
                cluster: place.clone(),
                fraction: None,
                count: Some(informed),
            }],
        };
        let b = c.build()?;
        Ok(integrate_built(&c, &b)?.series.rho)
    };
    let corner_rho = run(corner)?;
    let center_rho = run(center)?;
    let times = sample_grid(cfg.horizon, cfg.sample_dt)?;
    let crossover = crossover_time(&times, &corner_rho, &center_rho);
    Ok(InitialLocationReport {
        times,
        corner: corner_rho,
        center: center_rho,
        crossover,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayRow {
    pub beta: f64,
    /// Replay mean against the ODE with the configured inflow model.
    pub deviation: f64,
    /// The same with reservoir-proportional inflow.
    pub deviation_proportional: f64,
    pub final_rho_replay: f64,
    pub final_rho_ode: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub vehicles: usize,
    pub informed: usize,
    pub runs: usize,
    pub rows: Vec<ReplayRow>,
}

/// Replays the trajectory input with communication for each `beta` and
/// compares the mean informed fraction with the open-system ODE built from
/// the extracted rates.
pub fn replay_validation(cfg: &ScenarioConfig) -> Result<ReplayReport> {
    let betas = match &cfg.study {
        Some(StudySpec::ReplayValidation { betas }) if !betas.is_empty() => betas.clone(),
        _ => return Err(Error::config("config has no replay validation with betas")),
    };
    let base = cfg.build()?;
    let data = base
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::config("replay validation needs a trajectory input"))?;
    let vehicles = data.vehicles();
    let share = base.init.total_informed() as f64 / base.total();
    let informed = (share * vehicles as f64).round() as usize;
    let opts = ReplayOptions {
        seeding: InformedSeed::ExactCount { informed },
        sample_dt: cfg.sample_dt,
        horizon: Some(cfg.horizon),
    };
    let proportional = {
        let t = data
            .rates
            .tabulated(&base.graph, InflowMode::ReservoirProportional)?;
        MobilityModel::new(RateLaw::Tabulated(t))
    };
    let times = sample_grid(cfg.horizon, cfg.sample_dt)?;
    let mut rows = Vec::new();
    for &beta in &betas {
        let g = cfg.with_communication(base.graph.clone(), &cfg.communication.with_beta(beta)?)?;
        let replay = replay_ensemble(&data.sequences, &g, &opts, cfg.runs, cfg.seed)?;
        let ode = |model: &MobilityModel| -> Result<Vec<f64>> {
            let sys = FluidSystem::new(&g, model, &base.routing)?;
            Ok(solve(&sys, &base.fluid, &times, &cfg.ode.options())?
                .series
                .rho)
        };
        let rho_ode = ode(&base.model)?;
        let rho_prop = ode(&proportional)?;
        let dev = |y: &[f64]| max_curve_deviation(&replay.mean.times, &replay.mean_rho, &times, y);
        rows.push(ReplayRow {
            beta,
            deviation: dev(&rho_ode)?,
            deviation_proportional: dev(&rho_prop)?,
            final_rho_replay: *replay.mean_rho.last().expect("non-empty"),
            final_rho_ode: *rho_ode.last().expect("non-empty"),
        });
    }
    Ok(ReplayReport {
        vehicles,
        informed,
        runs: cfg.runs,
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum CaseStudyReport {
    Event(EventReport),
    Roadblock(RoadblockReport),
    InitialLocation(InitialLocationReport),
    ReplayValidation(ReplayReport),
}

/// Runs the study named in the config and writes its table and a JSON
/// summary to `out`.
pub fn run_case_study(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<CaseStudyReport> {
    let report = match &cfg.study {
        Some(StudySpec::Event { .. }) => CaseStudyReport::Event(event_study(cfg)?),
        Some(StudySpec::Roadblock { .. }) => CaseStudyReport::Roadblock(roadblock_study(cfg)?),
        Some(StudySpec::InitialLocation { .. }) => {
            CaseStudyReport::InitialLocation(initial_location_study(cfg)?)
        }
        Some(StudySpec::ReplayValidation { .. }) => {
            CaseStudyReport::ReplayValidation(replay_validation(cfg)?)
        }
        None => {
            return Err(Error::config(format!(
                "scenario {} has no study section",
                cfg.name
            )))
        }
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match &report {
            CaseStudyReport::Event(r) => write_columns(
                &dir.join("event.csv"),
                &s(&["t", "reach", "congested", "increased"]),
                &[
                    r.times.clone(),
                    r.reach.clone(),
                    r.congested.clone(),
                    r.increased.clone(),
                ],
            )?,
            CaseStudyReport::Roadblock(r) => {
                let mut header = vec!["t".to_string()];
                header.extend(r.betas.iter().map(|b| format!("reach_beta_{b}")));
                let mut cols = vec![r.times.clone()];
                cols.extend(r.reach.iter().cloned());
                write_columns(&dir.join("roadblock.csv"), &header, &cols)?
            }
            CaseStudyReport::InitialLocation(r) => write_columns(
                &dir.join("initial_location.csv"),
                &s(&["t", "rho_corner", "rho_center"]),
                &[r.times.clone(), r.corner.clone(), r.center.clone()],
            )?,
            CaseStudyReport::ReplayValidation(_) => {}
        }
        let summary = match &report {
            CaseStudyReport::Event(r) => serde_json::json!({
                "study": "event",
                "congestion_percent": r.percent,
                "reach_leads": r.reach_leads(),
            }),
            CaseStudyReport::Roadblock(r) => serde_json::json!({
                "study": "roadblock",
                "betas": r.betas,
                "blocked": r.blocked,
                "ordered": r.ordered(),
                "final_reach": r.reach.iter().map(|v| v.last().copied()).collect::<Vec<_>>(),
            }),
            CaseStudyReport::InitialLocation(r) => serde_json::json!({
                "study": "initial_location",
                "crossover": r.crossover,
            }),
            CaseStudyReport::ReplayValidation(r) => serde_json::to_value(r)?,
        };
        fs::write(
            dir.join("study.json"),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
    }
    Ok(report)
}

/// Chain benchmark settings: closed two-way road, `lambda = 0.1`, 100
/// vehicles per cluster and ten informed vehicles in every
/// `BENCH_SEED_SPACING`-th cluster. The two directions of a segment talk at
/// `beta = BENCH_CONTACT * J`, so a vehicle meets its cluster-mates at the
/// same per-capita rate (`beta * n / N = 0.025`/s) as on the 6x6 grid with
/// `beta = 3`, whatever the length of the chain.
pub const BENCH_LAMBDA: f64 = 0.1;
pub const BENCH_CONTACT: f64 = 0.025;
pub const BENCH_PER_CLUSTER: u64 = 100;
pub const BENCH_SEED_SPACING: usize = 20;

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkRow {
    pub clusters: usize,
    pub seconds: f64,
    pub accepted_steps: usize,
    pub evaluations: usize,
    pub final_rho: f64,
}

pub fn run_benchmark(
    clusters: &[usize],
    horizon: f64,
    sample_dt: f64,
    opts: &OdeOptions,
) -> Result<Vec<BenchmarkRow>> {
    let times = sample_grid(horizon, sample_dt)?;
    clusters
        .iter()
        .map(|&j| {
            let g = build_chain(j, BENCH_CONTACT * j as f64)?;
            let routing = crate::topology::RoutingTable::uniform(&g);
            let model = MobilityModel::uniform(BENCH_LAMBDA);
            let mut init = SystemState::uniform(j, BENCH_PER_CLUSTER);
            for c in (0..j).step_by(BENCH_SEED_SPACING) {
                init.seed(c, 10)?;
            }
            let x0 = FluidState::from_counts(&init);
            let start = Instant::now();
            let sys = FluidSystem::new(&g, &model, &routing)?;
            let sol = solve(&sys, &x0, &times, opts)?;
            let seconds = start.elapsed().as_secs_f64();
            log::info!("chain J = {j}: {seconds:.3} s");
            Ok(BenchmarkRow {
                clusters: j,
                seconds,
                accepted_steps: sol.stats.accepted,
                evaluations: sol.stats.evaluations,
                final_rho: *sol.series.rho.last().expect("non-empty"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    #[test]
    fn identical_placements_have_no_crossover() {
        let mut cfg = builtin("initial_location").unwrap();
        cfg.horizon = 50.0;
        if let Some(StudySpec::InitialLocation { corner, center, .. }) = &mut cfg.study {
            *center = corner.clone();
        }
        let r = initial_location_study(&cfg).unwrap();
        assert_eq!(r.corner, r.center);
        assert_eq!(r.crossover, None);
    }

    #[test]
    fn small_benchmark_runs() {
        let rows = run_benchmark(&[10], 200.0, 1.0, &OdeOptions::default()).unwrap();
        assert_eq!(rows[0].clusters, 10);
        assert!(rows[0].final_rho > 10.0 / 1000.0);
        assert!(rows[0].seconds < 1.0);
    }
}
