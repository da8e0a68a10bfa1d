use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{Built, Engine, ScenarioConfig};
use crate::analysis::{
    cluster_reach, congestion_fraction, export_geographic, max_curve_deviation, occupancy_share,
    write_segments, CongestionRule,
};
use crate::ctmc::{run_ensemble, Ensemble};
use crate::error::{Error, Result};
use crate::ode::{solve, FluidSystem, Solution};
use crate::series::{sample_grid, PropagationSeries};
use crate::trajectory::{replay_ensemble, InformedSeed, ReplayOptions};

/// Summary written to `metrics.json`. Holds no timings, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub name: String,
    pub engine: Engine,
    pub clusters: usize,
    pub vehicles: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rho_ctmc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rho_ode: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_rho_replay: Option<f64>,
    /// Largest gap between the stochastic mean and the ODE.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaging_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_accepted_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_min_component: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_vehicles: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub built: Built,
    pub ctmc: Option<Ensemble>,
    /// Fractions of `N`.
    pub ode: Option<Solution>,
    pub replay: Option<Ensemble>,
    pub metrics: Metrics,
}

impl ScenarioOutcome {
    /// The stochastic curve an ODE is compared against, if any.
    pub fn stochastic(&self) -> Option<&Ensemble> {
        self.ctmc.as_ref().or(self.replay.as_ref())
    }
}

/// Runs the configured engines and, when `out` is given, writes
/// `ctmc_mean.csv`, `ode.csv`, `replay_mean.csv` (as applicable),
/// `metrics.json`, `report.txt` and the requested metric tables.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ScenarioOutcome> {
    let built = cfg.build()?;
    let n = built.total();
    let (g, model, routing) = (&built.graph, &built.model, &built.routing);

    let want_ctmc = matches!(cfg.engine, Engine::Ctmc | Engine::Both);
    let want_ode = matches!(cfg.engine, Engine::Ode | Engine::Both | Engine::Replay);

    let ctmc = if want_ctmc {
        log::info!(
            "{}: {} CTMC runs over {} clusters",
            cfg.name,
            cfg.runs,
            g.len()
        );
        Some(run_ensemble(
            g,
            model,
            routing,
            &built.init,
            cfg.horizon,
            cfg.sample_dt,
            cfg.runs,
            cfg.seed,
            false,
        )?)
    } else {
        None
    };

    let ode = if want_ode {
        let sys = FluidSystem::new(g, model, routing)?;
        let times = sample_grid(cfg.horizon, cfg.sample_dt)?;
        Some(solve(&sys, &built.fluid, &times, &cfg.ode.options())?)
    } else {
        None
    };

    let replay = if cfg.engine == Engine::Replay {
        let data = built
            .trajectory
            .as_ref()
            .ok_or_else(|| Error::config("engine \"replay\" needs a trajectory input"))?;
        let share = built.init.total_informed() as f64 / n;
        let informed = (share * data.vehicles() as f64).round() as usize;
        let opts = ReplayOptions {
            seeding: InformedSeed::ExactCount { informed },
            sample_dt: cfg.sample_dt,
            horizon: Some(cfg.horizon),
        };
        Some(replay_ensemble(
            &data.sequences,
            g,
            &opts,
            cfg.runs,
            cfg.seed,
        )?)
    } else {
        None
    };

    let stochastic = ctmc.as_ref().or(replay.as_ref());
    let max_deviation = match (stochastic, &ode) {
        (Some(e), Some(sol)) => Some(max_curve_deviation(
            &e.mean.times,
            &e.mean_rho,
            &sol.series.times,
            &sol.series.rho,
        )?),
        _ => None,
    };
    let last = |v: &[f64]| v.last().copied();
    let metrics = Metrics {
        name: cfg.name.clone(),
        engine: cfg.engine,
        clusters: g.len(),
        vehicles: n,
        samples: sample_grid(cfg.horizon, cfg.sample_dt)?.len(),
        final_rho_ctmc: ctmc.as_ref().and_then(|e| last(&e.mean_rho)),
        final_rho_ode: ode.as_ref().and_then(|s| last(&s.series.rho)),
        final_rho_replay: replay.as_ref().and_then(|e| last(&e.mean_rho)),
        max_deviation,
        averaging_gap: ctmc.as_ref().map(Ensemble::averaging_gap),
        ode_accepted_steps: ode.as_ref().map(|s| s.stats.accepted),
        ode_min_component: ode.as_ref().map(|s| s.stats.min_component),
        trajectory_vehicles: built.trajectory.as_ref().map(|d| d.vehicles()),
    };

    let outcome = ScenarioOutcome {
        built,
        ctmc,
        ode,
        replay,
        metrics,
    };
    if let Some(dir) = out {
        write_outputs(cfg, &outcome, dir)?;
    }
    Ok(outcome)
}

fn write_outputs(cfg: &ScenarioConfig, o: &ScenarioOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = o.built.total();
    let mut curves: Vec<(&str, &PropagationSeries, Option<f64>)> = Vec::new();
    if let Some(e) = &o.ctmc {
        e.mean
            .write_csv(fs::File::create(dir.join("ctmc_mean.csv"))?)?;
        curves.push(("ctmc", &e.mean, None));
    }
    if let Some(s) = &o.ode {
        s.series.write_csv(fs::File::create(dir.join("ode.csv"))?)?;
        curves.push(("ode", &s.series, Some(n)));
    }
    if let Some(e) = &o.replay {
        e.mean
            .write_csv(fs::File::create(dir.join("replay_mean.csv"))?)?;
        curves.push(("replay", &e.mean, None));
    }
    if let Some(data) = &o.built.trajectory {
        fs::write(dir.join("rates.json"), data.rates.to_json()?)?;
    }

    let m = &cfg.metrics;
    let g = &o.built.graph;
    for (label, series, scale) in &curves {
        if m.reach || m.congestion_percent.is_some() || m.cbd_share {
            let mut header = vec!["t".to_string(), "rho".to_string()];
            let mut cols: Vec<Vec<f64>> = vec![series.times.clone(), series.rho.clone()];
            if m.reach {
                header.push("reach".into());
                cols.push(cluster_reach(series, g, 1.0, *scale)?);
            }
            if let Some(p) = m.congestion_percent {
                let baseline: Vec<f64> = (0..g.len())
                    .map(|j| (o.built.init.informed[j] + o.built.init.susceptible[j]) as f64)
                    .collect();
                header.push("congested".into());
                cols.push(congestion_fraction(
                    series,
                    g,
                    &baseline,
                    CongestionRule::Percent(p),
                    *scale,
                )?);
                header.push("increased".into());
                cols.push(congestion_fraction(
                    series,
                    g,
                    &baseline,
                    CongestionRule::Absolute(1.0),
                    *scale,
                )?);
            }
            if m.cbd_share {
                header.push("cbd_share".into());
                cols.push(occupancy_share(series, &g.cbd_clusters())?);
            }
            write_columns(&dir.join(format!("metrics_{label}.csv")), &header, &cols)?;
        }
        for &t in &m.geographic_times {
            let recs = export_geographic(series, g, t, 1.0, *scale)?;
            write_segments(
                fs::File::create(dir.join(format!("segments_{label}_t{t}.csv")))?,
                &recs,
            )?;
        }
    }

    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&o.metrics)? + "\n",
    )?;
    fs::write(dir.join("report.txt"), report(cfg, &o.metrics))?;
    Ok(())
}

/// Writes equally long columns as CSV.
pub(crate) fn write_columns(path: &Path, header: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let rows = cols.first().map_or(0, Vec::len);
    for i in 0..rows {
        w.write_record(cols.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn report(cfg: &ScenarioConfig, m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario  {}", cfg.name);
    let _ = writeln!(s, "engine    {:?}", m.engine);
    let _ = writeln!(s, "clusters  {}", m.clusters);
    let _ = writeln!(s, "vehicles  {}", m.vehicles);
    let _ = writeln!(
        s,
        "horizon   {} s, sampled every {} s",
        cfg.horizon, cfg.sample_dt
    );
    if matches!(m.engine, Engine::Ctmc | Engine::Both | Engine::Replay) {
        let _ = writeln!(
            s,
            "runs      {} (seeds {}..{})",
            cfg.runs,
            cfg.seed,
            cfg.seed + cfg.runs as u64 - 1
        );
    }
    for (label, v) in [
        ("rho(T) ctmc  ", m.final_rho_ctmc),
        ("rho(T) ode   ", m.final_rho_ode),
        ("rho(T) replay", m.final_rho_replay),
        ("max deviation", m.max_deviation),
    ] {
        if let Some(v) = v {
            let _ = writeln!(s, "{label} {v:.6}");
        }
    }
    s
}
