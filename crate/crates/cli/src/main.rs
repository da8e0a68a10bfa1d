use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use infoprop::analysis::{cluster_reach, crossover_time, max_deviation};
use infoprop::ode::OdeOptions;
use infoprop::scenario::studies::{run_benchmark, run_case_study, CaseStudyReport};
use infoprop::scenario::{builtin, builtin_names, run_scenario, Engine, ScenarioConfig};
use infoprop::series::{PropagationSeries, Units};
use infoprop::topology::{build_grid, CbdRect, GridSpec};
use infoprop::trajectory::{
    assign_clusters, extract_rates, read_sequences, read_trajectories, write_sequences,
    AssignOptions, ColumnMapping, RegionSet,
};
use infoprop::ClusterGraph;

#[derive(Parser)]
#[command(
    name = "infoprop",
    version,
    about = "Information propagation over clustered road networks"
)]
struct Cli {
    /// Scenario file, or the name of a shipped scenario.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory (or file, for single-artifact commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RunOverrides {
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long = "sample-dt")]
    sample_dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a grid graph as JSON.
    BuildGraph {
        #[arg(long, default_value_t = 6)]
        avenues: usize,
        #[arg(long, default_value_t = 6)]
        streets: usize,
        /// CBD rectangle as x0,y0,x1,y1 in intersection coordinates.
        #[arg(long, value_delimiter = ',')]
        cbd: Option<Vec<f64>>,
        /// Leave segments on the CBD rectangle's edges in the periphery.
        #[arg(long)]
        exclude_boundary: bool,
        #[arg(long)]
        u_turns: bool,
        /// Same-segment communication rate.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
    },
    /// Run a CTMC ensemble for the scenario.
    Simulate(RunOverrides),
    /// Integrate the fluid ODE for the scenario.
    Integrate {
        #[command(flatten)]
        run: RunOverrides,
        #[arg(long)]
        tol: Option<f64>,
        /// Fixed RK4 step instead of the adaptive solver.
        #[arg(long = "fixed-dt")]
        fixed_dt: Option<f64>,
    },
    /// Run the scenario with both engines and report their deviation.
    Compare(RunOverrides),
    /// Replay the scenario's trajectory input with communication.
    Replay(RunOverrides),
    /// Measure rates from visit sequences or raw trajectories.
    ExtractRates {
        #[arg(long)]
        graph: PathBuf,
        /// Visit rows (vehicle_id,cluster,enter_t,leave_t,entry,exit,censored).
        #[arg(long, conflicts_with = "trajectories")]
        sequences: Option<PathBuf>,
        /// Raw trajectory samples.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        columns: Option<PathBuf>,
        /// Observation window start and end.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the assigned visit sequences here.
        #[arg(long)]
        write_sequences: Option<PathBuf>,
    },
    /// Metrics on series CSV files.
    Analyze {
        series: PathBuf,
        /// Second series to compare against.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Treat the series as fractions of this many vehicles.
        #[arg(long)]
        total: Option<f64>,
        /// Graph for cluster reach.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Run a validation scenario and check its deviation bound.
    Validate {
        /// Maximum tolerated deviation.
        #[arg(long)]
        tolerance: Option<f64>,
        #[command(flatten)]
        run: RunOverrides,
    },
    /// Time ODE integration on chains of the given sizes.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "10,1220")]
        clusters: Vec<usize>,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long = "sample-dt", default_value_t = 1.0)]
        sample_dt: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run the case study described by the scenario.
    CaseStudy,
    /// Print a shipped scenario, or list them.
    Show { name: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| {
                c.downcast_ref::<infoprop::Error>()
                    .is_some_and(|e| e.is_config())
            }) || e.downcast_ref::<UsageError>().is_some();
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

/// A problem with the command line itself.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<ScenarioConfig> {
    let name = cli
        .config
        .as_deref()
        .ok_or_else(|| usage("--config is required for this command"))?;
    let path = Path::new(name);
    let mut cfg = if path.exists() {
        ScenarioConfig::load(path)?
    } else if let Some(cfg) = builtin(name) {
        cfg
    } else {
        return Err(usage(format!(
            "{name} is neither a file nor a shipped scenario"
        )));
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply(cfg: &mut ScenarioConfig, o: &RunOverrides) -> anyhow::Result<()> {
    if let Some(r) = o.runs {
        cfg.runs = r;
    }
    if let Some(h) = o.horizon {
        cfg.horizon = h;
    }
    if let Some(dt) = o.sample_dt {
        cfg.sample_dt = dt;
    }
    cfg.validate()?;
    Ok(())
}

fn out_dir(cli: &Cli, cfg: &ScenarioConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn read_graph(path: &Path) -> anyhow::Result<ClusterGraph> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ClusterGraph::from_json(&text)?)
}

fn read_series(path: &Path, total: Option<f64>) -> anyhow::Result<PropagationSeries> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (units, n) = match total {
        Some(n) => (Units::Fractions, n),
        None => (Units::Counts, 0.0),
    };
    let mut s = PropagationSeries::read_csv(f, units, n)?;
    if total.is_none() {
        // counts: the population is the occupancy at t = 0
        s.total = (0..s.clusters()).map(|j| s.occupancy(0, j)).sum();
    }
    Ok(s)
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run_engine(cli: &Cli, mut cfg: ScenarioConfig, engine: Engine) -> anyhow::Result<()> {
    cfg.engine = engine;
    cfg.validate()?;
    let dir = out_dir(cli, &cfg);
    let o = run_scenario(&cfg, Some(&dir))?;
    print_json(&serde_json::to_value(&o.metrics)?)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::BuildGraph {
            avenues,
            streets,
            cbd,
            exclude_boundary,
            u_turns,
            beta,
        } => {
            if cbd.as_ref().is_some_and(|c| c.len() != 4) {
                return Err(usage("--cbd takes four numbers: x0,y0,x1,y1"));
            }
            let cbd = cbd.as_ref().map(|c| CbdRect {
                x0: c[0],
                y0: c[1],
                x1: c[2],
                y1: c[3],
                include_boundary: !exclude_boundary,
            });
            let grid = build_grid(&GridSpec {
                avenues: *avenues,
                streets: *streets,
                cbd,
                allow_u_turns: *u_turns,
            })?;
            let g = grid.graph.with_segment_comm(*beta)?;
            let json = g.to_json()?;
            match &cli.out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Simulate(o) => {
            let mut cfg = load_config(&cli)?;
            apply(&mut cfg, o)?;
            run_engine(&cli, cfg, Engine::Ctmc)?;
        }
        Command::Integrate { run, tol, fixed_dt } => {
            let mut cfg = load_config(&cli)?;
            apply(&mut cfg, run)?;
            if let Some(t) = tol {
                cfg.ode.tol = *t;
            }
            if fixed_dt.is_some() {
                cfg.ode.fixed_dt = *fixed_dt;
            }
            run_engine(&cli, cfg, Engine::Ode)?;
        }
        Command::Compare(o) => {
            let mut cfg = load_config(&cli)?;
            apply(&mut cfg, o)?;
            run_engine(&cli, cfg, Engine::Both)?;
        }
        Command::Replay(o) => {
            let mut cfg = load_config(&cli)?;
            apply(&mut cfg, o)?;
            run_engine(&cli, cfg, Engine::Replay)?;
        }
        Command::ExtractRates {
            graph,
            sequences,
            trajectories,
            regions,
            columns,
            window,
            duration,
            write_sequences: seq_out,
        } => {
            if window.as_ref().is_some_and(|w| w.len() != 2) {
                return Err(usage("--window takes two numbers: start,end"));
            }
            let g = read_graph(graph)?;
            let seqs = match (sequences, trajectories) {
                (Some(p), None) => read_sequences(
                    File::open(p).with_context(|| format!("opening {}", p.display()))?,
                )?,
                (None, Some(p)) => {
                    let mapping = match columns {
                        Some(c) => ColumnMapping::from_json(&std::fs::read_to_string(c)?)?,
                        None => ColumnMapping::default(),
                    };
                    let records = read_trajectories(
                        File::open(p).with_context(|| format!("opening {}", p.display()))?,
                        &mapping,
                    )?;
                    let regions = match regions {
                        Some(r) => RegionSet::from_json(&std::fs::read_to_string(r)?)?,
                        None => RegionSet::new(Vec::new()),
                    };
                    let opts = AssignOptions {
                        graph: Some(&g),
                        window: window.as_ref().map(|w| (w[0], w[1])),
                    };
                    let a = assign_clusters(&records, &regions, &opts)?;
                    eprintln!(
                        "{} vehicles assigned, {} dropped, {} samples outside every region",
                        a.sequences.len(),
                        a.dropped_vehicles,
                        a.outside_samples
                    );
                    a.sequences
                }
                _ => return Err(usage("give exactly one of --sequences or --trajectories")),
            };
            if let Some(p) = seq_out {
                write_sequences(File::create(p)?, &seqs)?;
            }
            let table = extract_rates(&seqs, &g, *duration)?;
            let json = table.to_json()?;
            match &cli.out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Analyze {
            series,
            against,
            total,
            graph,
        } => {
            let a = read_series(series, *total)?;
            let mut report = serde_json::json!({
                "samples": a.len(),
                "clusters": a.clusters(),
                "final_rho": a.rho.last(),
            });
            if let Some(b) = against {
                let b = read_series(b, *total)?;
                report["max_deviation"] = serde_json::json!(max_deviation(&a, &b)?);
                report["crossover"] = serde_json::json!(crossover_time(&a.times, &a.rho, &b.rho));
            }
            if let Some(gp) = graph {
                let g = read_graph(gp)?;
                let reach = cluster_reach(&a, &g, 1.0, *total)?;
                report["final_reach"] = serde_json::json!(reach.last());
            }
            print_json(&report)?;
        }
        Command::Validate { tolerance, run } => {
            let mut cfg = load_config(&cli)?;
            apply(&mut cfg, run)?;
            cfg.engine = if cfg.trajectory.is_some() {
                Engine::Replay
            } else {
                Engine::Both
            };
            let dir = out_dir(&cli, &cfg);
            let o = run_scenario(&cfg, Some(&dir))?;
            let dev = o
                .metrics
                .max_deviation
                .context("scenario produced no deviation")?;
            let tol = tolerance.unwrap_or(f64::INFINITY);
            let ok = dev <= tol;
            println!(
                "{} {}: max deviation {dev:.4} (tolerance {tol})",
                if ok { "PASS" } else { "FAIL" },
                cfg.name
            );
            if !ok {
                bail!("deviation {dev} exceeds {tol}");
            }
        }
        Command::Benchmark {
            clusters,
            horizon,
            sample_dt,
            tol,
        } => {
            let rows = run_benchmark(clusters, *horizon, *sample_dt, &OdeOptions::with_tol(*tol))?;
            let mut out: Box<dyn Write> = match &cli.out {
                Some(p) => Box::new(File::create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(out, "clusters,seconds,accepted_steps,evaluations,final_rho")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{:.3},{},{},{:.6}",
                    r.clusters, r.seconds, r.accepted_steps, r.evaluations, r.final_rho
                )?;
            }
        }
        Command::CaseStudy => {
            let cfg = load_config(&cli)?;
            let dir = out_dir(&cli, &cfg);
            let report = run_case_study(&cfg, Some(&dir))?;
            match report {
                CaseStudyReport::Event(r) => println!(
                    "event: reach leads congestion at every t > 0: {}",
                    r.reach_leads()
                ),
                CaseStudyReport::Roadblock(r) => println!(
                    "roadblock: reach ordered by beta {:?}: {}",
                    r.betas,
                    r.ordered()
                ),
                CaseStudyReport::InitialLocation(r) => match r.crossover {
                    Some(t) => {
                        println!("initial location: center-seeded curve overtakes at t = {t}")
                    }
                    None => println!("initial location: no crossover within the horizon"),
                },
                CaseStudyReport::ReplayValidation(r) => {
                    for row in &r.rows {
                        println!(
                            "replay beta = {}: max deviation {:.4} (reservoir-proportional inflow {:.4})",
                            row.beta, row.deviation, row.deviation_proportional
                        );
                    }
                }
            }
            eprintln!("wrote {}", dir.display());
        }
        Command::Show { name } => match name {
            None => builtin_names().for_each(|n| println!("{n}")),
            Some(n) => {
                let cfg =
                    builtin(n).ok_or_else(|| usage(format!("no shipped scenario named {n}")))?;
                println!("{}", cfg.to_json()?);
            }
        },
    }
    Ok(())
}
