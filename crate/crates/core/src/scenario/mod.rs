//! Configuration-driven scenarios.
//!
//! A [`ScenarioConfig`] is a JSON document naming a topology, a mobility law,
//! the communication network, an initial condition and the engines to run.
//! [`ScenarioConfig::build`] turns it into the graph, routing, model and
//! initial state; [`run_scenario`] executes it and writes the artifacts.
//! The case studies and the benchmark live in [`studies`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctmc::SystemState;
use crate::error::{Error, Result};
use crate::ode::{FluidState, OdeOptions};
use crate::rates::{InflowMode, MobilityModel, MobilitySpec, RateLaw, TabulatedRates};
use crate::topology::{
    block_clusters, build_chain, build_grid, routing_probabilities, ClusterGraph, GraphFile, Grid,
    GridSpec, Region, RoutingTable,
};
use crate::trajectory::{
    assign_clusters, extract_rates, read_sequences, read_trajectories, synth_trajectories,
    AssignOptions, ClusterSequence, ColumnMapping, RateTable, RegionSet,
};

mod builtin;
mod run;
pub mod studies;

pub use builtin::{builtin, builtin_names};
pub use run::{run_scenario, Metrics, ScenarioOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Grid {
        avenues: usize,
        streets: usize,
        #[serde(default)]
        cbd: Option<crate::topology::CbdRect>,
        #[serde(default)]
        allow_u_turns: bool,
    },
    /// Closed two-way road of `clusters` clusters.
    Chain {
        clusters: usize,
    },
    /// Graph stored in a JSON file (see [`GraphFile`]).
    GraphFile {
        path: String,
    },
    Inline {
        graph: GraphFile,
    },
}

/// Communication network. Scalar forms link non-virtual clusters only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommSpec {
    /// Every pair of clusters on the same road segment.
    SameSegment { beta: f64 },
    /// Each cluster with itself only.
    SelfOnly { beta: f64 },
    /// Explicit `[j, k, beta]` triples.
    Pairs { pairs: Vec<[f64; 3]> },
    /// `[j, k, beta]` triples in a JSON file.
    MatrixFile { path: String },
    /// Keep whatever the topology carries.
    Topology,
}

impl CommSpec {
    pub fn beta(&self) -> Option<f64> {
        match self {
            CommSpec::SameSegment { beta } | CommSpec::SelfOnly { beta } => Some(*beta),
            _ => None,
        }
    }

    /// The same network with scalar rate `beta`; only for scalar forms.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        match self {
            CommSpec::SameSegment { .. } => Ok(CommSpec::SameSegment { beta }),
            CommSpec::SelfOnly { .. } => Ok(CommSpec::SelfOnly { beta }),
            _ => Err(Error::config(
                "a beta sweep needs a scalar communication spec",
            )),
        }
    }
}

/// A cluster given by index, or on a grid by the intersections it runs
/// between.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterRef {
    Index(usize),
    Directed { from: [usize; 2], to: [usize; 2] },
}

impl ClusterRef {
    pub fn resolve(&self, g: &ClusterGraph, grid: Option<&Grid>) -> Result<usize> {
        match self {
            ClusterRef::Index(j) if *j < g.len() => Ok(*j),
            ClusterRef::Index(j) => Err(Error::config(format!("cluster {j} does not exist"))),
            ClusterRef::Directed { from, to } => grid
                .ok_or_else(|| Error::config("intersection references need a grid topology"))?
                .cluster_toward((from[0], from[1]), (to[0], to[1]))
                .ok_or_else(|| Error::config(format!("no segment from {from:?} to {to:?}"))),
        }
    }
}

/// Turns some of a cluster's vehicles into informed ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPlacement {
    pub cluster: ClusterRef,
    /// Share of the cluster's vehicles, rounded to the nearest vehicle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventReading {
    /// The four segments bounding the block.
    #[default]
    Bounding,
    /// The four segments meeting at the block's upper-right intersection.
    Incident,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform {
        per_cluster: u64,
        #[serde(default)]
        seeds: Vec<SeedPlacement>,
    },
    /// A crowd on the eight clusters around a grid block, `per_other_cluster`
    /// everywhere else.
    Event {
        /// Lower-left intersection of the block.
        block: [usize; 2],
        #[serde(default)]
        reading: EventReading,
        total_vehicles: u64,
        /// Share of `total_vehicles` placed on the event clusters.
        event_share: f64,
        per_other_cluster: u64,
        /// Whether the crowd carries the message.
        #[serde(default = "yes")]
        event_informed: bool,
    },
    Counts {
        informed: Vec<u64>,
        susceptible: Vec<u64>,
    },
    /// Open system: every vehicle waits in a virtual entry cluster, shared
    /// among them in proportion to entry flow.
    Reservoir { total_vehicles: u64, informed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Ctmc,
    Ode,
    Replay,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Use fixed-step RK4 with this step instead of the adaptive solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_dt: Option<f64>,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            fixed_dt: None,
        }
    }
}

impl OdeSettings {
    pub fn options(&self) -> OdeOptions {
        match self.fixed_dt {
            Some(dt) => OdeOptions::fixed(dt),
            None => OdeOptions::with_tol(self.tol),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySource {
    /// Visit rows as written by `write_sequences`.
    Sequences { path: String },
    /// Raw samples, assigned to clusters on load.
    Records {
        path: String,
        /// Region polygons; omit when the file has a cluster column.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regions: Option<String>,
        /// Column mapping; defaults to NGSIM-style names.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        columns: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<[f64; 2]>,
    },
    /// Exact visits of vehicles simulated with per-edge rates on the graph.
    Synthetic {
        /// Per-vehicle `[from, to, rate]`.
        rates: Vec<(usize, usize, f64)>,
        /// Aggregate entry flows `[entry, to, vehicles per second]`.
        entry: Vec<(usize, usize, f64)>,
        #[serde(default)]
        inflow: InflowMode,
        vehicles: u64,
        duration: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub source: TrajectorySource,
    /// Observation length used for entry flows; defaults to the data span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    /// Fraction of clusters holding at least one informed vehicle.
    #[serde(default)]
    pub reach: bool,
    /// Congestion threshold in percent over the initial occupancy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion_percent: Option<f64>,
    /// Share of vehicles inside the CBD.
    #[serde(default)]
    pub cbd_share: bool,
    /// Instants at which per-segment counts are exported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub geographic_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudySpec {
    /// Reach against congestion after a crowd disperses.
    Event {
        #[serde(default = "default_congestion")]
        congestion_percent: f64,
    },
    /// Reach from the blocked clusters for several `beta`.
    Roadblock { betas: Vec<f64> },
    /// The same informed vehicles placed in two clusters.
    InitialLocation {
        informed: u64,
        corner: ClusterRef,
        center: ClusterRef,
    },
    /// Replay against the open-system ODE for several `beta`.
    ReplayValidation { betas: Vec<f64> },
}

/// A complete scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologySpec,
    pub mobility: MobilitySpec,
    /// Separate law for informed vehicles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informed_mobility: Option<MobilitySpec>,
    /// Routing bias toward the CBD; 1 is uniform.
    #[serde(default = "one")]
    pub gamma: f64,
    pub communication: CommSpec,
    pub initial: InitialSpec,
    pub horizon: f64,
    #[serde(default = "one")]
    pub sample_dt: f64,
    pub engine: Engine,
    #[serde(default = "one_run")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Clusters nobody may enter.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocked: Vec<ClusterRef>,
    #[serde(default)]
    pub ode: OdeSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySpec>,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Directory relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn one_run() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_tol() -> f64 {
    1e-8
}

fn default_congestion() -> f64 {
    15.0
}

/// Everything a run needs, built from a config.
#[derive(Clone, Debug)]
pub struct Built {
    pub graph: ClusterGraph,
    pub grid: Option<Grid>,
    pub routing: RoutingTable,
    pub model: MobilityModel,
    /// Vehicle counts at time zero.
    pub init: SystemState,
    /// Fluid initial state; differs from `init / N` only for reservoirs,
    /// which are split exactly rather than rounded.
    pub fluid: FluidState,
    pub blocked: Vec<usize>,
    pub trajectory: Option<TrajectoryData>,
}

/// Visit sequences and the rates measured from them.
#[derive(Clone, Debug)]
pub struct TrajectoryData {
    pub sequences: Vec<ClusterSequence>,
    pub rates: RateTable,
}

impl TrajectoryData {
    /// Distinct vehicles in the data.
    pub fn vehicles(&self) -> usize {
        self.sequences
            .iter()
            .map(|s| s.vehicle_id)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

impl Built {
    pub fn total(&self) -> f64 {
        self.init.total() as f64
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Checks that do not need the graph.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("horizon", self.horizon)?;
        positive("sample_dt", self.sample_dt)?;
        positive("gamma", self.gamma)?;
        positive("ode.tol", self.ode.tol)?;
        if let Some(dt) = self.ode.fixed_dt {
            positive("ode.fixed_dt", dt)?;
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.engine == Engine::Replay && self.trajectory.is_none() {
            return Err(Error::config("engine \"replay\" needs a trajectory input"));
        }
        if let Some(b) = self.communication.beta() {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::config(format!("beta must be non-negative, got {b}")));
            }
        }
        match &self.initial {
            InitialSpec::Uniform { seeds, .. } => {
                for s in seeds {
                    match (s.fraction, s.count) {
                        (Some(f), None) if (0.0..=1.0).contains(&f) => {}
                        (Some(f), None) => {
                            return Err(Error::config(format!(
                                "seed fraction must lie in [0, 1], got {f}"
                            )))
                        }
                        (None, Some(_)) => {}
                        _ => {
                            return Err(Error::config(
                                "a seed needs exactly one of fraction or count",
                            ))
                        }
                    }
                }
            }
            InitialSpec::Event { event_share, .. } => {
                if !(0.0..=1.0).contains(event_share) {
                    return Err(Error::config(format!(
                        "event_share must lie in [0, 1], got {event_share}"
                    )));
                }
            }
            InitialSpec::Counts {
                informed,
                susceptible,
            } => {
                if informed.len() != susceptible.len() {
                    return Err(Error::config("initial count vectors differ in length"));
                }
            }
            InitialSpec::Reservoir {
                total_vehicles,
                informed,
            } => {
                if informed > total_vehicles || *total_vehicles == 0 {
                    return Err(Error::config(
                        "reservoir needs 0 <= informed <= total_vehicles and total_vehicles > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Topology with the configured communication network, before blocking.
    pub fn build_topology(&self) -> Result<(ClusterGraph, Option<Grid>)> {
        let (g, grid) = match &self.topology {
            TopologySpec::Grid {
                avenues,
                streets,
                cbd,
                allow_u_turns,
            } => {
                let grid = build_grid(&GridSpec {
                    avenues: *avenues,
                    streets: *streets,
                    cbd: *cbd,
                    allow_u_turns: *allow_u_turns,
                })?;
                (grid.graph.clone(), Some(grid))
            }
            TopologySpec::Chain { clusters } => (build_chain(*clusters, 0.0)?, None),
            TopologySpec::GraphFile { path } => {
                let text = std::fs::read_to_string(self.resolve(path))
                    .map_err(|e| Error::config(format!("cannot read graph file {path}: {e}")))?;
                (ClusterGraph::from_json(&text)?, None)
            }
            TopologySpec::Inline { graph } => (ClusterGraph::from_file(graph)?, None),
        };
        let g = self.with_communication(g, &self.communication)?;
        Ok((g, grid))
    }

    /// `g` with its communication network replaced by `comm`.
    pub fn with_communication(&self, g: ClusterGraph, comm: &CommSpec) -> Result<ClusterGraph> {
        match comm {
            CommSpec::SameSegment { beta } => g.with_segment_comm(*beta),
            CommSpec::SelfOnly { beta } => g.with_self_comm(*beta),
            CommSpec::Pairs { pairs } => g.with_comm(&triples(pairs)?),
            CommSpec::MatrixFile { path } => {
                let pairs: Vec<[f64; 3]> = serde_json::from_str(&read_text(&self.resolve(path))?)?;
                g.with_comm(&triples(&pairs)?)
            }
            CommSpec::Topology => Ok(g),
        }
    }

    fn mobility_law(
        &self,
        spec: &MobilitySpec,
        g: &ClusterGraph,
        data: Option<&TrajectoryData>,
    ) -> Result<RateLaw> {
        Ok(match spec {
            MobilitySpec::Uniform { lambda } => RateLaw::Uniform { lambda: *lambda },
            MobilitySpec::TwoLevel { lambda_d, lambda_o } => RateLaw::TwoLevel {
                lambda_d: *lambda_d,
                lambda_o: *lambda_o,
            },
            MobilitySpec::DensityDependent { lambda, a, b } => RateLaw::DensityDependent {
                lambda: *lambda,
                a: *a,
                b: *b,
            },
            MobilitySpec::Tabulated { table_file, inflow } => {
                let text = std::fs::read_to_string(self.resolve(table_file)).map_err(|e| {
                    Error::config(format!("cannot read rate table {table_file}: {e}"))
                })?;
                RateLaw::Tabulated(RateTable::from_json(&text)?.tabulated(g, *inflow)?)
            }
            MobilitySpec::FromTrajectory { inflow } => {
                let data = data.ok_or_else(|| {
                    Error::config("mobility \"from_trajectory\" needs a trajectory input")
                })?;
                RateLaw::Tabulated(data.rates.tabulated(g, *inflow)?)
            }
        })
    }

    pub fn build(&self) -> Result<Built> {
        self.validate()?;
        let (g, grid) = self.build_topology()?;
        let blocked: Vec<usize> = self
            .blocked
            .iter()
            .map(|c| c.resolve(&g, grid.as_ref()))
            .collect::<Result<BTreeSet<_>>>()?
            .into_iter()
            .collect();
        let g = if blocked.is_empty() {
            g
        } else {
            block_clusters(&g, &blocked.iter().copied().collect())
        };
        // gamma = 1 is uniform routing and needs no CBD
        let routing = if self.gamma == 1.0 {
            RoutingTable::uniform(&g)
        } else {
            routing_probabilities(&g, self.gamma)?
        };
        let trajectory = match &self.trajectory {
            Some(spec) => Some(self.load_trajectory(spec, &g)?),
            None => None,
        };
        let mut model =
            MobilityModel::new(self.mobility_law(&self.mobility, &g, trajectory.as_ref())?);
        if let Some(spec) = &self.informed_mobility {
            model.informed = Some(self.mobility_law(spec, &g, trajectory.as_ref())?);
        }
        model.validate()?;
        let (init, fluid) = self.initial_state(&g, grid.as_ref(), &model)?;
        Ok(Built {
            graph: g,
            grid,
            routing,
            model,
            init,
            fluid,
            blocked,
            trajectory,
        })
    }

    /// Reads or generates the visit sequences and extracts their rates.
    pub fn load_trajectory(
        &self,
        spec: &TrajectorySpec,
        g: &ClusterGraph,
    ) -> Result<TrajectoryData> {
        let mut duration = spec.duration;
        let sequences = match &spec.source {
            TrajectorySource::Sequences { path } => {
                let f = std::fs::File::open(self.resolve(path))
                    .map_err(|e| Error::config(format!("cannot open {path}: {e}")))?;
                read_sequences(f)?
            }
            TrajectorySource::Records {
                path,
                regions,
                columns,
                window,
            } => {
                let mapping = match columns {
                    Some(c) => ColumnMapping::from_json(&read_text(&self.resolve(c))?)?,
                    None => ColumnMapping::default(),
                };
                let f = std::fs::File::open(self.resolve(path))
                    .map_err(|e| Error::config(format!("cannot open {path}: {e}")))?;
                let records = read_trajectories(f, &mapping)?;
                let regions = match regions {
                    Some(r) => RegionSet::from_json(&read_text(&self.resolve(r))?)?,
                    None => RegionSet::new(Vec::new()),
                };
                let opts = AssignOptions {
                    graph: Some(g),
                    window: window.map(|w| (w[0], w[1])),
                };
                let a = assign_clusters(&records, &regions, &opts)?;
                if a.dropped_vehicles > 0 {
                    log::warn!(
                        "{} vehicles never entered a region and were dropped",
                        a.dropped_vehicles
                    );
                }
                a.sequences
            }
            TrajectorySource::Synthetic {
                rates,
                entry,
                inflow,
                vehicles,
                duration: d,
                seed,
            } => {
                let mut rates = rates.clone();
                rates.sort_by_key(|r| (r.0, r.1));
                let table = TabulatedRates {
                    rates,
                    entry: entry.clone(),
                    total_vehicles: *vehicles as f64,
                    inflow: *inflow,
                };
                let model = MobilityModel::new(RateLaw::Tabulated(table));
                model.validate()?;
                let init = apportion(*vehicles, &entry_shares(g, &model)?);
                duration.get_or_insert(*d);
                synth_trajectories(g, &model, &RoutingTable::uniform(g), &init, *d, *seed)?
            }
        };
        let rates = extract_rates(&sequences, g, duration)?;
        Ok(TrajectoryData { sequences, rates })
    }

    fn initial_state(
        &self,
        g: &ClusterGraph,
        grid: Option<&Grid>,
        model: &MobilityModel,
    ) -> Result<(SystemState, FluidState)> {
        let j = g.len();
        let init = match &self.initial {
            InitialSpec::Uniform { per_cluster, seeds } => {
                let mut s = SystemState::new(
                    vec![0; j],
                    (0..j)
                        .map(|c| {
                            if g.region(c).is_virtual() {
                                0
                            } else {
                                *per_cluster
                            }
                        })
                        .collect(),
                )?;
                for seed in seeds {
                    let c = seed.cluster.resolve(g, grid)?;
                    let count = match (seed.fraction, seed.count) {
                        (Some(f), _) => (f * *per_cluster as f64).round() as u64,
                        (_, Some(n)) => n,
                        _ => unreachable!("validated"),
                    };
                    s.seed(c, count)?;
                }
                s
            }
            InitialSpec::Event {
                block,
                reading,
                total_vehicles,
                event_share,
                per_other_cluster,
                event_informed,
            } => {
                let grid =
                    grid.ok_or_else(|| Error::config("an event placement needs a grid topology"))?;
                let event: BTreeSet<usize> = match reading {
                    EventReading::Bounding => grid
                        .block_boundary_clusters(block[0], block[1])
                        .ok_or_else(|| {
                            Error::config(format!("block {block:?} is outside the grid"))
                        })?,
                    EventReading::Incident => grid.incident_clusters((block[0] + 1, block[1] + 1)),
                }
                .into_iter()
                .collect();
                if event.len() != 8 {
                    return Err(Error::config(format!(
                        "event site has {} clusters, expected 8",
                        event.len()
                    )));
                }
                let crowd = event_share * *total_vehicles as f64;
                let per_event = crowd / 8.0;
                if (per_event - per_event.round()).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "event crowd of {crowd} does not split evenly over 8 clusters"
                    )));
                }
                let per_event = per_event.round() as u64;
                let sum = 8 * per_event + (j as u64 - 8) * per_other_cluster;
                if sum != *total_vehicles {
                    return Err(Error::config(format!(
                        "event placement holds {sum} vehicles, total_vehicles is {total_vehicles}"
                    )));
                }
                let mut informed = vec![0; j];
                let mut susceptible = vec![*per_other_cluster; j];
                for &c in &event {
                    susceptible[c] = 0;
                    if *event_informed {
                        informed[c] = per_event;
                    } else {
                        susceptible[c] = per_event;
                    }
                }
                SystemState::new(informed, susceptible)?
            }
            InitialSpec::Counts {
                informed,
                susceptible,
            } => {
                if informed.len() != j {
                    return Err(Error::config(format!(
                        "initial counts have {} clusters, graph has {j}",
                        informed.len()
                    )));
                }
                SystemState::new(informed.clone(), susceptible.clone())?
            }
            InitialSpec::Reservoir {
                total_vehicles,
                informed,
            } => {
                let shares = entry_shares(g, model)?;
                let f = *informed as f64 / *total_vehicles as f64;
                let fluid = FluidState::new(
                    shares.iter().map(|s| s * f).collect(),
                    shares.iter().map(|s| s * (1.0 - f)).collect(),
                )?;
                let totals = apportion(*total_vehicles, &shares);
                let inf = apportion(*informed, &shares);
                let sus = totals.iter().zip(&inf).map(|(t, i)| t - i.min(t)).collect();
                return Ok((SystemState::new(inf, sus)?, fluid));
            }
        };
        if init.total() == 0 {
            return Err(Error::config("initial condition holds no vehicles"));
        }
        let fluid = FluidState::from_counts(&init);
        Ok((init, fluid))
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
}

fn triples(pairs: &[[f64; 3]]) -> Result<Vec<(usize, usize, f64)>> {
    pairs
        .iter()
        .map(|p| {
            let idx = |v: f64| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::config(format!("{v} is not a cluster index")))
                }
            };
            Ok((idx(p[0])?, idx(p[1])?, p[2]))
        })
        .collect()
}

/// Share of the population waiting in each virtual entry cluster, in
/// proportion to its entry flow.
fn entry_shares(g: &ClusterGraph, model: &MobilityModel) -> Result<Vec<f64>> {
    let table: &TabulatedRates = match &model.law {
        RateLaw::Tabulated(t) => t,
        _ => {
            return Err(Error::config(
                "a reservoir start needs tabulated mobility with entry flows",
            ))
        }
    };
    let mut flow = vec![0.0; g.len()];
    for &(i, _, r) in &table.entry {
        if g.region(i) == Region::VirtualEntry {
            flow[i] += r;
        }
    }
    let total: f64 = flow.iter().sum();
    if !(total > 0.0) {
        return Err(Error::config("rate table has no entry flow"));
    }
    Ok(flow.iter().map(|f| f / total).collect())
}

/// Largest-remainder split of `n` by `shares` (which sum to one).
fn apportion(n: u64, shares: &[f64]) -> Vec<u64> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut out: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let mut left = n - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        if shares[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}
