//! Mobility rate laws.
//!
//! Every law gives the per-vehicle rate of moving along edge `j -> k` as a
//! function of the cluster occupancies (fractions of `N`). The CTMC and the
//! fluid ODE both evaluate rates through [`EdgeTable`], so the two engines
//! always see the same law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::topology::{ClusterGraph, Region, RoutingTable};

/// Fraction of all vehicles present in a cluster.
pub trait Occupancy {
    fn occupancy(&self, j: usize) -> f64;
}

/// Occupancy given directly as one fraction per cluster.
pub struct Densities<'a>(pub &'a [f64]);

impl Occupancy for Densities<'_> {
    #[inline]
    fn occupancy(&self, j: usize) -> f64 {
        self.0[j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VehicleClass {
    Informed,
    Susceptible,
}

/// How vehicles leave a virtual entry cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflowMode {
    /// Each waiting vehicle leaves at `lambda_tilde / N`; aggregate inflow
    /// decays as the reservoir drains.
    #[default]
    ReservoirProportional,
    /// Aggregate inflow stays at `lambda_tilde` vehicles per second until the
    /// reservoir is empty.
    Constant,
}

/// Rates measured from data rather than generated by a law.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedRates {
    /// Per-vehicle rate for each `(j, k)`, sorted by `j` then `k`.
    pub rates: Vec<(usize, usize, f64)>,
    /// Aggregate entry flow `(i, j, vehicles per second)` from virtual entry
    /// cluster `i` into `j`.
    pub entry: Vec<(usize, usize, f64)>,
    /// Number of vehicles `N` the per-vehicle entry rate is divided by.
    pub total_vehicles: f64,
    pub inflow: InflowMode,
}

impl TabulatedRates {
    fn lookup(&self, j: usize, k: usize) -> Option<f64> {
        self.rates
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&(j, k)))
            .ok()
            .map(|i| self.rates[i].2)
    }

    fn entry_flow(&self, i: usize, j: usize) -> Option<f64> {
        self.entry
            .iter()
            .find(|&&(a, b, _)| a == i && b == j)
            .map(|e| e.2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateLaw {
    /// `p_jk * lambda`
    Uniform {
        lambda: f64,
    },
    /// `p_jk * lambda_j` with `lambda_j = lambda_d` inside the CBD and
    /// `lambda_o` elsewhere.
    TwoLevel {
        lambda_d: f64,
        lambda_o: f64,
    },
    /// `lambda * p_jk * [1 - (occ_j + occ_k)^a]^b`
    DensityDependent {
        lambda: f64,
        a: f64,
        b: f64,
    },
    Tabulated(TabulatedRates),
}

impl RateLaw {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )))
            }
        };
        match self {
            RateLaw::Uniform { lambda } => check("lambda", *lambda),
            RateLaw::TwoLevel { lambda_d, lambda_o } => {
                check("lambda_d", *lambda_d)?;
                check("lambda_o", *lambda_o)
            }
            RateLaw::DensityDependent { lambda, a, b } => {
                check("lambda", *lambda)?;
                if !(*a >= 1.0 && *b >= 1.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::config(format!(
                        "density-dependent law needs a, b >= 1, got a = {a}, b = {b}"
                    )));
                }
                Ok(())
            }
            RateLaw::Tabulated(t) => {
                for &(_, _, r) in t.rates.iter().chain(&t.entry) {
                    check("tabulated rate", r)?;
                }
                if t.rates
                    .windows(2)
                    .any(|w| (w[0].0, w[0].1) >= (w[1].0, w[1].1))
                {
                    return Err(Error::config(
                        "tabulated rates must be sorted by edge without repeats",
                    ));
                }
                if !(t.total_vehicles.is_finite() && t.total_vehicles > 0.0) {
                    return Err(Error::config(
                        "tabulated rates need a positive vehicle total",
                    ));
                }
                Ok(())
            }
        }
    }

    fn is_occupancy_dependent(&self) -> bool {
        match self {
            RateLaw::DensityDependent { .. } => true,
            RateLaw::Tabulated(t) => t.inflow == InflowMode::Constant && !t.entry.is_empty(),
            _ => false,
        }
    }
}

/// The mobility part of a scenario. Informed and non-informed vehicles share
/// one law unless `informed` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityModel {
    pub law: RateLaw,
    pub informed: Option<RateLaw>,
}

impl MobilityModel {
    pub fn new(law: RateLaw) -> Self {
        Self {
            law,
            informed: None,
        }
    }

    pub fn uniform(lambda: f64) -> Self {
        Self::new(RateLaw::Uniform { lambda })
    }

    pub fn distinguish_informed(&self) -> bool {
        self.informed.is_some()
    }

    pub fn law_for(&self, class: VehicleClass) -> &RateLaw {
        match (class, &self.informed) {
            (VehicleClass::Informed, Some(l)) => l,
            _ => &self.law,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if let Some(l) = &self.informed {
            l.validate()?;
        }
        Ok(())
    }
}

/// Rate law specialised to one edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum EdgeLaw {
    Constant(f64),
    Density {
        scale: f64,
        a: f64,
        b: f64,
    },
    /// Aggregate flow `lambda_tilde / N` shared by the vehicles waiting in
    /// the source; per-vehicle rate is that over `max(occ_j, 1/N)`.
    SharedInflow {
        flow: f64,
        floor: f64,
    },
}

impl EdgeLaw {
    #[inline]
    pub(crate) fn rate(&self, j: usize, k: usize, occ: &impl Occupancy) -> f64 {
        match *self {
            EdgeLaw::Constant(r) => r,
            EdgeLaw::Density { scale, a, b } => {
                let s = (occ.occupancy(j) + occ.occupancy(k)).max(0.0);
                let bracket = 1.0 - s.powf(a);
                if bracket <= 0.0 {
                    0.0
                } else {
                    scale * bracket.powf(b)
                }
            }
            EdgeLaw::SharedInflow { flow, floor } => flow / occ.occupancy(j).max(floor),
        }
    }
}

fn compile_edge(law: &RateLaw, g: &ClusterGraph, p: f64, j: usize, k: usize) -> EdgeLaw {
    match law {
        RateLaw::Uniform { lambda } => EdgeLaw::Constant(p * lambda),
        RateLaw::TwoLevel { lambda_d, lambda_o } => {
            let l = if g.region(j) == Region::Cbd {
                lambda_d
            } else {
                lambda_o
            };
            EdgeLaw::Constant(p * l)
        }
        RateLaw::DensityDependent { lambda, a, b } => EdgeLaw::Density {
            scale: lambda * p,
            a: *a,
            b: *b,
        },
        RateLaw::Tabulated(t) => {
            let n = t.total_vehicles;
            if g.region(j) == Region::VirtualEntry {
                let flow = t.entry_flow(j, k).unwrap_or(0.0) / n;
                match t.inflow {
                    InflowMode::ReservoirProportional => EdgeLaw::Constant(flow),
                    InflowMode::Constant => EdgeLaw::SharedInflow {
                        flow,
                        floor: 1.0 / n,
                    },
                }
            } else {
                EdgeLaw::Constant(t.lookup(j, k).unwrap_or(0.0))
            }
        }
    }
}

/// Per-vehicle rate of moving `j -> k` for the given class at occupancy `x`.
///
/// Panics if `j -> k` is not a mobility edge of `g`.
pub fn edge_rate(
    model: &MobilityModel,
    routing: &RoutingTable,
    g: &ClusterGraph,
    j: usize,
    k: usize,
    class: VehicleClass,
    x: &impl Occupancy,
) -> f64 {
    assert!(g.has_edge(j, k), "{j} -> {k} is not a mobility edge");
    compile_edge(model.law_for(class), g, routing.p(j, k), j, k).rate(j, k, x)
}

/// All mobility edges of a graph with their compiled laws, in lexicographic
/// `(j, k)` order.
#[derive(Clone, Debug)]
pub struct EdgeTable {
    pub(crate) edges: Vec<(usize, usize)>,
    pub(crate) informed: Vec<EdgeLaw>,
    pub(crate) susceptible: Vec<EdgeLaw>,
    occupancy_dependent: bool,
}

impl EdgeTable {
    pub fn new(g: &ClusterGraph, model: &MobilityModel, routing: &RoutingTable) -> Result<Self> {
        model.validate()?;
        let edges: Vec<_> = g.mobility_edges().collect();
        let compile = |law: &RateLaw| -> Vec<EdgeLaw> {
            edges
                .iter()
                .map(|&(j, k)| compile_edge(law, g, routing.p(j, k), j, k))
                .collect()
        };
        let susceptible = compile(&model.law);
        let informed = match &model.informed {
            Some(l) => compile(l),
            None => susceptible.clone(),
        };
        let occupancy_dependent = model.law.is_occupancy_dependent()
            || model
                .informed
                .as_ref()
                .is_some_and(|l| l.is_occupancy_dependent());
        Ok(Self {
            edges,
            informed,
            susceptible,
            occupancy_dependent,
        })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Whether any rate changes when cluster occupancies change.
    pub fn occupancy_dependent(&self) -> bool {
        self.occupancy_dependent
    }

    #[inline]
    pub fn rate(&self, e: usize, class: VehicleClass, occ: &impl Occupancy) -> f64 {
        let (j, k) = self.edges[e];
        match class {
            VehicleClass::Informed => self.informed[e].rate(j, k, occ),
            VehicleClass::Susceptible => self.susceptible[e].rate(j, k, occ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateDiagnostics {
    /// Largest per-vehicle rate seen over all edges and samples.
    pub sup_rate: f64,
    /// Largest `|rate(x) - rate(y)| / |x - y|` (Euclidean norm on the full
    /// informed/non-informed state vector).
    pub lipschitz_estimate: f64,
}

/// Empirical bound and Lipschitz checks for the rate functions, sampling
/// state pairs uniformly from the simplex.
pub fn rate_diagnostics(
    model: &MobilityModel,
    routing: &RoutingTable,
    g: &ClusterGraph,
    sample_count: usize,
    seed: u64,
) -> Result<RateDiagnostics> {
    if sample_count < 2 {
        return Err(Error::config("rate diagnostics need at least 2 samples"));
    }
    let table = EdgeTable::new(g, model, routing)?;
    let dim = 2 * g.len();
    let mut r = rng::seeded(seed);
    let mut draw = || -> Vec<f64> {
        let mut v: Vec<f64> = (0..dim).map(|_| rng::exponential(&mut r, 1.0)).collect();
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
        v
    };
    let occupancy = |v: &[f64]| -> Vec<f64> {
        let j = v.len() / 2;
        (0..j).map(|c| v[c] + v[j + c]).collect()
    };
    let mut sup_rate = 0.0f64;
    let mut lipschitz = 0.0f64;
    for _ in 0..sample_count {
        let x = draw();
        let y = draw();
        let dist = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let (ox, oy) = (occupancy(&x), occupancy(&y));
        let (dx, dy) = (Densities(&ox), Densities(&oy));
        for e in 0..table.len() {
            for class in [VehicleClass::Informed, VehicleClass::Susceptible] {
                let rx = table.rate(e, class, &dx);
                let ry = table.rate(e, class, &dy);
                sup_rate = sup_rate.max(rx).max(ry);
                if dist > 0.0 {
                    lipschitz = lipschitz.max((rx - ry).abs() / dist);
                }
            }
        }
    }
    Ok(RateDiagnostics {
        sup_rate,
        lipschitz_estimate: lipschitz,
    })
}

/// Mobility parameters as written in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MobilitySpec {
    Uniform {
        lambda: f64,
    },
    TwoLevel {
        lambda_d: f64,
        lambda_o: f64,
    },
    DensityDependent {
        lambda: f64,
        a: f64,
        b: f64,
    },
    Tabulated {
        table_file: String,
        #[serde(default)]
        inflow: InflowMode,
    },
    /// Rates extracted from the scenario's trajectory input.
    FromTrajectory {
        #[serde(default)]
        inflow: InflowMode,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_grid, routing_probabilities, CbdRect, GridSpec};

    fn two_clusters() -> (ClusterGraph, RoutingTable) {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![Region::Cbd, Region::Periphery],
            vec![0, 1],
            &[(0, 1), (1, 0)],
            &[],
        )
        .unwrap();
        let r = RoutingTable::uniform(&g);
        (g, r)
    }

    #[test]
    fn uniform_interior_cluster() {
        let grid = build_grid(&GridSpec {
            avenues: 6,
            streets: 6,
            cbd: None,
            allow_u_turns: false,
        })
        .unwrap();
        let g = &grid.graph;
        let r = RoutingTable::uniform(g);
        let j = grid.cluster_toward((1, 2), (2, 2)).unwrap();
        let k = g.out_neighbors(j)[0];
        let occ = vec![0.0; g.len()];
        let rate = edge_rate(
            &MobilityModel::uniform(0.1),
            &r,
            g,
            j,
            k,
            VehicleClass::Susceptible,
            &Densities(&occ),
        );
        assert!((rate - 0.1 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn density_law_values() {
        let (g, _) = two_clusters();
        // hand-built routing with p = 0.25 on 0 -> 1 is not representable on
        // this graph, so evaluate the compiled law directly
        let law = compile_edge(
            &RateLaw::DensityDependent {
                lambda: 0.1,
                a: 1.0,
                b: 70.0,
            },
            &g,
            0.25,
            0,
            1,
        );
        let got = law.rate(0, 1, &Densities(&[0.004, 0.006]));
        // 0.1 * 0.25 * 0.99^70 evaluated by repeated multiplication
        let mut want = 0.025;
        for _ in 0..70 {
            want *= 0.99;
        }
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        // 30-digit evaluation of 0.025 * 0.99^70
        assert!((got - 0.012_370_966_490_005_18).abs() < 1e-16);

        let jam = law.rate(0, 1, &Densities(&[0.5, 0.5]));
        assert_eq!(jam, 0.0);
        let over = law.rate(0, 1, &Densities(&[0.7, 0.5]));
        assert_eq!(over, 0.0);
    }

    #[test]
    fn density_monotone_and_shape() {
        let (g, _) = two_clusters();
        let law = |a| {
            compile_edge(
                &RateLaw::DensityDependent {
                    lambda: 1.0,
                    a,
                    b: 70.0,
                },
                &g,
                1.0,
                0,
                1,
            )
        };
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let r = law(2.0).rate(0, 1, &Densities(&[s / 2.0, s / 2.0]));
            assert!(r <= prev);
            prev = r;
        }
        let at = |a| law(a).rate(0, 1, &Densities(&[0.25, 0.25]));
        assert!(at(5.0) > at(1.0));
    }

    #[test]
    fn two_level_equals_uniform_when_levels_match() {
        let grid = build_grid(&GridSpec {
            avenues: 4,
            streets: 4,
            cbd: Some(CbdRect {
                x0: 1.0,
                y0: 1.0,
                x1: 2.0,
                y1: 2.0,
                include_boundary: true,
            }),
            allow_u_turns: false,
        })
        .unwrap();
        let g = &grid.graph;
        let r = routing_probabilities(g, 2.0).unwrap();
        let a = EdgeTable::new(g, &MobilityModel::uniform(0.1), &r).unwrap();
        let b = EdgeTable::new(
            g,
            &MobilityModel::new(RateLaw::TwoLevel {
                lambda_d: 0.1,
                lambda_o: 0.1,
            }),
            &r,
        )
        .unwrap();
        let occ = vec![0.0; g.len()];
        for e in 0..a.len() {
            assert_eq!(
                a.rate(e, VehicleClass::Informed, &Densities(&occ)),
                b.rate(e, VehicleClass::Informed, &Densities(&occ))
            );
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(RateLaw::DensityDependent {
            lambda: 0.1,
            a: 0.5,
            b: 2.0
        }
        .validate()
        .is_err());
        assert!(RateLaw::Uniform { lambda: -1.0 }.validate().is_err());
        assert!(RateLaw::Uniform { lambda: f64::NAN }.validate().is_err());
    }

    #[test]
    #[should_panic]
    fn non_edge_panics() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![Region::Periphery; 2],
            vec![0, 1],
            &[(0, 1)],
            &[],
        )
        .unwrap();
        let r = RoutingTable::uniform(&g);
        edge_rate(
            &MobilityModel::uniform(1.0),
            &r,
            &g,
            1,
            0,
            VehicleClass::Informed,
            &Densities(&[0.5, 0.5]),
        );
    }

    #[test]
    fn diagnostics() {
        let grid = build_grid(&GridSpec {
            avenues: 3,
            streets: 3,
            cbd: Some(CbdRect {
                x0: 1.0,
                y0: 1.0,
                x1: 1.0,
                y1: 2.0,
                include_boundary: true,
            }),
            allow_u_turns: false,
        })
        .unwrap();
        let g = &grid.graph;
        let r = routing_probabilities(g, 1.0).unwrap();
        let d = rate_diagnostics(&MobilityModel::uniform(0.1), &r, g, 50, 1).unwrap();
        assert_eq!(d.lipschitz_estimate, 0.0);
        let d = rate_diagnostics(
            &MobilityModel::new(RateLaw::TwoLevel {
                lambda_d: 0.05,
                lambda_o: 0.1,
            }),
            &r,
            g,
            50,
            1,
        )
        .unwrap();
        assert_eq!(d.lipschitz_estimate, 0.0);
        let p_max = (0..g.len())
            .flat_map(|j| r.row(j).iter().map(|x| x.1))
            .fold(0.0, f64::max);
        assert!((d.sup_rate - 0.1 * p_max).abs() < 1e-15);

        // single edge with p = 1: rate = 1 - (I_0 + S_0 + I_1 + S_1), gradient
        // has four unit entries, so the Euclidean Lipschitz constant is 2
        let g3 = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![Region::Periphery; 3],
            vec![0, 1, 2],
            &[(0, 1), (1, 2), (2, 0)],
            &[],
        )
        .unwrap();
        let r3 = RoutingTable::uniform(&g3);
        let m = MobilityModel::new(RateLaw::DensityDependent {
            lambda: 1.0,
            a: 1.0,
            b: 1.0,
        });
        let d = rate_diagnostics(&m, &r3, &g3, 2000, 7).unwrap();
        assert!(
            d.lipschitz_estimate <= 2.0 + 1e-9,
            "{}",
            d.lipschitz_estimate
        );
        assert!(d.lipschitz_estimate > 0.5);
        assert!(d.sup_rate <= 1.0);
        assert!(rate_diagnostics(&m, &r3, &g3, 1, 7).is_err());
    }

    #[test]
    fn diagnostics_deterministic() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![Region::Periphery; 2],
            vec![0, 1],
            &[(0, 1), (1, 0)],
            &[],
        )
        .unwrap();
        let r = RoutingTable::uniform(&g);
        let m = MobilityModel::new(RateLaw::DensityDependent {
            lambda: 1.0,
            a: 2.0,
            b: 3.0,
        });
        assert_eq!(
            rate_diagnostics(&m, &r, &g, 20, 3).unwrap(),
            rate_diagnostics(&m, &r, &g, 20, 3).unwrap()
        );
    }

    #[test]
    fn shared_inflow() {
        let g = ClusterGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![Region::VirtualEntry, Region::Study, Region::VirtualExit],
            vec![0, 1, 2],
            &[(0, 1), (1, 2)],
            &[],
        )
        .unwrap();
        let t = |inflow| TabulatedRates {
            rates: vec![(1, 2, 0.2)],
            entry: vec![(0, 1, 2.0)],
            total_vehicles: 100.0,
            inflow,
        };
        let r = RoutingTable::uniform(&g);
        let prop = MobilityModel::new(RateLaw::Tabulated(t(InflowMode::ReservoirProportional)));
        let cons = MobilityModel::new(RateLaw::Tabulated(t(InflowMode::Constant)));
        let occ = [0.5, 0.1, 0.4];
        let x = Densities(&occ);
        assert!(
            (edge_rate(&prop, &r, &g, 0, 1, VehicleClass::Susceptible, &x) - 0.02).abs() < 1e-15
        );
        // aggregate flow per vehicle-fraction: 0.02 / 0.5
        assert!(
            (edge_rate(&cons, &r, &g, 0, 1, VehicleClass::Susceptible, &x) - 0.04).abs() < 1e-15
        );
        assert_eq!(
            edge_rate(&prop, &r, &g, 1, 2, VehicleClass::Informed, &x),
            0.2
        );
        let empty = [0.0, 0.6, 0.4];
        assert!(
            (edge_rate(
                &cons,
                &r,
                &g,
                0,
                1,
                VehicleClass::Susceptible,
                &Densities(&empty)
            ) - 2.0)
                .abs()
                < 1e-12
        );
    }
}
