//! Random small instances and a brute-force jump enumeration shared by the
//! oracle tests and the acceptance run.
#![allow(dead_code)]

use infoprop::ctmc::{SystemState, TransitionKind};
use infoprop::rates::VehicleClass;
use infoprop::topology::routing_probabilities;
use infoprop::{ClusterGraph, MobilityModel, RateLaw, Region, RoutingTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One jump: stacked `[I; S]` increment, intensity at the scaled state, and
/// the matching chain transition.
pub type Jump = (Vec<f64>, f64, TransitionKind, usize, usize);

pub struct Instance {
    pub g: ClusterGraph,
    pub model: MobilityModel,
    pub routing: RoutingTable,
    pub state: SystemState,
}

fn random_law(rng: &mut ChaCha8Rng) -> RateLaw {
    match rng.gen_range(0..3) {
        0 => RateLaw::Uniform {
            lambda: rng.gen_range(0.01..1.0),
        },
        1 => RateLaw::TwoLevel {
            lambda_d: rng.gen_range(0.01..1.0),
            lambda_o: rng.gen_range(0.01..1.0),
        },
        _ => RateLaw::DensityDependent {
            lambda: rng.gen_range(0.01..1.0),
            a: rng.gen_range(1..4) as f64,
            b: rng.gen_range(1.0..80.0),
        },
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let j = rng.gen_range(2..=6);
    let centers: Vec<[f64; 2]> = (0..j)
        .map(|_| [rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)])
        .collect();
    let mut region: Vec<Region> = (0..j)
        .map(|_| {
            if rng.gen_bool(0.3) {
                Region::Cbd
            } else {
                Region::Periphery
            }
        })
        .collect();
    region[rng.gen_range(0..j)] = Region::Cbd;
    let mut mobility = Vec::new();
    for a in 0..j {
        let forced = (a + rng.gen_range(1..j)) % j;
        for b in 0..j {
            if b != a && (b == forced || rng.gen_bool(0.4)) {
                mobility.push((a, b));
            }
        }
    }
    let mut comm = Vec::new();
    for a in 0..j {
        for b in 0..j {
            if rng.gen_bool(0.35) {
                comm.push((a, b, rng.gen_range(0.1..10.0)));
            }
        }
    }
    let g = ClusterGraph::new(centers, region, (0..j).collect(), &mobility, &comm).unwrap();
    let gamma = [0.5, 1.0, 2.0, 5.0][rng.gen_range(0..4)];
    let routing = routing_probabilities(&g, gamma).unwrap();
    let mut model = MobilityModel::new(random_law(rng));
    if rng.gen_bool(0.3) {
        model.informed = Some(random_law(rng));
    }
    let informed = (0..j).map(|_| rng.gen_range(0..40)).collect();
    let mut susceptible: Vec<u64> = (0..j).map(|_| rng.gen_range(0..40)).collect();
    susceptible[0] += 1;
    let state = SystemState::new(informed, susceptible).unwrap();
    Instance {
        g,
        model,
        routing,
        state,
    }
}

/// Per-vehicle rate on `j -> k`, written out from the law definitions.
pub fn law_rate(law: &RateLaw, inst: &Instance, occ: &[f64], j: usize, k: usize) -> f64 {
    let p = inst.routing.p(j, k);
    match *law {
        RateLaw::Uniform { lambda } => lambda * p,
        RateLaw::TwoLevel { lambda_d, lambda_o } => {
            let l = if inst.g.region(j) == Region::Cbd {
                lambda_d
            } else {
                lambda_o
            };
            l * p
        }
        RateLaw::DensityDependent { lambda, a, b } => {
            let base = 1.0 - (occ[j] + occ[k]).powf(a);
            lambda * p * base.max(0.0).powf(b)
        }
        RateLaw::Tabulated(_) => unreachable!(),
    }
}

/// `(h, f(x, h))` for every jump out of scaled state `x`; `h` is a stacked
/// `[I; S]` increment.
pub fn jumps(inst: &Instance, xi: &[f64], xs: &[f64]) -> Vec<Jump> {
    let j_count = xi.len();
    let occ: Vec<f64> = xi.iter().zip(xs).map(|(a, b)| a + b).collect();
    let mut out = Vec::new();
    for (j, k) in inst.g.mobility_edges() {
        for (class, kind, x, off) in [
            (VehicleClass::Informed, TransitionKind::MoveInformed, xi, 0),
            (
                VehicleClass::Susceptible,
                TransitionKind::MoveSusceptible,
                xs,
                j_count,
            ),
        ] {
            let mut h = vec![0.0; 2 * j_count];
            h[off + j] = -1.0;
            h[off + k] = 1.0;
            let f = x[j] * law_rate(inst.model.law_for(class), inst, &occ, j, k);
            out.push((h, f, kind, j, k));
        }
    }
    for (j, k, beta) in inst.g.comm_pairs() {
        let mut h = vec![0.0; 2 * j_count];
        h[k] = 1.0;
        h[j_count + k] = -1.0;
        out.push((h, beta * xi[j] * xs[k], TransitionKind::Inform, j, k));
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
