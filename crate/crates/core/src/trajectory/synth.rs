use super::{ClusterSequence, Position, TrajectoryRecord, Visit};
use crate::ctmc::{Simulator, SystemState, TransitionKind};
use crate::error::{Error, Result};
use crate::rates::MobilityModel;
use crate::rng;
use crate::topology::{ClusterGraph, Region, RoutingTable};

/// Simulates pure mobility for individually tracked vehicles and returns the
/// exact visit history of every vehicle that was inside the study area.
///
/// `init[j]` vehicles start in cluster `j`; vehicles are numbered in cluster
/// order. Vehicles starting in a virtual entry cluster enter when they first
/// move; moving into any virtual cluster ends a sequence. Visits still open
/// at `horizon` are censored there.
pub fn synth_trajectories(
    g: &ClusterGraph,
    model: &MobilityModel,
    routing: &RoutingTable,
    init: &[u64],
    horizon: f64,
    seed: u64,
) -> Result<Vec<ClusterSequence>> {
    if init.len() != g.len() {
        return Err(Error::config("initial placement does not match the graph"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let state = SystemState::new(vec![0; g.len()], init.to_vec())?;
    let mut sim = Simulator::new(g, model, routing, state)?;
    let mut rng = rng::seeded(seed);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); g.len()];
    let mut sequences: Vec<ClusterSequence> = Vec::new();
    let mut vehicle = 0usize;
    for (j, &n) in init.iter().enumerate() {
        for _ in 0..n {
            members[j].push(vehicle);
            let inside = !g.region(j).is_virtual();
            sequences.push(ClusterSequence {
                vehicle_id: vehicle as u64,
                entry: (g.region(j) == Region::VirtualEntry).then_some(j),
                visits: if inside {
                    vec![Visit {
                        cluster: j,
                        enter_t: 0.0,
                        leave_t: horizon,
                    }]
                } else {
                    Vec::new()
                },
                exit: None,
                censored: inside,
            });
            vehicle += 1;
        }
    }

    while let Some((dt, leaf)) = sim.propose(&mut rng) {
        let t = sim.time() + dt;
        if t > horizon {
            break;
        }
        let tr = sim.apply(dt, leaf);
        debug_assert_eq!(tr.kind, TransitionKind::MoveSusceptible);
        let list = &mut members[tr.from];
        let pick = ((rng::uniform(&mut rng) * list.len() as f64) as usize).min(list.len() - 1);
        let v = list.swap_remove(pick);
        members[tr.to].push(v);

        let seq = &mut sequences[v];
        if let Some(last) = seq.visits.last_mut() {
            last.leave_t = t;
        }
        if g.region(tr.to).is_virtual() {
            seq.censored = false;
            if g.region(tr.to) == Region::VirtualExit {
                seq.exit = Some(tr.to);
            }
        } else {
            seq.visits.push(Visit {
                cluster: tr.to,
                enter_t: t,
                leave_t: horizon,
            });
            seq.censored = true;
        }
    }
    sequences.retain(|s| !s.visits.is_empty());
    Ok(sequences)
}

/// Cluster-id samples reproducing the sequences: one record per visit start
/// plus one at the end (in the exit cluster, or the last cluster if censored).
pub fn sequences_to_records(sequences: &[ClusterSequence]) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    for s in sequences {
        for v in &s.visits {
            out.push(TrajectoryRecord {
                vehicle_id: s.vehicle_id,
                t: v.enter_t,
                position: Position::Cluster(v.cluster),
            });
        }
        if let Some(last) = s.visits.last() {
            let cluster = s.exit.unwrap_or(last.cluster);
            if last.leave_t > last.enter_t || s.exit.is_some() {
                out.push(TrajectoryRecord {
                    vehicle_id: s.vehicle_id,
                    t: last.leave_t,
                    position: Position::Cluster(cluster),
                });
            }
        }
    }
    out
}
