//! Drift and transition rates against a brute-force sum over jumps.

mod common;

use common::{close, jumps, random_instance};
use infoprop::ctmc::{enumerate_transitions, run, Simulator};
use infoprop::ode::{FluidState, FluidSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn drift_equals_sum_over_jumps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let x = FluidState::from_counts(&inst.state);
        let sys = FluidSystem::new(&inst.g, &inst.model, &inst.routing).unwrap();
        let got = sys.drift(&x.to_vec());
        let mut want = vec![0.0; got.len()];
        for (h, f, ..) in jumps(&inst, &x.informed, &x.susceptible) {
            for (w, hv) in want.iter_mut().zip(&h) {
                *w += hv * f;
            }
        }
        for (i, (a, b)) in got.iter().zip(&want).enumerate() {
            assert!(
                (a - b).abs() <= 1e-12,
                "case {case} component {i}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn chain_rates_are_population_times_intensity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let n = inst.state.total() as f64;
        let x = FluidState::from_counts(&inst.state);
        let mut want: Vec<_> = jumps(&inst, &x.informed, &x.susceptible)
            .into_iter()
            .filter(|j| j.1 > 0.0)
            .map(|(_, f, kind, a, b)| (kind, a, b, n * f))
            .collect();
        let got = enumerate_transitions(&inst.state, &inst.g, &inst.model, &inst.routing).unwrap();
        assert_eq!(got.len(), want.len(), "case {case}");
        for t in &got {
            let pos = want
                .iter()
                .position(|w| (w.0, w.1, w.2) == (t.kind, t.from, t.to))
                .unwrap_or_else(|| panic!("case {case}: unexpected {t:?}"));
            let w = want.swap_remove(pos);
            assert!(close(t.rate, w.3, 1e-13), "case {case}: {t:?} vs {}", w.3);
        }
    }
}

#[test]
fn simulator_total_rate_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        let sim = Simulator::new(&inst.g, &inst.model, &inst.routing, inst.state.clone()).unwrap();
        let total: f64 = enumerate_transitions(&inst.state, &inst.g, &inst.model, &inst.routing)
            .unwrap()
            .iter()
            .map(|t| t.rate)
            .sum();
        assert!(close(sim.total_rate(), total, 1e-12));
    }
}

#[test]
fn incremental_updates_match_full_recompute() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..40 {
        let inst = random_instance(&mut rng);
        let mut a =
            Simulator::new(&inst.g, &inst.model, &inst.routing, inst.state.clone()).unwrap();
        let mut b = a.clone();
        b.set_full_recompute(true);
        let mut ra = infoprop::rng::seeded(case);
        let mut rb = infoprop::rng::seeded(case);
        for step in 0..2000 {
            let (pa, pb) = (a.propose(&mut ra), b.propose(&mut rb));
            match (pa, pb) {
                (None, None) => break,
                (Some((da, la)), Some((db, lb))) => {
                    assert_eq!(la, lb, "case {case} step {step}");
                    assert_eq!(da.to_bits(), db.to_bits(), "case {case} step {step}");
                    a.apply(da, la);
                    b.apply(db, lb);
                    assert_eq!(a.state(), b.state());
                    assert_eq!(
                        a.total_rate().to_bits(),
                        b.total_rate().to_bits(),
                        "case {case} step {step}"
                    );
                }
                other => panic!("case {case} step {step}: {other:?}"),
            }
        }
    }
}

#[test]
fn runs_are_reproducible_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inst = random_instance(&mut rng);
    let a = run(
        &inst.g,
        &inst.model,
        &inst.routing,
        &inst.state,
        20.0,
        0.5,
        3,
    )
    .unwrap();
    let b = run(
        &inst.g,
        &inst.model,
        &inst.routing,
        &inst.state,
        20.0,
        0.5,
        3,
    )
    .unwrap();
    assert_eq!(a, b);
}
