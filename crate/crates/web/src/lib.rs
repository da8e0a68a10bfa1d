//! Browser bindings for the demo page in `www/`.
//!
//! Three operations: integrate the fluid model on the 6×6 grid and return
//! per-segment counts for drawing, compare a small CTMC ensemble with the
//! ODE, and tabulate the density-dependent rate law.

use infoprop::analysis::{export_geographic, max_curve_deviation, occupancy_share};
use infoprop::ctmc::{run_ensemble, SystemState};
use infoprop::ode::{integrate, FluidState, OdeOptions};
use infoprop::rates::VehicleClass;
use infoprop::rates::{edge_rate, Densities};
use infoprop::topology::{build_grid, routing_probabilities, CbdRect, Grid, GridSpec};
use infoprop::{ClusterGraph, MobilityModel, RateLaw, Region, RoutingTable};
use wasm_bindgen::prelude::*;

fn to_js(e: infoprop::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn grid(avenues: usize) -> infoprop::Result<Grid> {
    let mid = (avenues as f64 - 1.0) / 2.0;
    build_grid(&GridSpec {
        avenues,
        streets: avenues,
        cbd: Some(CbdRect {
            x0: (mid - 0.5).floor(),
            y0: (mid - 0.5).floor(),
            x1: (mid + 0.5).ceil(),
            y1: (mid + 0.5).ceil(),
            include_boundary: true,
        }),
        allow_u_turns: false,
    })
}

/// Uniform start with a tenth of the lower-left cluster informed.
fn seeded_start(grid: &Grid, n: u64) -> infoprop::Result<SystemState> {
    let mut s = SystemState::uniform(grid.graph.len(), n);
    let corner = grid
        .cluster_toward((0, 0), (1, 0))
        .expect("grids have a corner segment");
    s.seed(corner, (n as f64 * 0.1).round() as u64)?;
    Ok(s)
}

/// Fluid solution on a square grid, kept for drawing.
#[wasm_bindgen]
pub struct GridRun {
    times: Vec<f64>,
    rho: Vec<f64>,
    cbd_share: Vec<f64>,
    seg_x: Vec<f64>,
    seg_y: Vec<f64>,
    informed: Vec<Vec<f64>>,
    total: Vec<Vec<f64>>,
}

impl GridRun {
    pub fn compute(
        avenues: usize,
        gamma: f64,
        beta: f64,
        lambda: f64,
        n: u64,
        horizon: f64,
    ) -> infoprop::Result<GridRun> {
        let grid = grid(avenues)?;
        let g = grid.graph.with_segment_comm(beta)?;
        let routing = routing_probabilities(&g, gamma)?;
        let init = seeded_start(&grid, n)?;
        let total_n = init.total() as f64;
        let series = integrate(
            &FluidState::from_counts(&init),
            &g,
            &MobilityModel::uniform(lambda),
            &routing,
            horizon,
            1.0,
            &OdeOptions::with_tol(1e-7),
        )?;
        let mut run = GridRun {
            times: series.times.clone(),
            rho: series.rho.clone(),
            cbd_share: occupancy_share(&series, &g.cbd_clusters())?,
            seg_x: Vec::new(),
            seg_y: Vec::new(),
            informed: Vec::new(),
            total: Vec::new(),
        };
        for &t in &series.times {
            let recs = export_geographic(&series, &g, t, 1.0, Some(total_n))?;
            if run.seg_x.is_empty() {
                run.seg_x = recs.iter().map(|r| r.x).collect();
                run.seg_y = recs.iter().map(|r| r.y).collect();
            }
            run.informed
                .push(recs.iter().map(|r| r.informed_count).collect());
            run.total.push(recs.iter().map(|r| r.total_count).collect());
        }
        Ok(run)
    }
}

#[wasm_bindgen]
impl GridRun {
    #[wasm_bindgen(constructor)]
    pub fn new(
        avenues: usize,
        gamma: f64,
        beta: f64,
        lambda: f64,
        n: u32,
        horizon: f64,
    ) -> Result<GridRun, JsError> {
        Self::compute(avenues, gamma, beta, lambda, n as u64, horizon).map_err(to_js)
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn rho(&self) -> Vec<f64> {
        self.rho.clone()
    }

    #[wasm_bindgen(js_name = cbdShare)]
    pub fn cbd_share(&self) -> Vec<f64> {
        self.cbd_share.clone()
    }

    #[wasm_bindgen(js_name = segmentX)]
    pub fn segment_x(&self) -> Vec<f64> {
        self.seg_x.clone()
    }

    #[wasm_bindgen(js_name = segmentY)]
    pub fn segment_y(&self) -> Vec<f64> {
        self.seg_y.clone()
    }

    /// Informed vehicles per segment at sample `i`.
    #[wasm_bindgen(js_name = informedAt)]
    pub fn informed_at(&self, i: usize) -> Vec<f64> {
        self.informed.get(i).cloned().unwrap_or_default()
    }

    /// All vehicles per segment at sample `i`.
    #[wasm_bindgen(js_name = totalAt)]
    pub fn total_at(&self, i: usize) -> Vec<f64> {
        self.total.get(i).cloned().unwrap_or_default()
    }
}

/// Mean of a small CTMC ensemble against the ODE on the same grid.
#[wasm_bindgen]
pub struct Comparison {
    times: Vec<f64>,
    ctmc: Vec<f64>,
    ode: Vec<f64>,
    deviation: f64,
}

impl Comparison {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        avenues: usize,
        gamma: f64,
        beta: f64,
        lambda: f64,
        n: u64,
        runs: usize,
        seed: u64,
        horizon: f64,
    ) -> infoprop::Result<Comparison> {
        let grid = grid(avenues)?;
        let g = grid.graph.with_segment_comm(beta)?;
        let routing = routing_probabilities(&g, gamma)?;
        let model = MobilityModel::uniform(lambda);
        let init = seeded_start(&grid, n)?;
        let e = run_ensemble(&g, &model, &routing, &init, horizon, 1.0, runs, seed, false)?;
        let ode = integrate(
            &FluidState::from_counts(&init),
            &g,
            &model,
            &routing,
            horizon,
            1.0,
            &OdeOptions::with_tol(1e-7),
        )?;
        let deviation = max_curve_deviation(&e.mean.times, &e.mean_rho, &ode.times, &ode.rho)?;
        Ok(Comparison {
            times: ode.times.clone(),
            ctmc: e.mean_rho,
            ode: ode.rho,
            deviation,
        })
    }
}

#[wasm_bindgen]
impl Comparison {
    #[allow(clippy::too_many_arguments)]
    #[wasm_bindgen(constructor)]
    pub fn new(
        avenues: usize,
        gamma: f64,
        beta: f64,
        lambda: f64,
        n: u32,
        runs: usize,
        seed: u32,
        horizon: f64,
    ) -> Result<Comparison, JsError> {
        Self::compute(
            avenues,
            gamma,
            beta,
            lambda,
            n as u64,
            runs,
            seed as u64,
            horizon,
        )
        .map_err(to_js)
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn ctmc(&self) -> Vec<f64> {
        self.ctmc.clone()
    }

    pub fn ode(&self) -> Vec<f64> {
        self.ode.clone()
    }

    pub fn deviation(&self) -> f64 {
        self.deviation
    }
}

/// `lambda_jk / (lambda p_jk)` at `points` evenly spaced combined densities
/// in `[0, 1]`.
pub fn density_curve(a: f64, b: f64, points: usize) -> infoprop::Result<Vec<f64>> {
    let g = ClusterGraph::new(
        vec![[0.0, 0.0], [1.0, 0.0]],
        vec![Region::Periphery; 2],
        vec![0, 1],
        &[(0, 1)],
        &[],
    )?;
    let model = MobilityModel::new(RateLaw::DensityDependent { lambda: 1.0, a, b });
    model.validate()?;
    let routing = RoutingTable::uniform(&g);
    let steps = points.max(2) - 1;
    Ok((0..=steps)
        .map(|i| {
            let s = i as f64 / steps as f64;
            edge_rate(
                &model,
                &routing,
                &g,
                0,
                1,
                VehicleClass::Susceptible,
                &Densities(&[s / 2.0, s / 2.0]),
            )
        })
        .collect())
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve_js(a: f64, b: f64, points: usize) -> Result<Vec<f64>, JsError> {
    density_curve(a, b, points).map_err(to_js)
}
