//! The invariant suite run by `slitflight validate`.

use crate::analysis::{arrival_bins, build_histogram, equivariance_chi_square, flux_trajectory_distance};
use crate::error::Result;
use crate::field::initial_wavefunction;
use crate::pipeline::{run, RunOptions};
use crate::scenarios::{preset, ScenarioConfig};
use crate::solver::reversal_error;

pub const UNITARITY_TOL: f64 = 1e-6;
pub const REVERSAL_TOL: f64 = 1e-5;
pub const EQUIVARIANCE_ALPHA: f64 = 0.01;
pub const EQUIVARIANCE_BINS: usize = 32;
pub const FREE_PATH_TOL: f64 = 1e-3;
pub const FREE_ORACLE_HORIZON: f64 = 2.0;
pub const FLUX_DISTANCE_TOL: f64 = 0.05;
pub const NODE_ABORT_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl CheckRow {
    fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold: format!("< {limit:e}"),
            pass: value < limit,
        }
    }
}

/// Snapshot time nearest to the packet's arrival at the barrier, z0/k_z.
pub fn barrier_arrival_time(config: &ScenarioConfig) -> f64 {
    let interval = config.solver.snapshot_interval();
    (config.packet.z0 / config.packet.k_z / interval).round() * interval
}

/// Max deviation of free-packet trajectories from the closed-form Bohmian
/// path, and of their first-passage times from the analytic crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeOracle {
    pub max_path_dev: f64,
    pub max_passage_dev: f64,
    pub compared: usize,
}

/// Offsets from the packet centre grow by √(1 + t²/σ⁴).
fn free_path(centre: f64, k: f64, offset: f64, sigma: f64, t: f64) -> f64 {
    centre + k * t + offset * (1.0 + t * t / sigma.powi(4)).sqrt()
}

pub fn free_gaussian_oracle(seed: u64, n: usize) -> Result<FreeOracle> {
    let mut c = preset("free-gaussian")?;
    c.ensemble.seed = seed;
    c.ensemble.n_particles = n;
    let opts = RunOptions {
        trajectories: true,
        record_paths: true,
        continue_past_screen: true,
        ..Default::default()
    };
    let out = run(&c, &opts)?;
    let outcome = out.outcome.expect("trajectories requested");
    let p = c.packet;
    let (mut max_path_dev, mut max_passage_dev, mut compared) = (0.0f64, 0.0f64, 0);
    for path in &outcome.paths {
        let s0 = path.samples[0];
        let (ox, oz) = (s0.x + p.x0, s0.z + p.z0);
        let mut reached = 0.0f64;
        for s in path.samples.iter().filter(|s| s.t <= FREE_ORACLE_HORIZON) {
            let ex = (s.x - free_path(-p.x0, p.k_x, ox, p.sigma_x, s.t)).abs();
            let ez = (s.z - free_path(-p.z0, p.k_z, oz, p.sigma_z, s.t)).abs();
            max_path_dev = max_path_dev.max(ex).max(ez);
            reached = reached.max(s.t);
        }
        if reached < FREE_ORACLE_HORIZON - 1e-9 {
            // Cut short before the horizon: count as a failure.
            max_path_dev = f64::INFINITY;
        }
        compared += 1;
        // Analytic crossing of z = d by bisection on the monotone closed form.
        let z_of = |t: f64| free_path(-p.z0, p.k_z, oz, p.sigma_z, t) - c.detection_d;
        let record = &outcome.records[path.id];
        let t_end = c.solver.t_max;
        match (z_of(t_end) >= 0.0, record.event) {
            (true, Some(e)) => {
                let (mut lo, mut hi) = (0.0, t_end);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if z_of(mid) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                max_passage_dev = max_passage_dev.max((e.t_f - hi).abs());
            }
            (false, None) => {}
            _ => max_passage_dev = f64::INFINITY,
        }
    }
    Ok(FreeOracle {
        max_path_dev,
        max_passage_dev,
        compared,
    })
}

/// Runs the invariant suite for `config` and returns one row per check.
pub fn invariant_suite(config: &ScenarioConfig, bins_x: usize, bins_t: usize) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let t_eq = barrier_arrival_time(config);
    let opts = RunOptions {
        trajectories: true,
        flux: true,
        probes: vec![t_eq],
        ..Default::default()
    };
    let out = run(config, &opts)?;
    rows.push(CheckRow::below(
        "unitarity |norm + absorbed - 1|",
        (out.ledger.accounted() - 1.0).abs(),
        UNITARITY_TOL,
    ));
    if config.barrier.schedule.is_static() {
        let psi0 = initial_wavefunction(&config.packet, &config.grid)?;
        rows.push(CheckRow::below(
            "time reversal max |psi - psi0|",
            reversal_error(&psi0, &config.solver, &config.barrier)?,
            REVERSAL_TOL,
        ));
    }
    let probe = &out.probes[0];
    let positions: Vec<(f64, f64)> = probe.positions.iter().map(|&(_, x, z)| (x, z)).collect();
    let chi = equivariance_chi_square(&positions, &probe.field, EQUIVARIANCE_BINS)?;
    rows.push(CheckRow {
        name: format!("equivariance chi-square p-value at t={:.3}", probe.t),
        value: chi.p_value,
        threshold: format!("> {EQUIVARIANCE_ALPHA}"),
        pass: chi.p_value > EQUIVARIANCE_ALPHA,
    });
    let free = free_gaussian_oracle(config.ensemble.seed, 100)?;
    rows.push(CheckRow::below("free-Gaussian path deviation", free.max_path_dev, FREE_PATH_TOL));
    rows.push(CheckRow::below(
        "free-Gaussian first-passage deviation",
        free.max_passage_dev,
        FREE_PATH_TOL,
    ));
    let outcome = out.outcome.expect("trajectories requested");
    let events = outcome.events();
    let (xe, te) = arrival_bins(&events, &config.region(), config.solver.t_max, bins_x, bins_t);
    let hist = build_histogram(&events, &xe, &te)?;
    let flux = out.flux.expect("flux requested").profile(&xe, &te)?;
    rows.push(CheckRow::below(
        "flux-trajectory total variation",
        flux_trajectory_distance(&hist, &flux)?,
        FLUX_DISTANCE_TOL,
    ));
    let s = outcome.summary;
    rows.push(CheckRow::below(
        "node-abort fraction",
        s.node_abort as f64 / s.n as f64,
        NODE_ABORT_TOL,
    ));
    Ok(rows)
}
