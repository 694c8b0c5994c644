//! Solve → guidance → ensemble/flux, driven one snapshot at a time so that
//! only two guidance frames are alive at once.

use std::path::PathBuf;
use std::time::Instant;

use crate::analysis::FluxTrace;
use crate::error::{Result, SimError};
use crate::field::{initial_wavefunction, WavefunctionField};
use crate::guidance::{GradientWorkspace, GuidanceFrame};
use crate::history_io::HistoryWriter;
use crate::scenarios::ScenarioConfig;
use crate::solver::{Evolution, NormLedger, WaveHistory};
use crate::trajectory::{sample_initial, Ensemble, EnsembleOutcome};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Integrate the scenario's ensemble.
    pub trajectories: bool,
    /// Record j_z on the screen at every snapshot.
    pub flux: bool,
    /// Keep every accepted trajectory sample.
    pub record_paths: bool,
    /// Follow trajectories through the screen until the end of the run.
    pub continue_past_screen: bool,
    /// Snapshot times at which ensemble positions and the field are captured
    /// (the nearest snapshot is used).
    pub probes: Vec<f64>,
    /// Stream every snapshot to this file.
    pub dump_history: Option<PathBuf>,
}

/// Ensemble and field at one snapshot.
#[derive(Debug, Clone)]
pub struct Probe {
    pub t: f64,
    /// (id, x, z) of particles still in flight.
    pub positions: Vec<(usize, f64, f64)>,
    pub field: WavefunctionField,
}

#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub solve: f64,
    pub guidance: f64,
    pub trajectories: f64,
    pub flux: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub outcome: Option<EnsembleOutcome>,
    pub flux: Option<FluxTrace>,
    pub probes: Vec<Probe>,
    pub initial_norm: f64,
    pub ledger: NormLedger,
    pub final_field: WavefunctionField,
    pub timings: StageTimings,
}

struct Stages {
    interval: f64,
    ws: GradientWorkspace,
    prev: Option<GuidanceFrame>,
    ensemble: Option<Ensemble>,
    flux: Option<FluxTrace>,
    probes: Vec<Probe>,
    pending: Vec<f64>,
    dump: Option<HistoryWriter>,
    timings: StageTimings,
}

impl Stages {
    fn new(config: &ScenarioConfig, opts: &RunOptions, interval: f64, n_snapshots: usize) -> Result<Self> {
        let grid = config.grid;
        let ensemble = if opts.trajectories {
            let initial = sample_initial(&config.packet, config.ensemble.n_particles, config.ensemble.seed);
            let mut e = Ensemble::new(&initial, &config.ensemble, config.detection_d, config.region());
            if opts.record_paths {
                e.record_paths();
            }
            if opts.continue_past_screen {
                e.continue_past_screen();
            }
            Some(e)
        } else {
            None
        };
        let flux = opts
            .flux
            .then(|| FluxTrace::new(config.detection_d, (0..grid.nx).map(|i| grid.x(i)).collect()));
        let dump = match &opts.dump_history {
            Some(path) => Some(HistoryWriter::create(path, grid, n_snapshots, interval)?),
            None => None,
        };
        let mut pending = opts.probes.clone();
        pending.sort_by(f64::total_cmp);
        Ok(Self {
            interval,
            ws: GradientWorkspace::new(grid),
            prev: None,
            ensemble,
            flux,
            probes: Vec::new(),
            pending,
            dump,
            timings: StageTimings::default(),
        })
    }

    fn needs_frames(&self) -> bool {
        self.ensemble.is_some() || self.flux.is_some()
    }

    fn feed(&mut self, field: &WavefunctionField) -> Result<()> {
        if let Some(w) = &mut self.dump {
            w.write(field)?;
        }
        if self.needs_frames() {
            let clock = Instant::now();
            let frame = self.ws.frame(field);
            self.timings.guidance += clock.elapsed().as_secs_f64();
            if let Some(trace) = &mut self.flux {
                let clock = Instant::now();
                trace.push(&frame)?;
                self.timings.flux += clock.elapsed().as_secs_f64();
            }
            if let (Some(e), Some(prev)) = (&mut self.ensemble, &self.prev) {
                let clock = Instant::now();
                e.advance(prev, &frame);
                self.timings.trajectories += clock.elapsed().as_secs_f64();
            }
            self.prev = Some(frame);
        }
        while let Some(&tp) = self.pending.first() {
            if tp > field.t + 0.5 * self.interval {
                break;
            }
            self.pending.remove(0);
            self.probes.push(Probe {
                t: field.t,
                positions: self.ensemble.as_ref().map(|e| e.positions()).unwrap_or_default(),
                field: field.clone(),
            });
        }
        Ok(())
    }

    fn finish(self, initial_norm: f64, ledger: NormLedger, final_field: WavefunctionField) -> Result<RunOutput> {
        if let Some(w) = self.dump {
            w.finish()?;
        }
        Ok(RunOutput {
            outcome: self.ensemble.map(Ensemble::finish),
            flux: self.flux,
            probes: self.probes,
            initial_norm,
            ledger,
            final_field,
            timings: self.timings,
        })
    }
}

/// Runs the scenario from t = 0, solving the Schrödinger equation on the fly.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let psi0 = initial_wavefunction(&config.packet, &config.grid)?;
    let initial_norm = psi0.norm_sqr();
    let solver = config.solver;
    let mut evolution = Evolution::new(psi0, solver, &config.barrier)?;
    let mut stages = Stages::new(config, opts, solver.snapshot_interval(), solver.n_snapshots())?;
    loop {
        let clock = Instant::now();
        let next = evolution.next_snapshot()?;
        stages.timings.solve += clock.elapsed().as_secs_f64();
        match next {
            Some(field) => stages.feed(field)?,
            None => break,
        }
    }
    let ledger = evolution.ledger();
    stages.finish(initial_norm, ledger, evolution.into_field())
}

/// Runs the trajectory and flux stages over a stored history.
pub fn run_on_history(config: &ScenarioConfig, history: &WaveHistory, opts: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    if history.grid != config.grid {
        return Err(SimError::HistoryFormat("history grid differs from the scenario grid".into()));
    }
    let expected = config.solver.snapshot_interval();
    if (history.interval - expected).abs() > 1e-12 * expected || history.is_empty() {
        return Err(SimError::HistoryFormat(format!(
            "history snapshot interval {} differs from the scenario's {}",
            history.interval, expected
        )));
    }
    let opts = RunOptions {
        dump_history: None,
        ..opts.clone()
    };
    let mut stages = Stages::new(config, &opts, history.interval, history.len())?;
    for snap in &history.snapshots {
        stages.feed(snap)?;
    }
    let initial_norm = history.snapshots[0].norm_sqr();
    let last = history.snapshots.last().cloned().expect("nonempty history");
    stages.finish(initial_norm, history.ledger, last)
}
