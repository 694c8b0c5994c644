//! Bohmian time-of-flight simulation of double-slit experiments.
//!
//! A 2D wavefunction is propagated through a Gaussian double-slit barrier
//! with a split-operator spectral solver. Ensembles of Bohmian trajectories
//! are integrated through the resulting velocity field and their first
//! passage through a screen plane is recorded as a detection event
//! (position, arrival time, slit of passage). Natural units ħ = m = Δ = 1 are
//! used throughout, with Δ the half inter-slit separation.

pub mod analysis;
pub mod checks;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod model;
pub mod pipeline;
pub mod scenarios;
pub mod guidance;
pub mod history_io;
pub mod solver;
pub mod trajectory;

pub use error::{Result, SimError, ValidationError};
pub use field::{initial_wavefunction, WavefunctionField};
pub use grid::Grid2D;
pub use model::{
    aperture, potential, slit_factor, BarrierParams, NaturalUnits, PacketParams, SlitSchedule,
};
pub use solver::{evolve, step, Absorber, Evolution, Propagator, SolverConfig, WaveHistory};
pub use trajectory::{
    first_passage, integrate, read_events_csv, run_ensemble, write_events_csv, sample_initial, DetectionEvent, Ensemble, EnsembleConfig,
    EnsembleOutcome, EnsembleSummary, Region, SlitTag, Trajectory, TrajectoryRecord, TrajectorySample, TrajectoryStatus,
};
pub use scenarios::{load_config, preset, ScenarioConfig, PRESETS};
pub use history_io::{load_history, save_history};
pub use pipeline::{run, run_on_history, RunOptions, RunOutput};
