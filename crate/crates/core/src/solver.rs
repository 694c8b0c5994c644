//! Strang split-operator propagation of the 2D Schrödinger equation.
//!
//! One step applies a half kick exp(−i·V(t + dt/2)·dt/2), a spectral drift
//! exp(−i·k²·dt/2) and a second identical half kick. The potential is only
//! evaluated on the rows where the barrier is non-negligible.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SimError, ValidationError};
use crate::fft::{wavenumbers, Fft2d};
use crate::field::WavefunctionField;
use crate::grid::Grid2D;
use crate::model::{potential_parts, slit_factor, BarrierParams, SlitSchedule};

/// Per-step norm change that is treated as an instability.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Default memory budget for an in-memory [`WaveHistory`].
pub const DEFAULT_HISTORY_BUDGET: u128 = 2 << 30;

/// Complex absorbing layer with a sin² ramp, applied after every step as the
/// real factor exp(−W(s)·dt), W(s) = strength·sin²(π·s/(2·width)) where s is
/// the penetration depth into the layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorber {
    /// Layer thickness at the lateral (x) boundaries.
    pub width_x: f64,
    /// Layer thickness at the front and rear (z) boundaries.
    pub width_z: f64,
    pub strength: f64,
}

impl Absorber {
    pub fn validate(&self, grid: &Grid2D) -> std::result::Result<(), ValidationError> {
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return Err(ValidationError::new("solver.absorber_strength", "must be > 0"));
        }
        if !(self.width_x >= 0.0 && 2.0 * self.width_x < grid.x_max - grid.x_min) {
            return Err(ValidationError::new(
                "solver.absorber_width_x",
                "must be >= 0 and leave an interior",
            ));
        }
        if !(self.width_z >= 0.0 && 2.0 * self.width_z < grid.z_max - grid.z_min) {
            return Err(ValidationError::new(
                "solver.absorber_width_z",
                "must be >= 0 and leave an interior",
            ));
        }
        Ok(())
    }

    /// Interior region [x_lo, x_hi] × [z_lo, z_hi] left untouched by the layer.
    pub fn interior(&self, grid: &Grid2D) -> ((f64, f64), (f64, f64)) {
        (
            (grid.x_min + self.width_x, grid.x_max - self.width_x),
            (grid.z_min + self.width_z, grid.z_max - self.width_z),
        )
    }

    fn rate(&self, depth: f64, width: f64) -> f64 {
        if depth <= 0.0 || width <= 0.0 {
            return 0.0;
        }
        let s = (0.5 * std::f64::consts::PI * (depth / width).min(1.0)).sin();
        self.strength * s * s
    }

    /// W(x, z), the absorption rate at a point.
    pub fn rate_at(&self, grid: &Grid2D, x: f64, z: f64) -> f64 {
        let ((x_lo, x_hi), (z_lo, z_hi)) = self.interior(grid);
        let dx = (x_lo - x).max(x - x_hi);
        let dz = (z_lo - z).max(z - z_hi);
        self.rate(dx, self.width_x) + self.rate(dz, self.width_z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Store every `snapshot_stride`-th step.
    pub snapshot_stride: usize,
    pub absorber: Option<Absorber>,
}

impl SolverConfig {
    pub fn validate(
        &self,
        grid: &Grid2D,
        barrier: &BarrierParams,
    ) -> std::result::Result<(), ValidationError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ValidationError::new("solver.dt", "must be > 0"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(ValidationError::new("solver.t_max", "must be > 0"));
        }
        if self.snapshot_stride == 0 {
            return Err(ValidationError::new("solver.snapshot_stride", "must be >= 1"));
        }
        let interval = self.snapshot_interval();
        let n = (self.t_max / interval).round();
        if (n * interval - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return Err(ValidationError::new(
                "solver.t_max",
                "must be a whole number of snapshot intervals (dt·snapshot_stride)",
            ));
        }
        // Peak potential phase per step stays well below one radian.
        let v_peak = barrier.v0 * std::f64::consts::PI.powf(-0.25);
        if v_peak * self.dt > 0.5 {
            return Err(ValidationError::new(
                "solver.dt",
                "potential phase per step V_peak·dt must be <= 0.5",
            ));
        }
        if let Some(a) = &self.absorber {
            a.validate(grid)?;
        }
        Ok(())
    }

    pub fn snapshot_interval(&self) -> f64 {
        self.dt * self.snapshot_stride as f64
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_steps() / self.snapshot_stride + 1
    }
}

enum Kick {
    None,
    /// Precomputed exp(−i·V·dt/2) on the barrier rows.
    Static(Vec<Complex64>),
    /// V = fixed − f(t)·left on the barrier rows.
    Dynamic {
        fixed: Vec<f64>,
        left: Vec<f64>,
        schedule: SlitSchedule,
    },
}

/// Reusable propagator for one grid, barrier and time step.
pub struct Propagator {
    grid: Grid2D,
    dt: f64,
    fft: Fft2d,
    /// x-major drift factors, including the 1/N of the inverse transform.
    drift: Vec<Complex64>,
    rows: Range<usize>,
    kick: Kick,
    damping: Option<Vec<f64>>,
    spectrum: Vec<Complex64>,
    kick_buf: Vec<Complex64>,
}

/// Bookkeeping returned by [`Propagator::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub norm: f64,
    /// Probability removed by the absorber in this step, split by z < 0 and z ≥ 0.
    pub absorbed_rear: f64,
    pub absorbed_front: f64,
}

impl Propagator {
    pub fn new(grid: Grid2D, barrier: &BarrierParams, dt: f64, absorber: Option<&Absorber>) -> Self {
        let n = grid.len() as f64;
        let kx = wavenumbers(grid.nx, grid.dx());
        let kz = wavenumbers(grid.nz, grid.dz());
        let mut drift = vec![Complex64::new(0.0, 0.0); grid.len()];
        drift
            .par_chunks_mut(grid.nz)
            .enumerate()
            .for_each(|(ix, col)| {
                for (iz, d) in col.iter_mut().enumerate() {
                    let e = 0.5 * (kx[ix] * kx[ix] + kz[iz] * kz[iz]);
                    *d = Complex64::from_polar(1.0 / n, -e * dt);
                }
            });

        let rows = barrier_rows(&grid, barrier);
        let kick = if barrier.v0 == 0.0 || rows.is_empty() {
            Kick::None
        } else {
            let mut fixed = Vec::with_capacity(rows.len() * grid.nx);
            let mut left = Vec::with_capacity(rows.len() * grid.nx);
            for iz in rows.clone() {
                let z = grid.z(iz);
                for ix in 0..grid.nx {
                    let (profile, r, l) = potential_parts(grid.x(ix), z, barrier);
                    match barrier.schedule {
                        SlitSchedule::Static { f } if f == 1.0 => {
                            fixed.push(profile * (1.0 - (r + l)));
                            left.push(0.0);
                        }
                        SlitSchedule::Static { f } => {
                            fixed.push(profile * (1.0 - r - f * l));
                            left.push(0.0);
                        }
                        SlitSchedule::Dynamic { .. } => {
                            fixed.push(profile * (1.0 - r));
                            left.push(profile * l);
                        }
                    }
                }
            }
            match barrier.schedule {
                SlitSchedule::Static { .. } => Kick::Static(
                    fixed
                        .iter()
                        .map(|&v| Complex64::from_polar(1.0, -0.5 * v * dt))
                        .collect(),
                ),
                schedule @ SlitSchedule::Dynamic { .. } => Kick::Dynamic {
                    fixed,
                    left,
                    schedule,
                },
            }
        };

        let damping = absorber.map(|a| {
            let mut m = vec![1.0; grid.len()];
            for iz in 0..grid.nz {
                for ix in 0..grid.nx {
                    let w = a.rate_at(&grid, grid.x(ix), grid.z(iz));
                    m[grid.index(ix, iz)] = (-w * dt).exp();
                }
            }
            m
        });

        Self {
            grid,
            dt,
            fft: Fft2d::new(grid.nx, grid.nz),
            drift,
            kick_buf: Vec::with_capacity(rows.len() * grid.nx),
            rows,
            kick,
            damping,
            spectrum: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rows on which the barrier potential is applied.
    pub fn barrier_rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    fn prepare_kick(&mut self, t_mid: f64) {
        if let Kick::Dynamic {
            fixed,
            left,
            schedule,
        } = &self.kick
        {
            let f = slit_factor(t_mid, schedule);
            let dt = self.dt;
            self.kick_buf.clear();
            self.kick_buf.extend(
                fixed
                    .iter()
                    .zip(left)
                    .map(|(&a, &b)| Complex64::from_polar(1.0, -0.5 * (a - f * b) * dt)),
            );
        }
    }

    fn apply_kick(&self, values: &mut [Complex64]) {
        let factors: &[Complex64] = match &self.kick {
            Kick::None => return,
            Kick::Static(k) => k,
            Kick::Dynamic { .. } => &self.kick_buf,
        };
        let nx = self.grid.nx;
        values[self.rows.start * nx..self.rows.end * nx]
            .par_chunks_mut(nx)
            .zip(factors.par_chunks(nx))
            .for_each(|(row, k)| {
                for (v, f) in row.iter_mut().zip(k) {
                    *v *= f;
                }
            });
    }

    /// Advances `field` by one time step in place.
    pub fn step(&mut self, field: &mut WavefunctionField) -> StepReport {
        debug_assert_eq!(field.grid, self.grid);
        self.prepare_kick(field.t + 0.5 * self.dt);
        self.apply_kick(&mut field.values);
        self.fft.forward(&mut field.values, &mut self.spectrum);
        self.spectrum
            .par_iter_mut()
            .zip(self.drift.par_iter())
            .for_each(|(s, d)| *s *= d);
        self.fft.inverse(&mut self.spectrum, &mut field.values);
        self.apply_kick(&mut field.values);
        field.t += self.dt;

        let nx = self.grid.nx;
        let z_split = self.grid.nz.min(
            ((0.0 - self.grid.z_min) / self.grid.dz()).ceil().max(0.0) as usize,
        );
        let rows: Vec<(f64, f64)> = match &self.damping {
            None => field
                .values
                .par_chunks(nx)
                .map(|row| (row.iter().map(|v| v.norm_sqr()).sum::<f64>(), 0.0))
                .collect(),
            Some(mask) => field
                .values
                .par_chunks_mut(nx)
                .zip(mask.par_chunks(nx))
                .map(|(row, m)| {
                    let mut kept = 0.0;
                    let mut lost = 0.0;
                    for (v, &f) in row.iter_mut().zip(m) {
                        let p = v.norm_sqr();
                        if f < 1.0 {
                            *v *= f;
                            lost += p * (1.0 - f * f);
                            kept += p * f * f;
                        } else {
                            kept += p;
                        }
                    }
                    (kept, lost)
                })
                .collect(),
        };
        let area = self.grid.cell_area();
        let norm = rows.iter().map(|r| r.0).sum::<f64>() * area;
        let absorbed_rear = rows[..z_split].iter().map(|r| r.1).sum::<f64>() * area;
        let absorbed_front = rows[z_split..].iter().map(|r| r.1).sum::<f64>() * area;
        StepReport {
            norm,
            absorbed_rear,
            absorbed_front,
        }
    }
}

fn barrier_rows(grid: &Grid2D, barrier: &BarrierParams) -> Range<usize> {
    if barrier.v0 == 0.0 {
        return 0..0;
    }
    let w = barrier.support_half_width();
    let dz = grid.dz();
    let lo = ((-w - grid.z_min) / dz).floor().max(0.0) as usize;
    let hi = (((w - grid.z_min) / dz).ceil() as usize + 1).min(grid.nz);
    lo.min(hi)..hi
}

/// One split-operator step without absorption.
pub fn step(field: &WavefunctionField, dt: f64, barrier: &BarrierParams) -> Result<WavefunctionField> {
    let mut out = field.clone();
    let before = field.norm_sqr();
    let report = Propagator::new(field.grid, barrier, dt, None).step(&mut out);
    check_drift(before, &report, out.t)?;
    Ok(out)
}

fn check_drift(before: f64, report: &StepReport, t: f64) -> Result<()> {
    let drift = (report.norm + report.absorbed_front + report.absorbed_rear - before).abs();
    if drift > NORM_DRIFT_LIMIT || !drift.is_finite() {
        return Err(SimError::NormDrift { t, drift });
    }
    Ok(())
}

/// Running totals kept by [`Evolution`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormLedger {
    pub norm: f64,
    pub absorbed_rear: f64,
    pub absorbed_front: f64,
}

impl NormLedger {
    /// norm + everything absorbed; equals the initial norm for a unitary solve.
    pub fn accounted(&self) -> f64 {
        self.norm + self.absorbed_rear + self.absorbed_front
    }
}

/// Streaming time evolution that yields the field at every snapshot time.
pub struct Evolution {
    propagator: Propagator,
    field: WavefunctionField,
    config: SolverConfig,
    steps_done: usize,
    started: bool,
    ledger: NormLedger,
}

impl Evolution {
    pub fn new(initial: WavefunctionField, config: SolverConfig, barrier: &BarrierParams) -> Result<Self> {
        barrier.validate()?;
        config.validate(&initial.grid, barrier)?;
        let propagator = Propagator::new(initial.grid, barrier, config.dt, config.absorber.as_ref());
        let norm = initial.norm_sqr();
        Ok(Self {
            propagator,
            field: initial,
            config,
            steps_done: 0,
            started: false,
            ledger: NormLedger {
                norm,
                ..Default::default()
            },
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn ledger(&self) -> NormLedger {
        self.ledger
    }

    pub fn field(&self) -> &WavefunctionField {
        &self.field
    }

    pub fn into_field(self) -> WavefunctionField {
        self.field
    }

    /// Returns the next snapshot, or `None` once t_max has been passed.
    pub fn next_snapshot(&mut self) -> Result<Option<&WavefunctionField>> {
        if !self.started {
            self.started = true;
            return Ok(Some(&self.field));
        }
        let n_steps = self.config.n_steps();
        if self.steps_done >= n_steps {
            return Ok(None);
        }
        let target = (self.steps_done + self.config.snapshot_stride).min(n_steps);
        while self.steps_done < target {
            let report = self.propagator.step(&mut self.field);
            self.steps_done += 1;
            // Pin the clock to the step index instead of accumulating dt.
            self.field.t = self.steps_done as f64 * self.config.dt;
            check_drift(self.ledger.norm, &report, self.field.t)?;
            self.ledger.norm = report.norm;
            self.ledger.absorbed_rear += report.absorbed_rear;
            self.ledger.absorbed_front += report.absorbed_front;
        }
        Ok(Some(&self.field))
    }
}

/// Time-ordered snapshots with uniform spacing, starting at t = 0.
#[derive(Debug, Clone)]
pub struct WaveHistory {
    pub grid: Grid2D,
    pub interval: f64,
    pub snapshots: Vec<WavefunctionField>,
    pub ledger: NormLedger,
}

impl WaveHistory {
    pub fn t_end(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn bytes_per_snapshot(grid: &Grid2D) -> u128 {
        grid.len() as u128 * std::mem::size_of::<Complex64>() as u128
    }
}

/// Solves over [0, t_max] and keeps every snapshot in memory.
pub fn evolve(initial: &WavefunctionField, config: &SolverConfig, barrier: &BarrierParams) -> Result<WaveHistory> {
    evolve_with_budget(initial, config, barrier, DEFAULT_HISTORY_BUDGET)
}

pub fn evolve_with_budget(
    initial: &WavefunctionField,
    config: &SolverConfig,
    barrier: &BarrierParams,
    budget_bytes: u128,
) -> Result<WaveHistory> {
    let grid = initial.grid;
    if config.t_max == 0.0 {
        return Ok(WaveHistory {
            grid,
            interval: config.snapshot_interval(),
            snapshots: vec![initial.clone()],
            ledger: NormLedger {
                norm: initial.norm_sqr(),
                ..Default::default()
            },
        });
    }
    config.validate(&grid, barrier)?;
    let snapshots = config.n_snapshots();
    let bytes = snapshots as u128 * WaveHistory::bytes_per_snapshot(&grid);
    if bytes > budget_bytes {
        return Err(SimError::OutOfMemory { snapshots, bytes });
    }
    let mut evo = Evolution::new(initial.clone(), *config, barrier)?;
    let mut stored = Vec::with_capacity(snapshots);
    while let Some(f) = evo.next_snapshot()? {
        stored.push(f.clone());
    }
    Ok(WaveHistory {
        grid,
        interval: config.snapshot_interval(),
        snapshots: stored,
        ledger: evo.ledger(),
    })
}

/// Evolves `initial` to t_max without absorption, conjugates, evolves for
/// t_max again and conjugates back; returns max |ψ − ψ₀| over the grid.
/// Only static barriers are time-reversal invariant.
pub fn reversal_error(initial: &WavefunctionField, config: &SolverConfig, barrier: &BarrierParams) -> Result<f64> {
    if !barrier.schedule.is_static() {
        return Err(ValidationError::new("barrier.schedule", "time reversal needs a static barrier").into());
    }
    let plain = SolverConfig {
        absorber: None,
        ..*config
    };
    plain.validate(&initial.grid, barrier)?;
    let mut prop = Propagator::new(initial.grid, barrier, plain.dt, None);
    let mut psi = initial.clone();
    for _ in 0..2 {
        for _ in 0..plain.n_steps() {
            prop.step(&mut psi);
        }
        psi.conjugate();
    }
    Ok(psi
        .values
        .iter()
        .zip(&initial.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// ⟨ψ|H|ψ⟩ for the potential at time t, kinetic part evaluated spectrally.
pub fn energy(field: &WavefunctionField, barrier: &BarrierParams) -> f64 {
    let g = field.grid;
    let fft = Fft2d::new(g.nx, g.nz);
    let mut data = field.values.clone();
    let mut spec = vec![Complex64::new(0.0, 0.0); g.len()];
    fft.forward(&mut data, &mut spec);
    let kx = wavenumbers(g.nx, g.dx());
    let kz = wavenumbers(g.nz, g.dz());
    let n = g.len() as f64;
    let mut kinetic = 0.0;
    for ix in 0..g.nx {
        for iz in 0..g.nz {
            let p = spec[ix * g.nz + iz].norm_sqr();
            kinetic += 0.5 * (kx[ix] * kx[ix] + kz[iz] * kz[iz]) * p;
        }
    }
    // Parseval: ∑|ψ|² = ∑|ψ̂|²/N.
    kinetic *= g.cell_area() / n;
    let f = slit_factor(field.t, &barrier.schedule);
    let mut pot = 0.0;
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            let v = crate::model::potential_with_factor(g.x(ix), g.z(iz), f, barrier);
            pot += v * field.values[g.index(ix, iz)].norm_sqr();
        }
    }
    kinetic + pot * g.cell_area()
}
