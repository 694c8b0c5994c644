//! Bohmian trajectories: equilibrium sampling, adaptive integration of the
//! guidance equation and first-passage detection at the screen z = d.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, SimError, ValidationError};
use crate::guidance::{FramePair, GradientWorkspace, GuidanceFrame};
use crate::grid::Grid2D;
use crate::model::PacketParams;
use crate::solver::WaveHistory;

/// Node retries (each at a tenth of the previous step) before giving up.
const NODE_RETRIES: u32 = 2;
const H_MIN: f64 = 1e-10;
const H_INITIAL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrajectoryStatus {
    Detected,
    /// Never reached the screen: reflected, left the simulated region, or
    /// still short of it at the end of the history.
    Backscattered,
    NodeAbort,
}

impl TrajectoryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryStatus::Detected => "detected",
            TrajectoryStatus::Backscattered => "backscattered",
            TrajectoryStatus::NodeAbort => "node_abort",
        }
    }
}

/// Slit of passage: sign of x at the first upward crossing of z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlitTag {
    Left,
    Right,
    Undetermined,
}

impl SlitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SlitTag::Left => "left",
            SlitTag::Right => "right",
            SlitTag::Undetermined => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub samples: Vec<TrajectorySample>,
    pub status: TrajectoryStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub trajectory_id: usize,
    pub x_hit: f64,
    pub t_f: f64,
    pub slit_tag: SlitTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub integrator_tol: f64,
    /// Relative |ψ|² floor below which the velocity counts as undefined.
    pub node_epsilon: f64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        if self.n_particles == 0 {
            return Err(ValidationError::new("ensemble.n_particles", "must be >= 1"));
        }
        if !(self.integrator_tol > 0.0 && self.integrator_tol.is_finite()) {
            return Err(ValidationError::new("ensemble.integrator_tol", "must be > 0"));
        }
        if !(self.node_epsilon > 0.0 && self.node_epsilon.is_finite()) {
            return Err(ValidationError::new("ensemble.node_epsilon", "must be > 0"));
        }
        Ok(())
    }
}

/// Draws n positions from |ψ(r, 0)|² of the packet: independent normals with
/// means (−x0, −z0) and standard deviations σ/√2.
pub fn sample_initial(packet: &PacketParams, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sx, sz) = (
        packet.sigma_x / std::f64::consts::SQRT_2,
        packet.sigma_z / std::f64::consts::SQRT_2,
    );
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (-packet.x0 + sx * a, -packet.z0 + sz * b)
        })
        .collect()
}

/// Rectangle in which trajectories are followed; leaving it ends the
/// trajectory without detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_lo: f64,
    pub x_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Region {
    /// The interpolation lattice of a grid.
    pub fn of_grid(grid: &Grid2D) -> Self {
        Self {
            x_lo: grid.x_min,
            x_hi: grid.x(grid.nx - 1),
            z_lo: grid.z_min,
            z_hi: grid.z(grid.nz - 1),
        }
    }

    #[inline]
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_lo && x <= self.x_hi && z >= self.z_lo && z <= self.z_hi
    }
}

/// Incremental first-passage bookkeeping over a stream of samples.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PassageTracker {
    d: f64,
    prev: Option<TrajectorySample>,
    slit: SlitTag,
    hit: Option<(f64, f64)>,
}

impl PassageTracker {
    pub(crate) fn new(d: f64) -> Self {
        Self {
            d,
            prev: None,
            slit: SlitTag::Undetermined,
            hit: None,
        }
    }

    /// Feeds the next sample; returns true once the screen has been reached.
    pub(crate) fn push(&mut self, s: TrajectorySample) -> bool {
        if self.hit.is_some() {
            return true;
        }
        if let Some(p) = self.prev {
            if self.slit == SlitTag::Undetermined && p.z < 0.0 && s.z >= 0.0 {
                let x_cross = lerp_at(p, s, 0.0).1;
                self.slit = if x_cross < 0.0 {
                    SlitTag::Left
                } else if x_cross > 0.0 {
                    SlitTag::Right
                } else {
                    SlitTag::Undetermined
                };
            }
            if p.z < self.d && s.z >= self.d {
                let (t, x) = lerp_at(p, s, self.d);
                self.hit = Some((t, x));
            }
        }
        self.prev = Some(s);
        self.hit.is_some()
    }

    pub(crate) fn slit(&self) -> SlitTag {
        self.slit
    }

    pub(crate) fn event(&self, trajectory_id: usize) -> Option<DetectionEvent> {
        self.hit.map(|(t_f, x_hit)| DetectionEvent {
            trajectory_id,
            x_hit,
            t_f,
            slit_tag: self.slit,
        })
    }
}

/// (t, x) where the segment p → s crosses the level z.
fn lerp_at(p: TrajectorySample, s: TrajectorySample, z: f64) -> (f64, f64) {
    let w = (z - p.z) / (s.z - p.z);
    (p.t + w * (s.t - p.t), p.x + w * (s.x - p.x))
}

/// Earliest crossing of z = d; `None` if the trajectory never gets there.
pub fn first_passage(traj: &Trajectory, d: f64) -> Option<DetectionEvent> {
    let mut tracker = PassageTracker::new(d);
    for &s in &traj.samples {
        if tracker.push(s) {
            break;
        }
    }
    tracker.event(traj.id)
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum StepFailure {
    Node,
    Outside,
}

/// One particle being integrated.
#[derive(Debug, Clone)]
pub(crate) struct Particle {
    pub id: usize,
    pub x0: f64,
    pub z0: f64,
    t: f64,
    x: f64,
    z: f64,
    h: f64,
    k1: Option<[f64; 2]>,
    pub status: Option<TrajectoryStatus>,
    tracker: PassageTracker,
    stop_at_screen: bool,
    crossed_axis: bool,
    path: Option<Vec<TrajectorySample>>,
}

impl Particle {
    pub(crate) fn new(id: usize, x0: f64, z0: f64, d: f64) -> Self {
        let mut tracker = PassageTracker::new(d);
        let start = TrajectorySample { t: 0.0, x: x0, z: z0 };
        tracker.push(start);
        Self {
            id,
            x0,
            z0,
            t: 0.0,
            x: x0,
            z: z0,
            h: H_INITIAL,
            k1: None,
            status: None,
            tracker,
            stop_at_screen: true,
            crossed_axis: false,
            path: None,
        }
    }

    pub(crate) fn position(&self) -> (f64, f64) {
        (self.x, self.z)
    }

    pub(crate) fn is_active(&self) -> bool {
        self.status.is_none()
    }

    fn rk_step(
        &self,
        pair: &FramePair,
        h: f64,
        k1: [f64; 2],
        eps: f64,
    ) -> std::result::Result<([f64; 2], [f64; 2], f64), StepFailure> {
        let mut k = [[0.0f64; 2]; 7];
        k[0] = k1;
        for s in 1..7 {
            let (mut x, mut z) = (self.x, self.z);
            for (j, kj) in k.iter().enumerate().take(s) {
                x += h * A[s][j] * kj[0];
                z += h * A[s][j] * kj[1];
            }
            k[s] = match pair.velocity(x, z, self.t + C[s] * h, eps) {
                Ok((vx, vz)) => [vx, vz],
                Err(SimError::NodeEncounter { .. }) => return Err(StepFailure::Node),
                Err(_) => return Err(StepFailure::Outside),
            };
        }
        let (mut nx, mut nz) = (self.x, self.z);
        let (mut ex, mut ez) = (0.0, 0.0);
        for s in 0..7 {
            if s < 6 {
                nx += h * A[6][s] * k[s][0];
                nz += h * A[6][s] * k[s][1];
            }
            ex += h * E[s] * k[s][0];
            ez += h * E[s] * k[s][1];
        }
        Ok(([nx, nz], k[6], ex.abs().max(ez.abs())))
    }

    /// Integrates from the particle's current time up to `pair.b.t`, calling
    /// `on_sample` for every accepted step.
    pub(crate) fn advance<F: FnMut(TrajectorySample)>(
        &mut self,
        pair: &FramePair,
        region: &Region,
        tol: f64,
        eps: f64,
        mut on_sample: F,
    ) {
        let t_end = pair.b.t;
        let h_max = (pair.b.t - pair.a.t).max(H_MIN);
        let mut retries = 0u32;
        while self.status.is_none() && self.t < t_end {
            let k1 = match self.k1 {
                Some(k) => k,
                None => match pair.velocity(self.x, self.z, self.t, eps) {
                    Ok((vx, vz)) => [vx, vz],
                    Err(SimError::NodeEncounter { .. }) => {
                        self.status = Some(TrajectoryStatus::NodeAbort);
                        return;
                    }
                    Err(_) => {
                        self.status = Some(TrajectoryStatus::Backscattered);
                        return;
                    }
                },
            };
            self.k1 = Some(k1);
            let mut h = self.h.min(h_max);
            let last = self.t + h >= t_end;
            if last {
                h = t_end - self.t;
            }
            match self.rk_step(pair, h, k1, eps) {
                Err(StepFailure::Node) => {
                    if retries >= NODE_RETRIES {
                        self.status = Some(TrajectoryStatus::NodeAbort);
                        return;
                    }
                    retries += 1;
                    self.h = (h / 10.0).max(H_MIN);
                }
                Err(StepFailure::Outside) => {
                    self.status = Some(TrajectoryStatus::Backscattered);
                    return;
                }
                Ok((next, k7, err)) => {
                    let ratio = err / tol;
                    if ratio <= 1.0 || h <= H_MIN {
                        retries = 0;
                        self.t = if last { t_end } else { self.t + h };
                        self.x = next[0];
                        self.z = next[1];
                        self.k1 = Some(k7);
                        let grow = if ratio > 0.0 {
                            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                        } else {
                            5.0
                        };
                        // Keep the size proposed before a truncated last step.
                        if !last || h * grow > self.h {
                            self.h = (h * grow).max(H_MIN);
                        }
                        let sample = TrajectorySample {
                            t: self.t,
                            x: self.x,
                            z: self.z,
                        };
                        on_sample(sample);
                        if let Some(path) = &mut self.path {
                            path.push(sample);
                        }
                        if self.x * self.x0 < 0.0 {
                            self.crossed_axis = true;
                        }
                        let hit = self.tracker.push(sample);
                        if hit && self.stop_at_screen {
                            self.status = Some(TrajectoryStatus::Detected);
                        } else if !region.contains(self.x, self.z) {
                            self.status = Some(if hit {
                                TrajectoryStatus::Detected
                            } else {
                                TrajectoryStatus::Backscattered
                            });
                        }
                    } else {
                        self.h = (h * (0.9 * ratio.powf(-0.2)).max(0.1)).max(H_MIN);
                    }
                }
            }
        }
    }

    /// Finalizes a particle whose history ran out.
    pub(crate) fn close(&mut self) {
        if self.tracker.event(self.id).is_some() {
            self.status = Some(TrajectoryStatus::Detected);
        } else if self.status.is_none() {
            self.status = Some(TrajectoryStatus::Backscattered);
        }
    }

    pub(crate) fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            trajectory_id: self.id,
            x0: self.x0,
            z0: self.z0,
            status: self.status.unwrap_or(TrajectoryStatus::Backscattered),
            slit: self.tracker.slit(),
            event: self.tracker.event(self.id),
            crossed_axis: self.crossed_axis,
        }
    }
}

/// Outcome of one trajectory of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_id: usize,
    pub x0: f64,
    pub z0: f64,
    pub status: TrajectoryStatus,
    pub slit: SlitTag,
    pub event: Option<DetectionEvent>,
    /// x changed sign relative to x0 at some accepted step.
    pub crossed_axis: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSummary {
    pub n: usize,
    pub detected: usize,
    pub backscattered: usize,
    pub node_abort: usize,
}

impl EnsembleSummary {
    /// Detected / n.
    pub fn transmission(&self) -> f64 {
        self.detected as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    /// One record per trajectory, ordered by id.
    pub records: Vec<TrajectoryRecord>,
    pub summary: EnsembleSummary,
    /// Accepted integration samples per trajectory, if recording was enabled.
    pub paths: Vec<Trajectory>,
}

impl EnsembleOutcome {
    pub fn events(&self) -> Vec<DetectionEvent> {
        self.records.iter().filter_map(|r| r.event).collect()
    }
}

/// Lock-step ensemble driven one frame interval at a time.
///
/// Each particle only ever sees the frame pair bracketing its current time,
/// so frames can be produced on the fly and dropped afterwards.
pub struct Ensemble {
    particles: Vec<Particle>,
    tol: f64,
    eps: f64,
    region: Region,
    d: f64,
}

impl Ensemble {
    pub fn new(initial: &[(f64, f64)], config: &EnsembleConfig, d: f64, region: Region) -> Self {
        let particles = initial
            .iter()
            .enumerate()
            .map(|(id, &(x, z))| {
                let mut p = Particle::new(id, x, z, d);
                if !region.contains(x, z) {
                    p.status = Some(TrajectoryStatus::Backscattered);
                }
                p
            })
            .collect();
        Self {
            particles,
            tol: config.integrator_tol,
            eps: config.node_epsilon,
            region,
            d,
        }
    }

    /// Keeps every accepted sample (memory grows with the step count).
    pub fn record_paths(&mut self) {
        for p in &mut self.particles {
            let (x, z) = p.position();
            p.path = Some(vec![TrajectorySample { t: p.t, x, z }]);
        }
    }

    /// Integrates through the screen up to the end of the history instead of
    /// stopping at the first passage; events are unchanged.
    pub fn continue_past_screen(&mut self) {
        for p in &mut self.particles {
            p.stop_at_screen = false;
        }
    }

    pub fn screen(&self) -> f64 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn active(&self) -> usize {
        self.particles.iter().filter(|p| p.is_active()).count()
    }

    /// Moves every active particle from `a.t` to `b.t`.
    pub fn advance(&mut self, a: &GuidanceFrame, b: &GuidanceFrame) {
        let pair = FramePair::new(a, b);
        let (region, tol, eps) = (self.region, self.tol, self.eps);
        self.particles
            .par_iter_mut()
            .filter(|p| p.is_active())
            .for_each(|p| p.advance(&pair, &region, tol, eps, |_| {}));
    }

    /// Positions (id, x, z) of the particles still in flight.
    pub fn positions(&self) -> Vec<(usize, f64, f64)> {
        self.particles
            .iter()
            .filter(|p| p.is_active())
            .map(|p| {
                let (x, z) = p.position();
                (p.id, x, z)
            })
            .collect()
    }

    pub fn finish(mut self) -> EnsembleOutcome {
        for p in &mut self.particles {
            p.close();
        }
        let records: Vec<TrajectoryRecord> = self.particles.iter().map(|p| p.record()).collect();
        let count = |s: TrajectoryStatus| records.iter().filter(|r| r.status == s).count();
        let summary = EnsembleSummary {
            n: records.len(),
            detected: count(TrajectoryStatus::Detected),
            backscattered: count(TrajectoryStatus::Backscattered),
            node_abort: count(TrajectoryStatus::NodeAbort),
        };
        let paths = self
            .particles
            .iter_mut()
            .filter_map(|p| {
                let samples = p.path.take()?;
                Some(Trajectory {
                    id: p.id,
                    samples,
                    status: p.status.unwrap_or(TrajectoryStatus::Backscattered),
                })
            })
            .collect();
        EnsembleOutcome { records, summary, paths }
    }
}

/// Writes one row per trajectory, in id order. Floats carry 17 significant
/// digits; absent values are left empty.
pub fn write_events_csv<W: std::io::Write>(out: &mut W, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    writeln!(out, "trajectory_id,x0,z0,status,slit,x_hit,t_f")?;
    for r in records {
        let (x_hit, t_f) = match r.event {
            Some(e) => (format!("{:.16e}", e.x_hit), format!("{:.16e}", e.t_f)),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{:.16e},{:.16e},{},{},{},{}",
            r.trajectory_id,
            r.x0,
            r.z0,
            r.status.as_str(),
            r.slit.as_str(),
            x_hit,
            t_f
        )?;
    }
    Ok(())
}

/// Parses a file written by [`write_events_csv`].
pub fn read_events_csv(text: &str) -> Result<Vec<TrajectoryRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "trajectory_id,x0,z0,status,slit,x_hit,t_f")) => {}
        _ => {
            return Err(SimError::Parse {
                line: 1,
                message: "missing events header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |message: &str| SimError::Parse {
            line: i + 1,
            message: message.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let id: usize = f[0].parse().map_err(|_| bad("bad id"))?;
        let status = match f[3] {
            "detected" => TrajectoryStatus::Detected,
            "backscattered" => TrajectoryStatus::Backscattered,
            "node_abort" => TrajectoryStatus::NodeAbort,
            _ => return Err(bad("bad status")),
        };
        let slit = match f[4] {
            "left" => SlitTag::Left,
            "right" => SlitTag::Right,
            "" => SlitTag::Undetermined,
            _ => return Err(bad("bad slit")),
        };
        let event = if f[5].is_empty() {
            None
        } else {
            Some(DetectionEvent {
                trajectory_id: id,
                x_hit: num(f[5])?,
                t_f: num(f[6])?,
                slit_tag: slit,
            })
        };
        out.push(TrajectoryRecord {
            trajectory_id: id,
            x0: num(f[1])?,
            z0: num(f[2])?,
            status,
            slit,
            event,
            crossed_axis: false,
        });
    }
    Ok(out)
}

/// Walks a stored history frame by frame, keeping two frames alive.
pub(crate) fn for_each_frame_pair<F>(history: &WaveHistory, mut visit: F)
where
    F: FnMut(&GuidanceFrame, &GuidanceFrame),
{
    let mut ws = GradientWorkspace::new(history.grid);
    let mut frames = history.snapshots.iter();
    let Some(first) = frames.next() else { return };
    let mut prev = ws.frame(first);
    for snap in frames {
        let next = ws.frame(snap);
        visit(&prev, &next);
        prev = next;
    }
}

/// Integrates one trajectory from `r0` through a stored history until it
/// reaches z = d, meets a node, or the history ends.
pub fn integrate(history: &WaveHistory, r0: (f64, f64), config: &EnsembleConfig, d: f64) -> Result<Trajectory> {
    config.validate()?;
    if !history.grid.contains(r0.0, r0.1) {
        return Err(SimError::OutsideGrid { x: r0.0, z: r0.1 });
    }
    let region = Region::of_grid(&history.grid);
    let mut particle = Particle::new(0, r0.0, r0.1, d);
    let mut samples = vec![TrajectorySample {
        t: 0.0,
        x: r0.0,
        z: r0.1,
    }];
    for_each_frame_pair(history, |a, b| {
        if particle.is_active() {
            let pair = FramePair::new(a, b);
            particle.advance(&pair, &region, config.integrator_tol, config.node_epsilon, |s| {
                samples.push(s)
            });
        }
    });
    particle.close();
    Ok(Trajectory {
        id: 0,
        samples,
        status: particle.status.unwrap_or(TrajectoryStatus::Backscattered),
    })
}

/// Samples the packet's equilibrium ensemble and integrates every particle
/// through the history.
pub fn run_ensemble(
    history: &WaveHistory,
    packet: &PacketParams,
    config: &EnsembleConfig,
    d: f64,
) -> Result<EnsembleOutcome> {
    config.validate()?;
    let initial = sample_initial(packet, config.n_particles, config.seed);
    let mut ensemble = Ensemble::new(&initial, config, d, Region::of_grid(&history.grid));
    for_each_frame_pair(history, |a, b| ensemble.advance(a, b));
    Ok(ensemble.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, x: f64, z: f64) -> TrajectorySample {
        TrajectorySample { t, x, z }
    }

    #[test]
    fn crossing_is_interpolated() {
        let d = 3.0;
        let traj = Trajectory {
            id: 7,
            samples: vec![sample(0.0, 1.0, d - 0.1), sample(0.1, 2.0, d + 0.1)],
            status: TrajectoryStatus::Detected,
        };
        let e = first_passage(&traj, d).unwrap();
        assert!((e.t_f - 0.05).abs() < 1e-15);
        assert!((e.x_hit - 1.5).abs() < 1e-15);
        assert_eq!(e.trajectory_id, 7);
        assert_eq!(e.slit_tag, SlitTag::Undetermined);
    }

    #[test]
    fn first_of_several_crossings_wins() {
        let traj = Trajectory {
            id: 0,
            samples: vec![
                sample(0.0, 0.0, -1.0),
                sample(1.0, -0.5, 1.0),
                sample(2.0, -0.5, 3.0),
                sample(3.0, -0.5, 1.0),
                sample(4.0, -0.5, 5.0),
            ],
            status: TrajectoryStatus::Detected,
        };
        let e = first_passage(&traj, 2.0).unwrap();
        assert!((e.t_f - 1.5).abs() < 1e-15);
        assert_eq!(e.slit_tag, SlitTag::Left);
    }

    #[test]
    fn reflected_path_has_no_event() {
        let traj = Trajectory {
            id: 1,
            samples: vec![sample(0.0, 0.3, -2.0), sample(0.2, 0.3, -0.1), sample(0.4, 0.3, -2.0)],
            status: TrajectoryStatus::Backscattered,
        };
        assert!(first_passage(&traj, 10.0).is_none());
    }

    #[test]
    fn sampling_is_deterministic_and_finite() {
        let p = PacketParams {
            k_x: 0.0,
            k_z: 10.5,
            x0: 0.0,
            z0: 2.0,
            sigma_x: 0.75,
            sigma_z: 0.25,
            sigma_y: 0.75,
        };
        assert_eq!(sample_initial(&p, 100, 5), sample_initial(&p, 100, 5));
        assert_ne!(sample_initial(&p, 100, 5), sample_initial(&p, 100, 6));
        let one = sample_initial(&p, 1, 0);
        assert_eq!(one.len(), 1);
        assert!(one[0].0.is_finite() && one[0].1.is_finite());
    }

    #[test]
    fn sample_moments_match_equilibrium_density() {
        let p = PacketParams {
            k_x: 0.0,
            k_z: 10.5,
            x0: 0.0,
            z0: 2.0,
            sigma_x: 0.75,
            sigma_z: 0.25,
            sigma_y: 0.75,
        };
        let n = 100_000;
        let pts = sample_initial(&p, n, 11);
        let mean = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let var = pts.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Oracle: ∫ x² |G(x/σ)|²/σ dx = σ²/2 by direct quadrature.
        let sigma = 0.75;
        let h = 1e-4;
        let (mut m0, mut m2) = (0.0, 0.0);
        let mut x = -10.0;
        while x < 10.0 {
            let w = crate::model::gauss(x / sigma).powi(2) / sigma;
            m0 += w * h;
            m2 += x * x * w * h;
            x += h;
        }
        let std_oracle = (m2 / m0).sqrt();
        assert!((std_oracle - 0.530).abs() < 1e-3);
        assert!(mean.abs() < 4.0 * std_oracle / (n as f64).sqrt());
        assert!((var.sqrt() / std_oracle - 1.0).abs() < 0.01);
        let zmean = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
        assert!((zmean + 2.0).abs() < 4.0 * 0.25 / (2.0 * n as f64).sqrt());
    }

    fn free_history(packet: &PacketParams) -> WaveHistory {
        use crate::model::{BarrierParams, SlitSchedule};
        use crate::solver::{evolve, SolverConfig};
        let grid = Grid2D::new(128, 256, (-12.0, 12.0), (-10.0, 14.0)).unwrap();
        let barrier = BarrierParams {
            v0: 0.0,
            sigma_b: 0.1,
            sigma_s: 0.25,
            schedule: SlitSchedule::Static { f: 1.0 },
        };
        let config = SolverConfig {
            dt: 1e-3,
            t_max: 1.0,
            snapshot_stride: 10,
            absorber: None,
        };
        let psi = crate::field::initial_wavefunction(packet, &grid).unwrap();
        evolve(&psi, &config, &barrier).unwrap()
    }

    #[test]
    fn free_packet_trajectories_follow_spreading_law() {
        let p = PacketParams {
            k_x: 0.5,
            k_z: 2.0,
            x0: 0.5,
            z0: 2.0,
            sigma_x: 1.0,
            sigma_z: 0.8,
            sigma_y: 1.0,
        };
        let history = free_history(&p);
        let cfg = EnsembleConfig {
            n_particles: 1,
            seed: 0,
            integrator_tol: 1e-8,
            node_epsilon: 1e-12,
        };
        // Closed form: offsets from the packet centre scale by √(1 + t²/σ⁴).
        let exact = |c0: f64, k: f64, off: f64, s: f64, t: f64| c0 + k * t + off * (1.0 + t * t / s.powi(4)).sqrt();
        for &(dx, dz) in &[(0.0, 0.0), (0.7, -0.4), (-1.2, 0.9)] {
            let r0 = (-p.x0 + dx, -p.z0 + dz);
            let traj = integrate(&history, r0, &cfg, 100.0).unwrap();
            assert_eq!(traj.status, TrajectoryStatus::Backscattered);
            let end = traj.samples.last().unwrap();
            assert!((end.t - 1.0).abs() < 1e-12);
            for s in traj.samples.iter().step_by(7) {
                let x = exact(-p.x0, p.k_x, dx, p.sigma_x, s.t);
                let z = exact(-p.z0, p.k_z, dz, p.sigma_z, s.t);
                assert!((s.x - x).abs() < 1e-3, "x {} vs {} at t={}", s.x, x, s.t);
                assert!((s.z - z).abs() < 1e-3, "z {} vs {} at t={}", s.z, z, s.t);
            }
        }
    }

    #[test]
    fn ensemble_matches_single_integration() {
        let p = PacketParams {
            k_x: 0.0,
            k_z: 2.0,
            x0: 0.0,
            z0: 2.0,
            sigma_x: 1.0,
            sigma_z: 0.8,
            sigma_y: 1.0,
        };
        let history = free_history(&p);
        let cfg = EnsembleConfig {
            n_particles: 40,
            seed: 3,
            integrator_tol: 1e-6,
            node_epsilon: 1e-12,
        };
        let d = -0.5;
        let out = run_ensemble(&history, &p, &cfg, d).unwrap();
        let s = out.summary;
        assert_eq!(s.n, 40);
        assert_eq!(s.detected + s.backscattered + s.node_abort, 40);
        assert!(s.detected > 0);
        let initial = sample_initial(&p, 40, 3);
        for rec in &out.records {
            let single = integrate(&history, initial[rec.trajectory_id], &cfg, d).unwrap();
            assert_eq!(single.status, rec.status);
            match (first_passage(&single, d), rec.event) {
                (Some(a), Some(b)) => {
                    assert_eq!(a.t_f, b.t_f);
                    assert_eq!(a.x_hit, b.x_hit);
                    assert!(b.t_f > 0.0 && b.t_f <= 1.0);
                }
                (None, None) => {}
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn events_csv_round_trip() {
        let records = vec![
            TrajectoryRecord {
                trajectory_id: 0,
                x0: -0.1,
                z0: -2.0,
                status: TrajectoryStatus::Detected,
                slit: SlitTag::Left,
                crossed_axis: false,
                event: Some(DetectionEvent {
                    trajectory_id: 0,
                    x_hit: -3.25,
                    t_f: 1.0 / 3.0,
                    slit_tag: SlitTag::Left,
                }),
            },
            TrajectoryRecord {
                trajectory_id: 1,
                x0: 0.2,
                z0: -1.9,
                status: TrajectoryStatus::Backscattered,
                slit: SlitTag::Undetermined,
                event: None,
                crossed_axis: false,
            },
        ];
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",backscattered,,,"));
        assert_eq!(read_events_csv(&text).unwrap(), records);
    }

    #[test]
    fn config_validation() {
        let ok = EnsembleConfig {
            n_particles: 1,
            seed: 0,
            integrator_tol: 1e-6,
            node_epsilon: 1e-12,
        };
        assert!(ok.validate().is_ok());
        assert!(EnsembleConfig { n_particles: 0, ..ok }.validate().is_err());
        assert!(EnsembleConfig { integrator_tol: 0.0, ..ok }.validate().is_err());
        assert!(EnsembleConfig { node_epsilon: -1.0, ..ok }.validate().is_err());
    }
}
