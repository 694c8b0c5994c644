//! Arrival histograms, flux through the detection plane and the oracles that
//! compare them.

use std::io::Write;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, SimError, ValidationError};
use crate::field::WavefunctionField;
use crate::guidance::GuidanceFrame;
use crate::solver::WaveHistory;
use crate::trajectory::{for_each_frame_pair, DetectionEvent, Region};

/// `n` equal bins spanning [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Default layout: `nx` bins over the detected x-range (the region's width
/// if fewer than two distinct hits) and `nt` bins over [0, t_max].
pub fn arrival_bins(events: &[DetectionEvent], region: &Region, t_max: f64, nx: usize, nt: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = events
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.x_hit), hi.max(e.x_hit)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (region.x_lo, region.x_hi) };
    (uniform_edges(lo, hi, nx), uniform_edges(0.0, t_max, nt))
}

fn check_edges(name: &str, edges: &[f64]) -> std::result::Result<(), ValidationError> {
    if edges.len() < 2 {
        return Err(ValidationError::new(name, "need at least two edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ValidationError::new(name, "edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Bin containing `v`: bins are half-open except the last, which is closed.
pub fn bin_index(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[n]) {
        return None;
    }
    if v == edges[n] {
        return Some(n - 1);
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

/// Joint (x, t_f) arrival histogram. `counts[ix * n_t + it]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub t_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Events outside the binned range.
    pub overflow: u64,
}

impl Histogram2D {
    pub fn n_x(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn n_t(&self) -> usize {
        self.t_edges.len() - 1
    }

    pub fn get(&self, ix: usize, it: usize) -> u64 {
        self.counts[ix * self.n_t() + it]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts summed over t_f.
    pub fn marginal_x(&self) -> Vec<f64> {
        self.counts
            .chunks(self.n_t())
            .map(|row| row.iter().sum::<u64>() as f64)
            .collect()
    }
}

pub fn build_histogram(events: &[DetectionEvent], x_edges: &[f64], t_edges: &[f64]) -> Result<Histogram2D> {
    check_edges("x_edges", x_edges)?;
    check_edges("t_edges", t_edges)?;
    let n_t = t_edges.len() - 1;
    let mut counts = vec![0u64; (x_edges.len() - 1) * n_t];
    let mut overflow = 0;
    for e in events {
        match (bin_index(x_edges, e.x_hit), bin_index(t_edges, e.t_f)) {
            (Some(ix), Some(it)) => counts[ix * n_t + it] += 1,
            _ => overflow += 1,
        }
    }
    Ok(Histogram2D {
        x_edges: x_edges.to_vec(),
        t_edges: t_edges.to_vec(),
        counts,
        overflow,
    })
}

/// Time-integrated j_z per (x, t) bin. `flux_density[ix * n_t + it]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxProfile {
    pub x_edges: Vec<f64>,
    pub t_edges: Vec<f64>,
    pub flux_density: Vec<f64>,
}

impl FluxProfile {
    pub fn n_t(&self) -> usize {
        self.t_edges.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.flux_density.iter().sum()
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.flux_density
            .chunks(self.n_t())
            .map(|row| row.iter().sum())
            .collect()
    }
}

/// Integral weights of the piecewise-linear hat functions on `nodes` over
/// [a, b]. Outside the node range the interpolant is taken as zero.
fn hat_weights(nodes: &[f64], a: f64, b: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut add = |i: usize, w: f64| match out.last_mut() {
        Some(last) if last.0 == i => last.1 += w,
        _ => out.push((i, w)),
    };
    let start = nodes.partition_point(|&x| x <= a).saturating_sub(1);
    for i in start..nodes.len().saturating_sub(1) {
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        if x0 >= b {
            break;
        }
        let (l, r) = (a.max(x0), b.min(x1));
        if r <= l {
            continue;
        }
        let h = x1 - x0;
        add(i, ((x1 - l).powi(2) - (x1 - r).powi(2)) / (2.0 * h));
        add(i + 1, ((r - x0).powi(2) - (l - x0).powi(2)) / (2.0 * h));
    }
    out
}

/// j_z(x_i, d, t_k) on the grid's x nodes for a sequence of frame times.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTrace {
    pub d: f64,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    /// One row of length `x.len()` per time.
    pub j: Vec<Vec<f64>>,
}

impl FluxTrace {
    pub fn new(d: f64, x: Vec<f64>) -> Self {
        Self {
            d,
            x,
            times: Vec::new(),
            j: Vec::new(),
        }
    }

    /// Appends the flux line of `frame`; frames must arrive in time order.
    pub fn push(&mut self, frame: &GuidanceFrame) -> Result<()> {
        let line = frame
            .flux_line(self.d)
            .ok_or(SimError::OutsideGrid { x: 0.0, z: self.d })?;
        self.times.push(frame.t);
        self.j.push(line);
        Ok(())
    }

    /// Exact integral of the bilinear (x, t) interpolant of the trace over
    /// each bin.
    pub fn profile(&self, x_edges: &[f64], t_edges: &[f64]) -> Result<FluxProfile> {
        check_edges("x_edges", x_edges)?;
        check_edges("t_edges", t_edges)?;
        let (n_x, n_t) = (x_edges.len() - 1, t_edges.len() - 1);
        let wt: Vec<Vec<(usize, f64)>> = t_edges
            .windows(2)
            .map(|w| hat_weights(&self.times, w[0], w[1]))
            .collect();
        // q[it][i] = ∫_bin_t j(x_i, t) dt
        let q: Vec<Vec<f64>> = wt
            .iter()
            .map(|ws| {
                let mut row = vec![0.0; self.x.len()];
                for &(k, w) in ws {
                    for (r, v) in row.iter_mut().zip(&self.j[k]) {
                        *r += w * v;
                    }
                }
                row
            })
            .collect();
        let mut flux = vec![0.0; n_x * n_t];
        for (ix, w) in x_edges.windows(2).enumerate() {
            let wx = hat_weights(&self.x, w[0], w[1]);
            for (it, qrow) in q.iter().enumerate() {
                flux[ix * n_t + it] = wx.iter().map(|&(i, w)| w * qrow[i]).sum();
            }
        }
        Ok(FluxProfile {
            x_edges: x_edges.to_vec(),
            t_edges: t_edges.to_vec(),
            flux_density: flux,
        })
    }
}

/// Flux of a stored history through z = d, binned in (x, t).
pub fn flux_profile(history: &WaveHistory, d: f64, x_edges: &[f64], t_edges: &[f64]) -> Result<FluxProfile> {
    let g = &history.grid;
    if !(d >= g.z_min && d <= g.z(g.nz - 1)) {
        return Err(ValidationError::new("d", "screen must lie inside the grid").into());
    }
    let mut trace = FluxTrace::new(d, (0..g.nx).map(|i| g.x(i)).collect());
    let mut status = Ok(());
    let mut first = true;
    for_each_frame_pair(history, |a, b| {
        if status.is_ok() && first {
            status = trace.push(a);
            first = false;
        }
        if status.is_ok() {
            status = trace.push(b);
        }
    });
    status?;
    if history.len() == 1 {
        let mut ws = crate::guidance::GradientWorkspace::new(*g);
        trace.push(&ws.frame(&history.snapshots[0]))?;
    }
    trace.profile(x_edges, t_edges)
}

/// Total-variation distance between the normalized histogram and the
/// normalized flux profile. Returns 1 when either side carries no weight.
pub fn flux_trajectory_distance(hist: &Histogram2D, flux: &FluxProfile) -> Result<f64> {
    if hist.x_edges != flux.x_edges || hist.t_edges != flux.t_edges {
        return Err(SimError::BinMismatch);
    }
    let np = hist.total() as f64;
    let nq = flux.total();
    if np <= 0.0 || nq <= 0.0 {
        return Ok(1.0);
    }
    let tv = hist
        .counts
        .iter()
        .zip(&flux.flux_density)
        .map(|(&c, &f)| (c as f64 / np - f / nq).abs())
        .sum::<f64>();
    Ok(0.5 * tv)
}

/// Number of interior local maxima whose descent on either side reaches
/// peak/contrast or lower before meeting a higher value (or the edge).
pub fn count_fringes(values: &[f64], contrast: f64) -> usize {
    let n = values.len();
    if n < 3 {
        return 0;
    }
    let mut count = 0;
    for i in 1..n - 1 {
        let p = values[i];
        if !(p > 0.0 && p > values[i - 1] && p >= values[i + 1]) {
            continue;
        }
        let floor = p / contrast;
        let left = values[..i].iter().rev().take_while(|&&v| v <= p).fold(f64::INFINITY, |m, &v| m.min(v));
        let right = values[i + 1..].iter().take_while(|&&v| v <= p).fold(f64::INFINITY, |m, &v| m.min(v));
        if left <= floor && right <= floor {
            count += 1;
        }
    }
    count
}

/// Indices of interior local minima of a sequence.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
    pub n: usize,
}

/// Pearson test of particle positions against |ψ|² of `field`.
///
/// The window is the node-aligned box holding all nodes with
/// |ψ|² ≥ 1e-8·max, split into `bins × bins` cells of whole nodes; particles
/// outside the window form one more cell. Cells expecting fewer than five
/// particles are pooled.
pub fn equivariance_chi_square(positions: &[(f64, f64)], field: &WavefunctionField, bins: usize) -> Result<ChiSquareResult> {
    let g = &field.grid;
    if bins == 0 || positions.is_empty() {
        return Err(ValidationError::new("equivariance", "need bins >= 1 and a nonempty ensemble").into());
    }
    let rho = field.density();
    let rho_max = rho.iter().cloned().fold(0.0, f64::max);
    let (mut ix0, mut ix1, mut iz0, mut iz1) = (g.nx, 0, g.nz, 0);
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            if rho[g.index(ix, iz)] >= 1e-8 * rho_max {
                ix0 = ix0.min(ix);
                ix1 = ix1.max(ix);
                iz0 = iz0.min(iz);
                iz1 = iz1.max(iz);
            }
        }
    }
    let bx = (ix1 - ix0 + 1).div_ceil(bins);
    let bz = (iz1 - iz0 + 1).div_ceil(bins);
    let fit = |start: usize, block: usize, n: usize| {
        if block * bins <= n {
            (start.min(n - block * bins), bins)
        } else {
            (0, n / block)
        }
    };
    let (ix0, nbx) = fit(ix0, bx, g.nx);
    let (iz0, nbz) = fit(iz0, bz, g.nz);
    let n_cells = nbx * nbz + 1;
    let total: f64 = rho.iter().sum();
    let mut prob = vec![0.0; n_cells];
    for iz in iz0..iz0 + nbz * bz {
        for ix in ix0..ix0 + nbx * bx {
            prob[((iz - iz0) / bz) * nbx + (ix - ix0) / bx] += rho[g.index(ix, iz)] / total;
        }
    }
    let inside: f64 = prob[..n_cells - 1].iter().sum();
    prob[n_cells - 1] = (1.0 - inside).max(0.0);

    let mut observed = vec![0.0; n_cells];
    for &(x, z) in positions {
        let ix = ((x - g.x_min) / g.dx()).round();
        let iz = ((z - g.z_min) / g.dz()).round();
        let cell = if ix >= ix0 as f64 && iz >= iz0 as f64 {
            let (cx, cz) = ((ix as usize - ix0) / bx, (iz as usize - iz0) / bz);
            if cx < nbx && cz < nbz {
                cz * nbx + cx
            } else {
                n_cells - 1
            }
        } else {
            n_cells - 1
        };
        observed[cell] += 1.0;
    }

    let n = positions.len() as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pool_e, mut pool_o) = (0.0, 0.0);
    for (p, o) in prob.iter().zip(&observed) {
        let e = p * n;
        if e < 5.0 {
            pool_e += e;
            pool_o += o;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value,
        cells,
        n: positions.len(),
    })
}

fn write_binned<W: Write>(
    out: &mut W,
    comment: &str,
    x_edges: &[f64],
    t_edges: &[f64],
    value: impl Fn(usize, usize) -> String,
) -> std::io::Result<()> {
    writeln!(out, "# {comment}")?;
    writeln!(out, "x_lo,x_hi,t_lo,t_hi,value")?;
    for (ix, xw) in x_edges.windows(2).enumerate() {
        for (it, tw) in t_edges.windows(2).enumerate() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                xw[0],
                xw[1],
                tw[0],
                tw[1],
                value(ix, it)
            )?;
        }
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: &mut W, hist: &Histogram2D, scenario: &str, seed: u64) -> std::io::Result<()> {
    let comment = format!("scenario={scenario} seed={seed} kind=histogram overflow={}", hist.overflow);
    write_binned(out, &comment, &hist.x_edges, &hist.t_edges, |ix, it| hist.get(ix, it).to_string())
}

pub fn write_flux_csv<W: Write>(out: &mut W, flux: &FluxProfile, scenario: &str, seed: Option<u64>) -> std::io::Result<()> {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let comment = format!("scenario={scenario} seed={seed} kind=flux");
    let n_t = flux.n_t();
    write_binned(out, &comment, &flux.x_edges, &flux.t_edges, |ix, it| {
        format!("{:.16e}", flux.flux_density[ix * n_t + it])
    })
}
