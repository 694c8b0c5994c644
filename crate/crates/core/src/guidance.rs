//! Guidance velocity v = Im(∇ψ/ψ) sampled on the grid at snapshot times.
//!
//! Gradients are spectral. The velocity field itself (not ψ) is interpolated:
//! bilinearly in space and linearly in time between bracketing frames, which
//! keeps the rapidly rotating phase of ψ out of the interpolation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::fft::{wavenumbers, Fft2d};
use crate::field::WavefunctionField;
use crate::grid::Grid2D;
use crate::solver::WaveHistory;

/// Per-node density and velocity at one time.
#[derive(Debug, Clone)]
pub struct GuidanceFrame {
    pub t: f64,
    pub grid: Grid2D,
    /// [ρ, v_x, v_z] per node, row-major (z, x).
    pub nodes: Vec<[f64; 3]>,
    pub rho_max: f64,
}

/// Values interpolated at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceSample {
    pub rho: f64,
    pub vx: f64,
    pub vz: f64,
}

impl GuidanceFrame {
    /// Bilinear interpolation at (x, z); `None` outside the node lattice.
    #[inline]
    pub fn sample(&self, x: f64, z: f64) -> Option<GuidanceSample> {
        let g = &self.grid;
        let fx = (x - g.x_min) / g.dx();
        let fz = (z - g.z_min) / g.dz();
        if !(fx >= 0.0 && fz >= 0.0) {
            return None;
        }
        let ix = (fx as usize).min(g.nx - 2);
        let iz = (fz as usize).min(g.nz - 2);
        let (ux, uz) = (fx - ix as f64, fz - iz as f64);
        if ux > 1.0 || uz > 1.0 {
            return None;
        }
        let i00 = iz * g.nx + ix;
        let (a, b, c, d) = (
            &self.nodes[i00],
            &self.nodes[i00 + 1],
            &self.nodes[i00 + g.nx],
            &self.nodes[i00 + g.nx + 1],
        );
        let w00 = (1.0 - ux) * (1.0 - uz);
        let w10 = ux * (1.0 - uz);
        let w01 = (1.0 - ux) * uz;
        let w11 = ux * uz;
        let mix = |k: usize| w00 * a[k] + w10 * b[k] + w01 * c[k] + w11 * d[k];
        Some(GuidanceSample {
            rho: mix(0),
            vx: mix(1),
            vz: mix(2),
        })
    }

    /// j_z = ρ·v_z along the line z = `z`, linearly interpolated between
    /// the two bracketing node rows.
    pub fn flux_line(&self, z: f64) -> Option<Vec<f64>> {
        let g = &self.grid;
        let fz = (z - g.z_min) / g.dz();
        if !(fz >= 0.0) || fz as usize + 1 >= g.nz {
            return None;
        }
        let iz = fz as usize;
        let w = fz - iz as f64;
        let lo = &self.nodes[iz * g.nx..(iz + 1) * g.nx];
        let hi = &self.nodes[(iz + 1) * g.nx..(iz + 2) * g.nx];
        Some(
            lo.iter()
                .zip(hi)
                .map(|(a, b)| (1.0 - w) * a[0] * a[2] + w * b[0] * b[2])
                .collect(),
        )
    }
}

/// Scratch buffers for spectral gradients on one grid.
pub struct GradientWorkspace {
    grid: Grid2D,
    fft: Fft2d,
    kx: Vec<f64>,
    kz: Vec<f64>,
    data: Vec<Complex64>,
    spec_x: Vec<Complex64>,
    spec_z: Vec<Complex64>,
    grad_x: Vec<Complex64>,
    grad_z: Vec<Complex64>,
}

impl GradientWorkspace {
    pub fn new(grid: Grid2D) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let mut kx = wavenumbers(grid.nx, grid.dx());
        let mut kz = wavenumbers(grid.nz, grid.dz());
        // The Nyquist mode has no well-defined derivative.
        kx[grid.nx / 2] = 0.0;
        kz[grid.nz / 2] = 0.0;
        Self {
            grid,
            fft: Fft2d::new(grid.nx, grid.nz),
            kx,
            kz,
            data: vec![zero; grid.len()],
            spec_x: vec![zero; grid.len()],
            spec_z: vec![zero; grid.len()],
            grad_x: vec![zero; grid.len()],
            grad_z: vec![zero; grid.len()],
        }
    }

    /// Spectral (∂ψ/∂x, ∂ψ/∂z) at every node.
    pub fn gradient(&mut self, field: &WavefunctionField) -> (&[Complex64], &[Complex64]) {
        assert_eq!(field.grid, self.grid, "field grid differs from workspace grid");
        let g = self.grid;
        let scale = 1.0 / g.len() as f64;
        self.data.copy_from_slice(&field.values);
        self.fft.forward(&mut self.data, &mut self.spec_x);
        let (kx, kz) = (&self.kx, &self.kz);
        self.spec_x
            .par_chunks_mut(g.nz)
            .zip(self.spec_z.par_chunks_mut(g.nz))
            .enumerate()
            .for_each(|(ix, (sx, sz))| {
                let ikx = Complex64::new(0.0, kx[ix] * scale);
                for (iz, (a, b)) in sx.iter_mut().zip(sz.iter_mut()).enumerate() {
                    let v = *a;
                    *a = v * ikx;
                    *b = v * Complex64::new(0.0, kz[iz] * scale);
                }
            });
        self.fft.inverse(&mut self.spec_x, &mut self.grad_x);
        self.fft.inverse(&mut self.spec_z, &mut self.grad_z);
        (&self.grad_x, &self.grad_z)
    }

    /// Density and guidance velocity of `field` at every node.
    pub fn frame(&mut self, field: &WavefunctionField) -> GuidanceFrame {
        self.gradient(field);
        let nodes: Vec<[f64; 3]> = field
            .values
            .par_iter()
            .zip(self.grad_x.par_iter())
            .zip(self.grad_z.par_iter())
            .map(|((psi, gx), gz)| {
                let rho = psi.norm_sqr();
                if rho > 0.0 {
                    let c = psi.conj();
                    [rho, (c * gx).im / rho, (c * gz).im / rho]
                } else {
                    [0.0, 0.0, 0.0]
                }
            })
            .collect();
        let rho_max = nodes.iter().map(|n| n[0]).fold(0.0, f64::max);
        GuidanceFrame {
            t: field.t,
            grid: field.grid,
            nodes,
            rho_max,
        }
    }
}

/// Two consecutive frames; velocity is linear in time between them.
#[derive(Clone, Copy)]
pub struct FramePair<'a> {
    pub a: &'a GuidanceFrame,
    pub b: &'a GuidanceFrame,
}

impl<'a> FramePair<'a> {
    pub fn new(a: &'a GuidanceFrame, b: &'a GuidanceFrame) -> Self {
        debug_assert!(b.t >= a.t);
        Self { a, b }
    }

    /// Guidance velocity at (x, z, t) with the relative node guard applied.
    #[inline]
    pub fn velocity(&self, x: f64, z: f64, t: f64, node_epsilon: f64) -> Result<(f64, f64)> {
        let span = self.b.t - self.a.t;
        let w = if span > 0.0 {
            ((t - self.a.t) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let sa = self.a.sample(x, z).ok_or(SimError::OutsideGrid { x, z })?;
        let sb = self.b.sample(x, z).ok_or(SimError::OutsideGrid { x, z })?;
        let rho = (1.0 - w) * sa.rho + w * sb.rho;
        let rho_max = (1.0 - w) * self.a.rho_max + w * self.b.rho_max;
        if !(rho >= node_epsilon * rho_max) {
            return Err(SimError::NodeEncounter { x, z, t });
        }
        Ok((
            (1.0 - w) * sa.vx + w * sb.vx,
            (1.0 - w) * sa.vz + w * sb.vz,
        ))
    }
}

/// Guidance velocity (v_x, v_z) from a stored history at (x, z, t).
pub fn velocity(history: &WaveHistory, x: f64, z: f64, t: f64, node_epsilon: f64) -> Result<(f64, f64)> {
    let (t_start, t_end) = (0.0, history.t_end());
    if !(t >= t_start && t <= t_end) || history.is_empty() {
        return Err(SimError::OutsideHistory { t, t_start, t_end });
    }
    if !history.grid.contains(x, z) {
        return Err(SimError::OutsideGrid { x, z });
    }
    let mut ws = GradientWorkspace::new(history.grid);
    if history.len() == 1 {
        let f = ws.frame(&history.snapshots[0]);
        return FramePair::new(&f, &f).velocity(x, z, t, node_epsilon);
    }
    let k = ((t / history.interval).floor() as usize).min(history.len() - 2);
    let fa = ws.frame(&history.snapshots[k]);
    let fb = ws.frame(&history.snapshots[k + 1]);
    FramePair::new(&fa, &fb).velocity(x, z, t, node_epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::initial_wavefunction;
    use crate::model::PacketParams;

    fn grid() -> Grid2D {
        Grid2D::new(128, 256, (-8.0, 8.0), (-8.0, 8.0)).unwrap()
    }

    #[test]
    fn plane_wave_moves_with_its_wavenumber() {
        let g = grid();
        // k_z must be a lattice wavenumber of the periodic box.
        let kz = 2.0 * std::f64::consts::PI * 12.0 / 16.0;
        let field = WavefunctionField::from_fn(g, 0.0, |_, z| Complex64::from_polar(0.3, kz * z));
        let frame = GradientWorkspace::new(g).frame(&field);
        for n in frame.nodes.iter().step_by(37) {
            assert!(n[1].abs() < 1e-10);
            assert!((n[2] - kz).abs() < 1e-10);
        }
        let pair = FramePair::new(&frame, &frame);
        let (vx, vz) = pair.velocity(0.123, -1.77, 0.0, 1e-12).unwrap();
        assert!(vx.abs() < 1e-10 && (vz - kz).abs() < 1e-10);
    }

    #[test]
    fn real_field_has_no_velocity() {
        let g = grid();
        let p = PacketParams {
            k_x: 0.0,
            k_z: 0.0,
            x0: 0.5,
            z0: 1.0,
            sigma_x: 0.8,
            sigma_z: 0.6,
            sigma_y: 1.0,
        };
        // k = 0 is outside the validated packet range, so sample directly.
        let psi = WavefunctionField::from_fn(g, 0.0, |x, z| p.amplitude(x, z));
        let frame = GradientWorkspace::new(g).frame(&psi);
        let floor = 1e-10 * frame.rho_max;
        for n in frame.nodes.iter().filter(|n| n[0] > floor) {
            assert!(n[1].abs() < 1e-9 && n[2].abs() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn packet_velocity_is_uniform_carrier() {
        let g = grid();
        let p = PacketParams {
            k_x: 1.5,
            k_z: 10.5,
            x0: 0.0,
            z0: 2.0,
            sigma_x: 0.75,
            sigma_z: 0.25,
            sigma_y: 0.75,
        };
        let psi = initial_wavefunction(&p, &g).unwrap();
        let frame = GradientWorkspace::new(g).frame(&psi);
        let pair = FramePair::new(&frame, &frame);
        for &(x, z) in &[(0.0, -2.0), (0.9, -2.3), (-1.2, -1.6), (0.33, -2.41)] {
            let (vx, vz) = pair.velocity(x, z, 0.0, 1e-12).unwrap();
            assert!((vx - 1.5).abs() < 1e-6, "{vx}");
            assert!((vz - 10.5).abs() < 1e-6, "{vz}");
        }
    }

    #[test]
    fn node_guard_trips_far_from_packet() {
        let g = grid();
        let p = PacketParams {
            k_x: 0.0,
            k_z: 1.0,
            x0: 0.0,
            z0: 2.0,
            sigma_x: 0.5,
            sigma_z: 0.5,
            sigma_y: 0.5,
        };
        let psi = initial_wavefunction(&p, &g).unwrap();
        let frame = GradientWorkspace::new(g).frame(&psi);
        let pair = FramePair::new(&frame, &frame);
        assert!(matches!(
            pair.velocity(0.0, 5.0, 0.0, 1e-12),
            Err(SimError::NodeEncounter { .. })
        ));
        assert!(matches!(
            pair.velocity(0.0, 50.0, 0.0, 1e-12),
            Err(SimError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn spectral_gradient_agrees_with_finite_differences() {
        let g = Grid2D::new(512, 512, (-8.0, 8.0), (-8.0, 8.0)).unwrap();
        let p = PacketParams {
            k_x: 0.4,
            k_z: 1.0,
            x0: 0.2,
            z0: 0.5,
            sigma_x: 1.2,
            sigma_z: 0.9,
            sigma_y: 1.0,
        };
        let psi = initial_wavefunction(&p, &g).unwrap();
        let mut ws = GradientWorkspace::new(g);
        let (gx, gz) = ws.gradient(&psi);
        let (gx, gz) = (gx.to_vec(), gz.to_vec());
        let (dx, dz) = (g.dx(), g.dz());
        let peak = gx.iter().chain(&gz).map(|v| v.norm()).fold(0.0, f64::max);
        let rho_max = psi.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for iz in 1..g.nz - 1 {
            for ix in 1..g.nx - 1 {
                let i = g.index(ix, iz);
                if psi.values[i].norm_sqr() < 1e-6 * rho_max {
                    continue;
                }
                let fx = (psi.values[i + 1] - psi.values[i - 1]) / (2.0 * dx);
                let fz = (psi.values[i + g.nx] - psi.values[i - g.nx]) / (2.0 * dz);
                worst = worst.max((fx - gx[i]).norm() / peak).max((fz - gz[i]).norm() / peak);
            }
        }
        // Central differences carry an O(h²) truncation error.
        assert!(worst < 1e-3, "{worst}");
    }
}
