use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::grid::Grid2D;
use crate::model::PacketParams;

/// Complex amplitude on a grid at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionField {
    pub grid: Grid2D,
    pub t: f64,
    pub values: Vec<Complex64>,
}

impl WavefunctionField {
    pub fn zeros(grid: Grid2D, t: f64) -> Self {
        Self {
            grid,
            t,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f(x, z)` on every grid node.
    pub fn from_fn<F>(grid: Grid2D, t: f64, f: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        values
            .par_chunks_mut(grid.nx)
            .enumerate()
            .for_each(|(iz, row)| {
                let z = grid.z(iz);
                for (ix, v) in row.iter_mut().enumerate() {
                    *v = f(grid.x(ix), z);
                }
            });
        Self { grid, t, values }
    }

    /// Discrete L² norm ∑|ψ|²·dx·dz. Rows are reduced in a fixed order, so the
    /// result does not depend on the thread count.
    pub fn norm_sqr(&self) -> f64 {
        let rows: Vec<f64> = self
            .values
            .par_chunks(self.grid.nx)
            .map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .collect();
        rows.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Probability in the half plane z > z_cut.
    pub fn probability_beyond(&self, z_cut: f64) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for iz in 0..g.nz {
            if g.z(iz) > z_cut {
                let row = &self.values[iz * g.nx..(iz + 1) * g.nx];
                total += row.iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        total * g.cell_area()
    }

    pub fn conjugate(&mut self) {
        self.values.par_iter_mut().for_each(|v| *v = v.conj());
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// The packet ψ(x, z, 0) sampled on `grid`.
///
/// Fails with `GridTooSmall` unless the grid extends at least 5σ from the
/// packet centre in both directions.
pub fn initial_wavefunction(packet: &PacketParams, grid: &Grid2D) -> Result<WavefunctionField> {
    packet.validate()?;
    grid.validate()?;
    check_margin(packet, grid)?;
    let p = *packet;
    Ok(WavefunctionField::from_fn(*grid, 0.0, move |x, z| {
        p.amplitude(x, z)
    }))
}

pub(crate) fn check_margin(packet: &PacketParams, grid: &Grid2D) -> Result<()> {
    let (xc, zc) = packet.center();
    let (mx, mz) = (5.0 * packet.sigma_x, 5.0 * packet.sigma_z);
    let x_hi = grid.x(grid.nx - 1);
    let z_hi = grid.z(grid.nz - 1);
    if xc - mx < grid.x_min || xc + mx > x_hi {
        return Err(SimError::GridTooSmall(format!(
            "x range [{}, {}] does not cover packet centre {} ± 5σ_x = {}",
            grid.x_min, x_hi, xc, mx
        )));
    }
    if zc - mz < grid.z_min || zc + mz > z_hi {
        return Err(SimError::GridTooSmall(format!(
            "z range [{}, {}] does not cover packet centre {} ± 5σ_z = {}",
            grid.z_min, z_hi, zc, mz
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn packet() -> PacketParams {
        PacketParams {
            k_x: 0.7,
            k_z: 10.5,
            x0: 0.3,
            z0: 2.0,
            sigma_x: 0.75,
            sigma_z: 0.25,
            sigma_y: 0.75,
        }
    }

    fn grid() -> Grid2D {
        Grid2D::new(128, 256, (-8.0, 8.0), (-6.0, 2.0)).unwrap()
    }

    #[test]
    fn peak_modulus_and_norm() {
        let p = packet();
        let g = grid();
        let psi = initial_wavefunction(&p, &g).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-8);
        let peak = p.amplitude(-p.x0, -p.z0).norm();
        let expected = 1.0 / ((p.sigma_x * p.sigma_z).sqrt() * PI.sqrt());
        assert!((peak - expected).abs() < 1e-14);
    }

    #[test]
    fn phase_gradient_is_carrier_wavenumber() {
        let p = packet();
        let g = grid();
        let psi = initial_wavefunction(&p, &g).unwrap();
        // Finite differences of arg ψ between neighbouring nodes.
        for &(ix, iz) in &[(64, 128), (60, 120), (70, 135)] {
            let a = psi.values[g.index(ix, iz)];
            let bx = psi.values[g.index(ix + 1, iz)];
            let bz = psi.values[g.index(ix, iz + 1)];
            let kx = (bx / a).arg() / g.dx();
            let kz = (bz / a).arg() / g.dz();
            assert!((kx - p.k_x).abs() < 1e-9, "{kx}");
            assert!((kz - p.k_z).abs() < 1e-9, "{kz}");
        }
    }

    #[test]
    fn rejects_grid_without_margin() {
        let p = packet();
        let g = Grid2D::new(128, 128, (-2.0, 2.0), (-6.0, 2.0)).unwrap();
        assert!(matches!(
            initial_wavefunction(&p, &g),
            Err(SimError::GridTooSmall(_))
        ));
    }
}
