//! Row-parallel 2D FFT on row-major (z, x) data.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

const BLOCK: usize = 32;

/// Transposes an `rows × cols` row-major matrix into `dst` (`cols × rows`).
pub(crate) fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    // Each parallel task owns a band of BLOCK destination rows.
    dst.par_chunks_mut(BLOCK * rows)
        .enumerate()
        .for_each(|(band, chunk)| {
            let c0 = band * BLOCK;
            let c1 = (c0 + BLOCK).min(cols);
            for r0 in (0..rows).step_by(BLOCK) {
                let r1 = (r0 + BLOCK).min(rows);
                for c in c0..c1 {
                    let out = &mut chunk[(c - c0) * rows..(c - c0 + 1) * rows];
                    for r in r0..r1 {
                        out[r] = src[r * cols + c];
                    }
                }
            }
        });
}

fn rows_fft(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len * 16).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, rows| fft.process_with_scratch(rows, scratch),
    );
}

/// Planned forward/inverse transforms for an `nz × nx` grid.
///
/// The spectral representation is stored transposed (x-major), which avoids
/// a second transpose on each round trip.
pub struct Fft2d {
    nx: usize,
    nz: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(nx: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            nz,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_z: planner.plan_fft_forward(nz),
            inv_z: planner.plan_fft_inverse(nz),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Unnormalized forward transform. `data` (row-major z, x) is used as
    /// scratch; the spectrum lands in `spectrum` with index `ix * nz + iz`.
    pub fn forward(&self, data: &mut [Complex64], spectrum: &mut [Complex64]) {
        rows_fft(&self.fwd_x, data, self.nx);
        transpose(data, spectrum, self.nz, self.nx);
        rows_fft(&self.fwd_z, spectrum, self.nz);
    }

    /// Unnormalized inverse transform of an x-major spectrum back to row-major
    /// (z, x) data. `spectrum` is consumed as scratch.
    pub fn inverse(&self, spectrum: &mut [Complex64], data: &mut [Complex64]) {
        rows_fft(&self.inv_z, spectrum, self.nz);
        transpose(spectrum, data, self.nx, self.nz);
        rows_fft(&self.inv_x, data, self.nx);
    }

    /// Inverse transform along x only (rows of row-major data).
    pub fn inverse_rows(&self, data: &mut [Complex64]) {
        rows_fft(&self.inv_x, data, self.nx);
    }

    /// Inverse transform along z of an x-major buffer, leaving it x-major.
    pub fn inverse_columns(&self, data: &mut [Complex64]) {
        rows_fft(&self.inv_z, data, self.nz);
    }
}

/// Angular wavenumbers of an n-point periodic grid with spacing h, in FFT order.
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * h);
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            m * scale
        })
        .collect()
}
