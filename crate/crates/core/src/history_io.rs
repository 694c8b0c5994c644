//! Binary wave-history files.
//!
//! Layout (little endian): the 8-byte magic `SLITHST1`; header
//! `nx: u64, nz: u64, x_min, x_max, z_min, z_max: f64, n_snapshots: u64,
//! t_stride: f64`; then each snapshot as `nx·nz` interleaved (re, im) f64
//! pairs, z-major (x varies fastest). Snapshot k is at t = k·t_stride.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::field::WavefunctionField;
use crate::grid::Grid2D;
use crate::solver::{NormLedger, WaveHistory};

const MAGIC: &[u8; 8] = b"SLITHST1";

/// Streams snapshots to disk as they are produced.
pub struct HistoryWriter {
    out: BufWriter<File>,
    grid: Grid2D,
    expected: usize,
    written: usize,
    buf: Vec<u8>,
}

impl HistoryWriter {
    pub fn create(path: impl AsRef<Path>, grid: Grid2D, n_snapshots: usize, t_stride: f64) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&(grid.nx as u64).to_le_bytes())?;
        out.write_all(&(grid.nz as u64).to_le_bytes())?;
        for v in [grid.x_min, grid.x_max, grid.z_min, grid.z_max] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(n_snapshots as u64).to_le_bytes())?;
        out.write_all(&t_stride.to_le_bytes())?;
        Ok(Self {
            out,
            grid,
            expected: n_snapshots,
            written: 0,
            buf: Vec::with_capacity(grid.len() * 16),
        })
    }

    pub fn write(&mut self, field: &WavefunctionField) -> Result<()> {
        if field.grid != self.grid || self.written == self.expected {
            return Err(SimError::HistoryFormat("snapshot does not fit the declared history".into()));
        }
        self.buf.clear();
        for v in &field.values {
            self.buf.extend_from_slice(&v.re.to_le_bytes());
            self.buf.extend_from_slice(&v.im.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(SimError::HistoryFormat(format!(
                "wrote {} of {} declared snapshots",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn save_history(path: impl AsRef<Path>, history: &WaveHistory) -> Result<()> {
    let mut w = HistoryWriter::create(path, history.grid, history.len(), history.interval)?;
    for s in &history.snapshots {
        w.write(s)?;
    }
    w.finish()
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Loads a history file. The ledger is rebuilt from the last snapshot's
/// norm; absorbed probability is not stored.
pub fn load_history(path: impl AsRef<Path>) -> Result<WaveHistory> {
    let file = File::open(path)?;
    let size = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| SimError::HistoryFormat("file too short".into()))?;
    if &magic != MAGIC {
        return Err(SimError::HistoryFormat("bad magic".into()));
    }
    let nx = read_u64(&mut r)? as usize;
    let nz = read_u64(&mut r)? as usize;
    let grid = Grid2D {
        nx,
        nz,
        x_min: read_f64(&mut r)?,
        x_max: read_f64(&mut r)?,
        z_min: read_f64(&mut r)?,
        z_max: read_f64(&mut r)?,
    };
    grid.validate()
        .map_err(|e| SimError::HistoryFormat(format!("bad grid header: {e}")))?;
    let n = read_u64(&mut r)? as usize;
    let interval = read_f64(&mut r)?;
    let expected = 8 + 8 * 8 + (n as u64) * (grid.len() as u64) * 16;
    if size != expected {
        return Err(SimError::HistoryFormat(format!(
            "size {size} bytes, header implies {expected}"
        )));
    }
    let mut bytes = vec![0u8; grid.len() * 16];
    let mut snapshots = Vec::with_capacity(n);
    for k in 0..n {
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        snapshots.push(WavefunctionField {
            grid,
            t: k as f64 * interval,
            values,
        });
    }
    let norm = snapshots.last().map_or(0.0, |s| s.norm_sqr());
    Ok(WaveHistory {
        grid,
        interval,
        snapshots,
        ledger: NormLedger {
            norm,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = Grid2D::new(8, 4, (-1.0, 1.0), (-2.0, 2.0)).unwrap();
        let snapshots: Vec<_> = (0..3)
            .map(|k| {
                WavefunctionField::from_fn(grid, k as f64 * 0.25, |x, z| Complex64::new(x + k as f64, z.sin() / 3.0))
            })
            .collect();
        let h = WaveHistory {
            grid,
            interval: 0.25,
            snapshots,
            ledger: NormLedger::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        save_history(&path, &h).unwrap();
        let back = load_history(&path).unwrap();
        assert_eq!(back.grid, h.grid);
        assert_eq!(back.interval, 0.25);
        assert_eq!(back.snapshots, h.snapshots);

        let mut raw = std::fs::read(&path).unwrap();
        raw.pop();
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(load_history(&path), Err(SimError::HistoryFormat(_))));
        std::fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(load_history(&path), Err(SimError::HistoryFormat(_))));
    }
}
