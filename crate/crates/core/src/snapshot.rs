//! MFLD binary snapshots.
//!
//! Layout, little-endian: the magic `MFLD`, then `version: u32`, `n: u32`,
//! `count: u32`, followed by `count` records `(k1: i32, k2: i32, re: f64,
//! im: f64)`. Only one wavenumber of each `±k` pair is stored; the other is
//! restored by conjugation.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{DealiasFraction, WaveGrid, Wavenumber};

pub const MAGIC: [u8; 4] = *b"MFLD";
pub const VERSION: u32 = 1;

const RECORD_BYTES: usize = 24;

fn io_err(e: std::io::Error) -> Error {
    Error::Snapshot(e.to_string())
}

/// Writes the nonzero modes of `f`, one per conjugate pair, in storage order.
pub fn write_snapshot<W: Write>(f: &SpectralField, mut out: W) -> Result<()> {
    let grid = f.grid();
    let modes: Vec<(Wavenumber, Complex64)> = grid
        .pair_representatives()
        .iter()
        .map(|&i| (grid.wavenumber(i), f.coeffs()[i]))
        .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
        .collect();
    let mut buf = Vec::with_capacity(16 + RECORD_BYTES * modes.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&(modes.len() as u32).to_le_bytes());
    for (k, c) in modes {
        buf.extend_from_slice(&(k.k1 as i32).to_le_bytes());
        buf.extend_from_slice(&(k.k2 as i32).to_le_bytes());
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    out.write_all(&buf).map_err(io_err)
}

/// Reads a snapshot onto a fresh grid of the stored size.
pub fn read_snapshot<R: Read>(mut input: R, dealias: DealiasFraction) -> Result<SpectralField> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head).map_err(io_err)?;
    if head[..4] != MAGIC {
        return Err(Error::Snapshot("missing MFLD magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().expect("4 bytes"));
    let (version, n, count) = (word(4), word(8), word(12));
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported snapshot version {version}")));
    }
    let grid: Arc<WaveGrid> = WaveGrid::new(n as usize, dealias)?;
    let mut body = Vec::new();
    input.read_to_end(&mut body).map_err(io_err)?;
    if body.len() != count as usize * RECORD_BYTES {
        return Err(Error::Snapshot(format!("expected {count} records, found {} bytes", body.len())));
    }
    let mut f = SpectralField::zeros(&grid);
    let mut seen = std::collections::HashSet::new();
    for rec in body.chunks_exact(RECORD_BYTES) {
        let i32_at = |i: usize| i32::from_le_bytes(rec[i..i + 4].try_into().expect("4 bytes")) as i64;
        let f64_at = |i: usize| f64::from_le_bytes(rec[i..i + 8].try_into().expect("8 bytes"));
        let k = Wavenumber::new(i32_at(0), i32_at(4));
        let c = Complex64::new(f64_at(8), f64_at(16));
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Snapshot(format!("non-finite coefficient at {k}")));
        }
        if !seen.insert(k) || !seen.insert(-k) {
            return Err(Error::Snapshot(format!("mode {k} stored twice")));
        }
        f.set_pair(k, c)?;
    }
    Ok(f)
}
