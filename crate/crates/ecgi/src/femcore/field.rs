use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use super::TimeGrid;
use crate::error::{shape_mismatch, Error, Result};

/// Nodal coefficients `u_{i,s}` of a space-time P1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub values: DMatrix<f64>,
    pub step: f64,
}

impl SpaceTimeField {
    pub fn new(values: DMatrix<f64>, step: f64) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(shape_mismatch(">= 2 time columns", values.ncols()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite entry at flat index {k}")));
        }
        TimeGrid::new(values.ncols() - 1, step)?;
        Ok(Self { values, step })
    }

    pub fn zeros(n_vertices: usize, grid: &TimeGrid) -> Self {
        Self {
            values: DMatrix::zeros(n_vertices, grid.n_nodes()),
            step: grid.step(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.n_times() - 1, self.step).expect("field grid validated at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * self.values.len());
        write_matrix_header(&mut out, b"STF1", &self.values, self.step);
        write_row_major(&mut out, &self.values);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let (rows, cols, step) = read_matrix_header(&mut r, b"STF1")?;
        let values = read_row_major(&mut r, rows, cols)?;
        Self::new(values, step)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// One row per vertex, one column per time node.
    pub fn to_csv(&self) -> String {
        matrix_csv("vertex", &self.values, self.step)
    }
}

pub(crate) fn matrix_csv(label: &str, m: &DMatrix<f64>, step: f64) -> String {
    let mut s = String::from(label);
    for c in 0..m.ncols() {
        let _ = write!(s, ",t={}", c as f64 * step);
    }
    s.push('\n');
    for r in 0..m.nrows() {
        let _ = write!(s, "{r}");
        for c in 0..m.ncols() {
            let _ = write!(s, ",{:e}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

pub(crate) fn write_matrix_header(out: &mut Vec<u8>, magic: &[u8; 4], m: &DMatrix<f64>, step: f64) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
}

pub(crate) fn write_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

pub(crate) fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated file".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub(crate) fn read_matrix_header(r: &mut &[u8], magic: &[u8; 4]) -> Result<(usize, usize, f64)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)
        .map_err(|_| Error::Format("truncated file".into()))?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let step = read_f64(r)?;
    Ok((rows, cols, step))
}

pub(crate) fn read_row_major(r: &mut &[u8], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    if r.len() < need {
        return Err(Error::Format(format!(
            "payload has {} bytes, need {need}",
            r.len()
        )));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(r)?;
        }
    }
    Ok(m)
}
