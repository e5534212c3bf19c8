use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::femcore::SpaceTimeField;

/// Pixels per field entry in each direction.
pub const PLOT_SCALE: usize = 4;

const PALETTE: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn color(x: f64) -> [u8; 3] {
    let s = x.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (s.floor() as usize).min(PALETTE.len() - 2);
    let w = s - i as f64;
    [0, 1, 2].map(|c| ((1.0 - w) * PALETTE[i][c] + w * PALETTE[i + 1][c]).round() as u8)
}

/// Binary PPM with vertices as rows and time nodes as columns, min–max
/// normalized; a constant field maps to the lowest palette color.
pub fn render_ppm(u: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = u.shape();
    let (lo, hi) = (u.min(), u.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (cols * PLOT_SCALE, rows * PLOT_SCALE);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&color((u[(y / PLOT_SCALE, x / PLOT_SCALE)] - lo) / span));
        }
    }
    out
}

/// Writes `<stem>.ppm` and `<stem>.csv`.
pub fn plot_spacetime(u: &SpaceTimeField, stem: &Path) -> Result<()> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(stem.with_extension("ppm"), render_ppm(&u.values))?;
    std::fs::write(stem.with_extension("csv"), u.to_csv())?;
    Ok(())
}

/// Reads the CSV written by [`plot_spacetime`].
pub fn read_field_csv(text: &str) -> Result<SpaceTimeField> {
    let bad = |m: &str| Error::Format(format!("field csv: {m}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty"))?
        .split(',')
        .collect();
    let times: Vec<f64> = header[1..]
        .iter()
        .map(|h| {
            h.strip_prefix("t=")
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("bad header"))
        })
        .collect::<Result<_>>()?;
    let step = if times.len() > 1 {
        times[1] - times[0]
    } else {
        1.0
    };
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .skip(1)
                .map(|v| v.parse().map_err(|_| bad("bad value")))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.iter().any(|r| r.len() != times.len()) {
        return Err(bad("ragged rows"));
    }
    SpaceTimeField::new(
        DMatrix::from_fn(rows.len(), times.len(), |i, j| rows[i][j]),
        step,
    )
}
