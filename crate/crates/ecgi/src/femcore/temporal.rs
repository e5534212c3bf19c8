use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SymTridiagonal};

/// Uniform time grid `t_s = s * step`, `s = 0..=n_intervals`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_intervals: usize,
    step: f64,
}

impl TimeGrid {
    pub fn new(n_intervals: usize, step: f64) -> Result<Self> {
        if n_intervals == 0 || !(step > 0.0) || !step.is_finite() {
            return Err(Error::ParameterOutOfRange(format!(
                "time grid needs N_T >= 1 and step > 0, got {n_intervals}, {step}"
            )));
        }
        Ok(Self { n_intervals, step })
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn n_nodes(&self) -> usize {
        self.n_intervals + 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node(&self, s: usize) -> f64 {
        s as f64 * self.step
    }

    pub fn end_time(&self) -> f64 {
        self.node(self.n_intervals)
    }
}

/// Consistent P1 temporal mass matrix `D`.
pub fn assemble_temporal_mass(grid: &TimeGrid) -> CsrMatrix {
    let n = grid.n_nodes();
    let d = grid.step();
    let mut t = Vec::with_capacity(3 * n);
    for k in 0..grid.n_intervals() {
        t.push((k, k, 2.0 * d / 6.0));
        t.push((k + 1, k + 1, 2.0 * d / 6.0));
        t.push((k, k + 1, d / 6.0));
        t.push((k + 1, k, d / 6.0));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

pub fn temporal_mass_tridiagonal(grid: &TimeGrid) -> SymTridiagonal {
    SymTridiagonal::from_csr(&assemble_temporal_mass(grid))
}

/// Row sums of the temporal mass matrix.
pub fn lumped_temporal_mass(grid: &TimeGrid) -> Vec<f64> {
    assemble_temporal_mass(grid).row_sums()
}

/// Unit intervals `[m, m + 1]` covered by the hat centered at `c`, clipped
/// to `[lo, hi]`, with `true` for the rising half.
fn hat_pieces(c: i64, lo: i64, hi: i64) -> impl Iterator<Item = (i64, bool)> {
    [(c - 1, true), (c, false)]
        .into_iter()
        .filter(move |&(m, _)| m >= lo && m + 1 <= hi)
}

/// `∫ ρ_a(τ) ρ_b(τ) dτ` for two (possibly truncated) hats on the integer grid,
/// in units of the step.
fn hat_overlap(a: (i64, i64, i64), b: (i64, i64, i64)) -> f64 {
    let mut sum = 0.0;
    for (ma, ra) in hat_pieces(a.0, a.1, a.2) {
        for (mb, rb) in hat_pieces(b.0, b.1, b.2) {
            if ma == mb {
                sum += if ra == rb { 1.0 / 3.0 } else { 1.0 / 6.0 };
            }
        }
    }
    sum
}

/// Cross-correlation matrix `D(t_s)` of size `(2 nw + 1) x (N_T + 1)`.
///
/// Entry `(i, j)` is the overlap of kernel hat `i` (centered at
/// `(i - nw) δ` and truncated to `[-nw δ, nw δ]`) with the data hat `j`
/// shifted to `t_s` (centered at `(j - s) δ`, truncated to the time
/// interval).
pub fn cross_correlation_matrix(grid: &TimeGrid, nw: usize, s: usize) -> DMatrix<f64> {
    assert!(s <= grid.n_intervals(), "time index out of range");
    let nt = grid.n_intervals() as i64;
    let (w, si) = (nw as i64, s as i64);
    let mut out = DMatrix::zeros(2 * nw + 1, grid.n_nodes());
    for i in 0..=2 * nw {
        let ci = i as i64 - w;
        // only data hats within distance 1 can overlap
        for cj in (ci - 1)..=(ci + 1) {
            let j = cj + si;
            if j < 0 || j > nt {
                continue;
            }
            let v = hat_overlap((ci, -w, w), (cj, -si, nt - si));
            out[(i, j as usize)] = v * grid.step();
        }
    }
    out
}

/// All `D(t_s)` for `s = 0..=N_T`.
pub fn cross_correlation_set(grid: &TimeGrid, nw: usize) -> Vec<DMatrix<f64>> {
    (0..grid.n_nodes())
        .map(|s| cross_correlation_matrix(grid, nw, s))
        .collect()
}

/// Matrix `C` with `C[s][l] = Σ_j k_j D(t_s)_{j,l}`, so that the
/// temporally filtered field is `u Cᵀ`.
pub fn temporal_kernel_matrix(grid: &TimeGrid, kernel: &[f64]) -> DMatrix<f64> {
    assert!(kernel.len() % 2 == 1, "kernel needs 2 nw + 1 nodal values");
    let nw = kernel.len() / 2;
    let n = grid.n_nodes();
    let mut c = DMatrix::zeros(n, n);
    for s in 0..n {
        let d = cross_correlation_matrix(grid, nw, s);
        for l in 0..n {
            c[(s, l)] = (0..kernel.len()).map(|j| kernel[j] * d[(j, l)]).sum();
        }
    }
    c
}

/// Interpolated cross-correlation of the zero-extended rows of `u` with
/// the kernel.
pub fn apply_temporal_kernel(
    u: &DMatrix<f64>,
    kernel: &[f64],
    grid: &TimeGrid,
) -> Result<DMatrix<f64>> {
    if u.ncols() != grid.n_nodes() {
        return Err(crate::error::shape_mismatch(
            format!("{} time columns", grid.n_nodes()),
            u.ncols(),
        ));
    }
    Ok(u * temporal_kernel_matrix(grid, kernel).transpose())
}

/// Piecewise-linear kernel with nodal values on `[-nw, nw]` (unit step),
/// zero outside.
fn eval_kernel(k: &[f64], x: f64) -> f64 {
    let nw = (k.len() / 2) as f64;
    if x < -nw || x > nw {
        return 0.0;
    }
    let y = x + nw;
    let i = (y.floor() as usize).min(k.len() - 2);
    let f = y - i as f64;
    (1.0 - f) * k[i] + f * k[i + 1]
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Gauss integration over `[a, b]` split at the given sorted breakpoints.
fn integrate_piecewise(breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (m, r) = ((w[0] + w[1]) / 2.0, (w[1] - w[0]) / 2.0);
            GAUSS3
                .iter()
                .map(|&(x, wt)| wt * r * f(m + r * x))
                .sum::<f64>()
        })
        .sum()
}

/// `c(x) = ∫ k2(τ) k1(τ + x) dτ`, exact for piecewise-linear kernels.
fn correlate(k1: &[f64], k2: &[f64], x: f64) -> f64 {
    let (w1, w2) = ((k1.len() / 2) as f64, (k2.len() / 2) as f64);
    let lo = (-w2).max(-w1 - x);
    let hi = w2.min(w1 - x);
    if hi <= lo {
        return 0.0;
    }
    // kinks where τ or τ + x hits an integer node
    let mut breaks = vec![lo, hi];
    for m in (lo.floor() as i64 - 1)..=(hi.ceil() as i64 + 1) {
        for p in [m as f64, m as f64 - x] {
            if p > lo && p < hi {
                breaks.push(p);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    integrate_piecewise(&breaks, |t| eval_kernel(k2, t) * eval_kernel(k1, t + x))
}

/// Nodal values (half-width 6) of the kernel obtained by composing three
/// half-width-2 kernels, `k(t) = ∫∫ k3(s) k2(τ) k1(τ + s + t) ds dτ`.
pub fn compose_kernels(k1: &[f64], k2: &[f64], k3: &[f64], step: f64) -> Vec<f64> {
    assert!(
        k1.len() == 5 && k2.len() == 5 && k3.len() == 5,
        "sub-kernels must have half-width 2"
    );
    // c is piecewise cubic with integer kinks, so Gauss on unit intervals is exact
    let breaks: Vec<f64> = (-2..=2).map(f64::from).collect();
    (-6..=6)
        .map(|m| {
            let t = f64::from(m);
            step * step
                * integrate_piecewise(&breaks, |s| eval_kernel(k3, s) * correlate(k1, k2, s + t))
        })
        .collect()
}
