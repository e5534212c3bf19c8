//! Compressed sparse row matrices and a direct envelope Cholesky solver.
//!
//! Finite element operators in this crate are assembled from triplets into
//! [`CsrMatrix`]. Symmetric positive definite systems (Dirichlet-reduced
//! stiffness, mass matrices, the implicit monodomain step) are factorized
//! once by [`SparseCholesky`], which reorders with reverse Cuthill–McKee and
//! stores the lower factor in envelope (skyline) form.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse matrix in compressed row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                match indices.last() {
                    Some(&last) if last == c && indices.len() > *indptr.last().unwrap() => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        indices.push(c);
                        values.push(v);
                    }
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `Aᵀ x`
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
        y
    }

    /// Applies the matrix to every column of a dense matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                dst[i] = cols.iter().zip(vals).map(|(&k, &v)| v * src[k]).sum();
            }
        }
        out
    }

    /// Applies the transpose to every column of a dense matrix.
    pub fn tmul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.nrows);
        let mut out = DMatrix::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                let xi = src[i];
                for (&k, &v) in cols.iter().zip(vals) {
                    dst[k] += v * xi;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, i, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c * other`, same shape required.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = self.triplets();
        trip.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, c * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&c, &v)| (i, c, v)));
        }
        trip
    }

    /// Extracts the block with the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut trip = Vec::new();
        for (r_new, &r) in rows.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if col_map[c] != usize::MAX {
                    trip.push((r_new, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst / scale
    }
}

/// Reverse Cuthill–McKee ordering of the symmetric sparsity pattern of `a`.
///
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();

    while order.len() < n {
        // lowest-degree unvisited vertex, pushed towards the periphery
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        let start = pseudo_peripheral(a, seed, &visited);

        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, blocked: &[bool]) -> usize {
    let mut start = seed;
    let mut best_ecc = 0;
    for _ in 0..4 {
        let (far, ecc) = bfs_farthest(a, start, blocked);
        if ecc <= best_ecc {
            break;
        }
        best_ecc = ecc;
        start = far;
    }
    start
}

fn bfs_farthest(a: &CsrMatrix, start: usize, blocked: &[bool]) -> (usize, usize) {
    let n = a.nrows();
    let mut level = vec![usize::MAX; n];
    let mut queue = VecDeque::from([start]);
    level[start] = 0;
    let mut far = (start, 0);
    while let Some(v) = queue.pop_front() {
        let lv = level[v];
        if lv > far.1 || (lv == far.1 && a.row(v).0.len() < a.row(far.0).0.len()) {
            far = (v, lv);
        }
        for &w in a.row(v).0 {
            if !blocked[w] && level[w] == usize::MAX {
                level[w] = lv + 1;
                queue.push_back(w);
            }
        }
    }
    far
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    rowptr: Vec<usize>,
    factor: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(crate::error::shape_mismatch(
                "square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &c in a.row(old).0 {
                let cn = inv[c];
                if cn < new {
                    first[new] = first[new].min(cn);
                }
            }
        }
        let mut rowptr = Vec::with_capacity(n + 1);
        rowptr.push(0);
        for i in 0..n {
            rowptr.push(rowptr[i] + (i - first[i] + 1));
        }
        let mut factor = vec![0.0; rowptr[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let cn = inv[c];
                if cn <= new {
                    factor[rowptr[new] + cn - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let base_i = rowptr[i];
            for j in fi..i {
                let fj = first[j];
                let base_j = rowptr[j];
                let k0 = fi.max(fj);
                let mut s = factor[base_i + j - fi];
                let li = &factor[base_i + k0 - fi..base_i + j - fi];
                let lj = &factor[base_j + k0 - fj..base_j + j - fj];
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                let djj = factor[base_j + j - fj];
                factor[base_i + j - fi] = s / djj;
            }
            let row = &factor[base_i..base_i + i - fi];
            let d = factor[base_i + i - fi] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "non-positive pivot {d:.3e} at row {i} of {n}"
                )));
            }
            factor[base_i + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first,
            rowptr,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.factor.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted_in_place(&mut x);
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col: Vec<f64> = b.column(c).iter().copied().collect();
            let x = self.solve(&col);
            out.column_mut(c).copy_from_slice(&x);
        }
        out
    }

    fn solve_permuted_in_place(&self, x: &mut [f64]) {
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let base = self.rowptr[i];
            let row = &self.factor[base..base + i - fi];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, y)| l * y).sum();
            x[i] = (x[i] - s) / self.factor[base + i - fi];
        }
        // Lᵀ x = y, column sweep over rows of L
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let base = self.rowptr[i];
            x[i] /= self.factor[base + i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(&self.factor[base..base + i - fi]) {
                x[k] -= l * xi;
            }
        }
    }
}

/// Symmetric tridiagonal matrix, used for temporal mass matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn from_csr(a: &CsrMatrix) -> Self {
        let n = a.nrows();
        Self {
            diag: (0..n).map(|i| a.get(i, i)).collect(),
            off: (0..n.saturating_sub(1)).map(|i| a.get(i, i + 1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm; the matrix is assumed SPD so no pivoting is needed.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        d[0] = b[0] / denom;
        for i in 1..n {
            c[i - 1] = self.off[i - 1] / denom;
            denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }

    /// `X T` for a dense `X` whose columns index this matrix.
    pub fn right_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_rows(x, |r| self.mul_vec(r))
    }

    /// `X T⁻¹` for a dense `X` whose columns index this matrix.
    pub fn right_solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_rows(x, |r| self.solve(r))
    }

    fn apply_rows(&self, x: &DMatrix<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
        assert_eq!(x.ncols(), self.len());
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        let mut row = vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            let y = f(&row);
            for (j, v) in y.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(n: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * n + j;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((idx(i, j), idx(i, j), 4.0 + 1e-3));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < n {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < n {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n * n, n * n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0), (0, 0, -1.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(0, 0), -1.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.row(0).0, &[0, 1]);
    }

    #[test]
    fn transpose_product_matches() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0), (1, 1, 0.5)]);
        let x = [1.0, 2.0];
        assert_eq!(a.tmul_vec(&x), a.transpose().mul_vec(&x));
    }

    #[test]
    fn cholesky_solves_grid_laplacian() {
        let a = laplacian_2d(12);
        let chol = SparseCholesky::factor(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..a.nrows())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        let err: f64 = r
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-12, "residual {err}");
        // RCM keeps the envelope near n * bandwidth
        assert!(chol.envelope_size() < 144 * 30);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            SparseCholesky::factor(&a),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn tridiagonal_solve_inverts_product() {
        let t = SymTridiagonal {
            diag: vec![2.0, 4.0, 4.0, 2.0],
            off: vec![1.0, 1.0, 1.0],
        };
        let x = [0.3, -1.0, 2.0, 0.5];
        let y = t.mul_vec(&x);
        let back = t.solve(&y);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
