use nalgebra::DMatrix;

use crate::error::{shape_mismatch, Error, Result};
use crate::geometry::SurfaceMesh1D;
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Consistent P1 mass matrix on the closed curve and its row-sum lumping.
pub fn assemble_spatial_mass(surface: &SurfaceMesh1D) -> (CsrMatrix, Vec<f64>) {
    let n = surface.len();
    let mut t = Vec::with_capacity(4 * n);
    for (k, &len) in surface.segment_lengths.iter().enumerate() {
        let (a, b) = surface.segment(k);
        t.push((a, a, len / 3.0));
        t.push((b, b, len / 3.0));
        t.push((a, b, len / 6.0));
        t.push((b, a, len / 6.0));
    }
    let m = CsrMatrix::from_triplets(n, n, &t);
    let lump = m.row_sums();
    (m, lump)
}

/// Exact tangential gradient of P1 fields: one operator per ambient
/// component, each `N_Q x N_V` with one row per segment.
#[derive(Debug, Clone)]
pub struct SurfaceGradient {
    pub components: [CsrMatrix; 2],
}

pub fn assemble_surface_gradient(surface: &SurfaceMesh1D) -> SurfaceGradient {
    let n = surface.len();
    let components = [0, 1].map(|c| {
        let mut t = Vec::with_capacity(2 * n);
        for k in 0..n {
            let (a, b) = surface.segment(k);
            let w = surface.tangents[k][c] / surface.segment_lengths[k];
            t.push((k, a, -w));
            t.push((k, b, w));
        }
        CsrMatrix::from_triplets(n, n, &t)
    });
    SurfaceGradient { components }
}

impl SurfaceGradient {
    pub fn n_segments(&self) -> usize {
        self.components[0].nrows()
    }

    /// Stacked per-segment gradients `[g_x; g_y]` of every column of `u`.
    pub fn apply(&self, u: &DMatrix<f64>) -> GradientField {
        let gx = self.components[0].mul_dense(u);
        let gy = self.components[1].mul_dense(u);
        let nq = gx.nrows();
        let mut values = DMatrix::zeros(2 * nq, u.ncols());
        values.rows_mut(0, nq).copy_from(&gx);
        values.rows_mut(nq, nq).copy_from(&gy);
        GradientField { values }
    }
}

/// Piecewise-constant ambient vector per segment and time node; rows
/// `0..N_Q` hold the x components, `N_Q..2 N_Q` the y components.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub values: DMatrix<f64>,
}

impl GradientField {
    pub fn n_segments(&self) -> usize {
        self.values.nrows() / 2
    }

    pub fn component(&self, c: usize) -> DMatrix<f64> {
        let nq = self.n_segments();
        self.values.rows(c * nq, nq).into_owned()
    }
}

/// L2 projection of piecewise constants onto continuous P1.
#[derive(Debug, Clone)]
pub struct L2Projection {
    /// Load matrix `B`, `B_{iJ} = |J| / 2` for nodes `i` of segment `J`.
    pub load: CsrMatrix,
    mass: CsrMatrix,
    chol: SparseCholesky,
}

impl L2Projection {
    pub fn new(surface: &SurfaceMesh1D) -> Result<Self> {
        let n = surface.len();
        let mut t = Vec::with_capacity(2 * n);
        for (k, &len) in surface.segment_lengths.iter().enumerate() {
            let (a, b) = surface.segment(k);
            t.push((a, k, len / 2.0));
            t.push((b, k, len / 2.0));
        }
        let load = CsrMatrix::from_triplets(n, n, &t);
        let (mass, _) = assemble_spatial_mass(surface);
        let chol = SparseCholesky::factor(&mass)?;
        Ok(Self { load, mass, chol })
    }

    /// Solves `M p̃ = B p` column by column.
    pub fn project(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if p.nrows() != self.load.ncols() {
            return Err(shape_mismatch(
                format!("{} segment rows", self.load.ncols()),
                p.nrows(),
            ));
        }
        let b = self.load.mul_dense(p);
        let x = self.chol.solve_dense(&b);
        let r = self.mass.mul_dense(&x) - &b;
        let bn = b.norm();
        if bn > 0.0 && r.norm() > 1e-12 * bn {
            return Err(Error::SolveFailure(format!(
                "mass solve relative residual {:.3e}",
                r.norm() / bn
            )));
        }
        Ok(x)
    }

    /// Solves with the consistent spatial mass matrix.
    pub fn mass_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve_dense(b)
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }
}

/// Projects every component of a gradient field.
pub fn l2_project_p0_to_p1(
    surface: &SurfaceMesh1D,
    p: &GradientField,
) -> Result<[DMatrix<f64>; 2]> {
    let proj = L2Projection::new(surface)?;
    Ok([
        proj.project(&p.component(0))?,
        proj.project(&p.component(1))?,
    ])
}
