//! Finite-element assembly on the epicardial curve, the time axis and the
//! torso volume.
//!
//! Space-time fields are `N_V x (N_T + 1)` coefficient matrices. The
//! working inner product is `⟨u, v⟩ = Σ_j Mlump_jj (u D vᵀ)_jj`, i.e. the
//! lumped spatial mass tensored with the consistent temporal mass.

mod field;
mod stiffness;
mod surface;
mod temporal;

pub use field::SpaceTimeField;
pub(crate) use field::{
    matrix_csv, read_f64, read_matrix_header, read_row_major, read_u64, write_matrix_header,
    write_row_major,
};
pub use stiffness::{assemble_mass_2d, assemble_stiffness, Conductivity, Tensor2};
pub use surface::{
    assemble_spatial_mass, assemble_surface_gradient, l2_project_p0_to_p1, GradientField,
    L2Projection, SurfaceGradient,
};
pub use temporal::{
    apply_temporal_kernel, assemble_temporal_mass, compose_kernels, cross_correlation_matrix,
    cross_correlation_set, lumped_temporal_mass, temporal_kernel_matrix, temporal_mass_tridiagonal,
    TimeGrid,
};

use nalgebra::DMatrix;

use crate::error::{shape_mismatch, Result};
use crate::geometry::SurfaceMesh1D;
use crate::sparse::{CsrMatrix, SymTridiagonal};

/// Every operator needed to work with fields on one surface mesh and time
/// grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeContext {
    pub surface: SurfaceMesh1D,
    pub grid: TimeGrid,
    pub mass: CsrMatrix,
    pub mass_lumped: Vec<f64>,
    pub temporal_mass: SymTridiagonal,
    pub temporal_lumped: Vec<f64>,
    pub gradient: SurfaceGradient,
    pub projection: L2Projection,
}

impl SpaceTimeContext {
    pub fn new(surface: SurfaceMesh1D, grid: TimeGrid) -> Result<Self> {
        let (mass, mass_lumped) = assemble_spatial_mass(&surface);
        Ok(Self {
            temporal_mass: temporal_mass_tridiagonal(&grid),
            temporal_lumped: lumped_temporal_mass(&grid),
            gradient: assemble_surface_gradient(&surface),
            projection: L2Projection::new(&surface)?,
            surface,
            grid,
            mass,
            mass_lumped,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.surface.len()
    }

    pub fn n_times(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn check_shape(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.shape() != (self.n_vertices(), self.n_times()) {
            return Err(shape_mismatch(
                format!("{}x{}", self.n_vertices(), self.n_times()),
                format!("{}x{}", u.nrows(), u.ncols()),
            ));
        }
        Ok(())
    }

    pub fn zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.n_vertices(), self.n_times())
    }

    /// `(Mlump ⊗ D) u`, as the matrix `Mlump u D`.
    pub fn apply_weight(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.temporal_mass.right_mul(u);
        for (j, &m) in self.mass_lumped.iter().enumerate() {
            x.row_mut(j).scale_mut(m);
        }
        x
    }

    /// Riesz map of a Euclidean gradient: `Mlump⁻¹ E D⁻¹`.
    pub fn riesz(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.temporal_mass.right_solve(e);
        for (j, &m) in self.mass_lumped.iter().enumerate() {
            x.row_mut(j).scale_mut(1.0 / m);
        }
        x
    }

    pub fn inner(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        self.apply_weight(u).dot(v)
    }

    pub fn norm(&self, u: &DMatrix<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Fully lumped nodal weights `Mlump_jj Dlump_mm`.
    pub fn lumped_weights(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_vertices(), self.n_times(), |j, m| {
            self.mass_lumped[j] * self.temporal_lumped[m]
        })
    }
}
