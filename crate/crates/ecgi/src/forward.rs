//! Forward map from epicardial potentials to electrode averages.
//!
//! The volume potential solves the conductivity equation with Dirichlet
//! data on the heart boundary and homogeneous Neumann data on the torso.
//! Each electrode reading is the patch average of its boundary trace.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{shape_mismatch, Error, Result};
use crate::femcore::{
    assemble_stiffness, matrix_csv, read_f64, read_matrix_header, read_row_major, read_u64,
    write_matrix_header, write_row_major, Conductivity, SpaceTimeContext,
};
use crate::geometry::{extract_epicardial_curve, ElectrodeSet, Mesh2D, SurfaceMesh1D};
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Factorized Dirichlet-reduced stiffness with the coupling to the heart
/// boundary values.
#[derive(Debug, Clone)]
pub struct ForwardSystem {
    pub mesh: Mesh2D,
    pub curve: SurfaceMesh1D,
    interior: Vec<usize>,
    interior_chol: SparseCholesky,
    /// `K_IH` with columns in curve order.
    coupling: CsrMatrix,
}

pub fn build_forward_system(mesh: &Mesh2D, sigma: &Conductivity) -> Result<ForwardSystem> {
    let curve = extract_epicardial_curve(mesh)?;
    let k = assemble_stiffness(mesh, sigma)?;
    let mut is_heart = vec![false; mesh.vertices.len()];
    for &v in &curve.vertex_ids {
        is_heart[v] = true;
    }
    let interior: Vec<usize> = (0..mesh.vertices.len()).filter(|&v| !is_heart[v]).collect();
    let kii = k.submatrix(&interior, &interior);
    let coupling = k.submatrix(&interior, &curve.vertex_ids);
    let interior_chol = SparseCholesky::factor(&kii)?;
    Ok(ForwardSystem {
        mesh: mesh.clone(),
        curve,
        interior,
        interior_chol,
        coupling,
    })
}

impl ForwardSystem {
    pub fn n_heart(&self) -> usize {
        self.curve.len()
    }

    /// Volume potential for heart data given in curve order.
    pub fn solve(&self, heart_values: &[f64]) -> Result<Vec<f64>> {
        if heart_values.len() != self.n_heart() {
            return Err(shape_mismatch(self.n_heart(), heart_values.len()));
        }
        let rhs: Vec<f64> = self
            .coupling
            .mul_vec(heart_values)
            .iter()
            .map(|v| -v)
            .collect();
        let w = self.interior_chol.solve(&rhs);
        let mut v = vec![0.0; self.mesh.vertices.len()];
        for (k, &h) in self.curve.vertex_ids.iter().enumerate() {
            v[h] = heart_values[k];
        }
        for (k, &i) in self.interior.iter().enumerate() {
            v[i] = w[k];
        }
        Ok(v)
    }

    /// Electrode averages computed by a full solve per column.
    pub fn electrode_potentials(
        &self,
        electrodes: &ElectrodeSet,
        u: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let avg = averaging_operator(&self.mesh, electrodes);
        let cols: Vec<Vec<f64>> = (0..u.ncols())
            .into_par_iter()
            .map(|c| {
                let col: Vec<f64> = u.column(c).iter().copied().collect();
                self.solve(&col).map(|v| avg.mul_vec(&v))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(electrodes.len(), u.ncols(), |i, c| {
            cols[c][i]
        }))
    }
}

/// Sparse `N_Σ x N` patch-averaging operator (trapezoid rule).
pub fn averaging_operator(mesh: &Mesh2D, electrodes: &ElectrodeSet) -> CsrMatrix {
    let mut t = Vec::new();
    for (i, patch) in electrodes.patches.iter().enumerate() {
        let total = electrodes.patch_lengths[i];
        for &e in patch {
            let [a, b] = mesh.boundary_edges[e].vertices;
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            t.push((i, a, 0.5 * len / total));
            t.push((i, b, 0.5 * len / total));
        }
    }
    CsrMatrix::from_triplets(electrodes.len(), mesh.vertices.len(), &t)
}

/// Dense map `Ã` from heart nodal values to electrode averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMatrix {
    pub a: DMatrix<f64>,
}

/// Builds `Ã` with one adjoint solve per electrode.
pub fn assemble_forward_matrix(
    system: &ForwardSystem,
    electrodes: &ElectrodeSet,
) -> Result<ForwardMatrix> {
    let avg = averaging_operator(&system.mesh, electrodes);
    let nh = system.n_heart();
    let rows: Vec<Vec<f64>> = (0..electrodes.len())
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = avg.row(i);
            let mut e_full = vec![0.0; system.mesh.vertices.len()];
            for (&c, &v) in cols.iter().zip(vals) {
                e_full[c] = v;
            }
            let e_int: Vec<f64> = system.interior.iter().map(|&v| e_full[v]).collect();
            let y = system.interior_chol.solve(&e_int);
            let coupled = system.coupling.tmul_vec(&y);
            (0..nh)
                .map(|k| e_full[system.curve.vertex_ids[k]] - coupled[k])
                .collect()
        })
        .collect();
    Ok(ForwardMatrix {
        a: DMatrix::from_fn(electrodes.len(), nh, |i, k| rows[i][k]),
    })
}

impl ForwardMatrix {
    pub fn n_electrodes(&self) -> usize {
        self.a.nrows()
    }

    pub fn apply(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * u
    }

    /// Adjoint with respect to the space-time field inner product and the
    /// `D`-weighted data pairing: `Mlump⁻¹ Ãᵀ w`.
    pub fn adjoint(&self, ctx: &SpaceTimeContext, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.a.transpose() * w;
        for (j, &m) in ctx.mass_lumped.iter().enumerate() {
            x.row_mut(j).scale_mut(1.0 / m);
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// Standard deviation `level` on every entry.
    Gaussian,
    /// Per-row standard deviation `rms * 10^(-level / 20)`.
    GaussianSnr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMeta {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseMeta {
    pub const NONE: NoiseMeta = NoiseMeta {
        kind: NoiseKind::None,
        level: 0.0,
        seed: 0,
    };
}

/// Electrode time series `z`, one row per electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: DMatrix<f64>,
    pub step: f64,
    pub noise: NoiseMeta,
}

impl Observation {
    pub fn new(values: DMatrix<f64>, step: f64, noise: NoiseMeta) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("observation has non-finite entries".into()));
        }
        Ok(Self {
            values,
            step,
            noise,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_matrix_header(&mut out, b"OBS1", &self.values, self.step);
        out.push(match self.noise.kind {
            NoiseKind::None => 0,
            NoiseKind::Gaussian => 1,
            NoiseKind::GaussianSnr => 2,
        });
        out.extend_from_slice(&self.noise.level.to_le_bytes());
        out.extend_from_slice(&self.noise.seed.to_le_bytes());
        write_row_major(&mut out, &self.values);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let (rows, cols, step) = read_matrix_header(&mut r, b"OBS1")?;
        let (&tag, rest) = r
            .split_first()
            .ok_or_else(|| Error::Format("truncated noise record".into()))?;
        r = rest;
        let kind = match tag {
            0 => NoiseKind::None,
            1 => NoiseKind::Gaussian,
            2 => NoiseKind::GaussianSnr,
            t => return Err(Error::Format(format!("unknown noise kind {t}"))),
        };
        let level = read_f64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let values = read_row_major(&mut r, rows, cols)?;
        Self::new(values, step, NoiseMeta { kind, level, seed })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv("electrode", &self.values, self.step)
    }
}

/// Data fidelity `(1 / 2N_Σ) Σ_i r_iᵀ D r_i` with `r = Ãu − z`, and its
/// gradient in the space-time inner product.
pub fn fidelity_value_grad(
    u: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &ForwardMatrix,
    ctx: &SpaceTimeContext,
) -> Result<(f64, DMatrix<f64>)> {
    ctx.check_shape(u)?;
    if z.shape() != (a.n_electrodes(), ctx.n_times()) {
        return Err(shape_mismatch(
            format!("{}x{}", a.n_electrodes(), ctx.n_times()),
            format!("{}x{}", z.nrows(), z.ncols()),
        ));
    }
    let ns = a.n_electrodes() as f64;
    let r = a.apply(u) - z;
    let value = 0.5 / ns * ctx.temporal_mass.right_mul(&r).dot(&r);
    let grad = a.adjoint(ctx, &r) / ns;
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_torso_mesh, define_electrodes, MeshConfig};

    #[test]
    fn observation_round_trip() {
        let z = DMatrix::from_fn(3, 4, |i, j| i as f64 - 0.3 * j as f64);
        let o = Observation::new(
            z,
            0.5,
            NoiseMeta {
                kind: NoiseKind::GaussianSnr,
                level: 30.0,
                seed: 7,
            },
        )
        .unwrap();
        assert_eq!(Observation::from_bytes(&o.to_bytes()).unwrap(), o);
    }

    #[test]
    fn rows_average_constants_to_one() {
        let m = build_torso_mesh(&MeshConfig::default()).unwrap();
        let e = define_electrodes(&m, 12, 0.9).unwrap();
        let sys = build_forward_system(&m, &Conductivity::uniform(0.2)).unwrap();
        let a = assemble_forward_matrix(&sys, &e).unwrap();
        for i in 0..12 {
            assert!((a.a.row(i).sum() - 1.0).abs() < 1e-10);
        }
    }
}
