use crate::error::{shape_mismatch, Error, Result};
use crate::geometry::{Mesh2D, Region};
use crate::sparse::CsrMatrix;

pub type Tensor2 = [[f64; 2]; 2];

/// Conductivity field in S/m.
#[derive(Debug, Clone, PartialEq)]
pub enum Conductivity {
    /// Scalar conductivity per region tag.
    ByRegion { torso: f64, lung: f64 },
    /// One symmetric positive definite tensor per triangle.
    PerElement(Vec<Tensor2>),
}

impl Conductivity {
    /// Homogeneous isotropic conductivity.
    pub fn uniform(sigma: f64) -> Self {
        Self::ByRegion {
            torso: sigma,
            lung: sigma,
        }
    }

    pub fn tensor(&self, mesh: &Mesh2D, t: usize) -> Tensor2 {
        match self {
            Self::ByRegion { torso, lung } => {
                let s = match mesh.triangles[t].region {
                    Region::Torso => *torso,
                    Region::Lung => *lung,
                };
                [[s, 0.0], [0.0, s]]
            }
            Self::PerElement(ts) => ts[t],
        }
    }

    /// Multiplies every tensor by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::ByRegion { torso, lung } => Self::ByRegion {
                torso: c * torso,
                lung: c * lung,
            },
            Self::PerElement(ts) => {
                Self::PerElement(ts.iter().map(|t| t.map(|r| r.map(|v| c * v))).collect())
            }
        }
    }

    fn check(&self, mesh: &Mesh2D) -> Result<()> {
        if let Self::PerElement(ts) = self {
            if ts.len() != mesh.triangles.len() {
                return Err(shape_mismatch(
                    format!("{} tensors", mesh.triangles.len()),
                    ts.len(),
                ));
            }
        }
        for t in 0..mesh.triangles.len() {
            if !is_spd(&self.tensor(mesh, t)) {
                return Err(Error::Ellipticity { element: t });
            }
        }
        Ok(())
    }
}

fn is_spd(s: &Tensor2) -> bool {
    let scale = s.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !s.iter().flatten().all(|v| v.is_finite()) || (s[0][1] - s[1][0]).abs() > 1e-12 * scale {
        return false;
    }
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    s[0][0] > 0.0 && det > 0.0
}

/// Barycentric gradients and area of triangle `t`.
pub(crate) fn element_geometry(mesh: &Mesh2D, t: usize) -> ([[f64; 2]; 3], f64) {
    let p = mesh.triangle_points(t);
    let area = mesh.triangle_area(t);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (pj, pk) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [
            (pj[1] - pk[1]) / (2.0 * area),
            (pk[0] - pj[0]) / (2.0 * area),
        ];
    }
    (g, area)
}

/// P1 stiffness `K_ij = ∫ σ ∇φ_i · ∇φ_j` (pure Neumann form).
pub fn assemble_stiffness(mesh: &Mesh2D, sigma: &Conductivity) -> Result<CsrMatrix> {
    sigma.check(mesh)?;
    let n = mesh.vertices.len();
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let (g, area) = element_geometry(mesh, t);
        let s = sigma.tensor(mesh, t);
        let v = mesh.triangles[t].vertices;
        for i in 0..3 {
            let sg = [
                s[0][0] * g[i][0] + s[0][1] * g[i][1],
                s[1][0] * g[i][0] + s[1][1] * g[i][1],
            ];
            for j in 0..3 {
                trip.push((v[i], v[j], area * (sg[0] * g[j][0] + sg[1] * g[j][1])));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip))
}

/// Consistent P1 mass matrix on the 2D mesh.
pub fn assemble_mass_2d(mesh: &Mesh2D) -> CsrMatrix {
    let n = mesh.vertices.len();
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        let v = mesh.triangles[t].vertices;
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { 2.0 } else { 1.0 };
                trip.push((v[i], v[j], w * area / 12.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Triangle;

    fn reference_triangle() -> Mesh2D {
        Mesh2D {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![Triangle {
                vertices: [0, 1, 2],
                region: Region::Torso,
            }],
            boundary_edges: vec![],
            outer_radius: 1.0,
            heart_radius: 1.0,
            heart_center: [0.0, 0.0],
        }
    }

    #[test]
    fn reference_element_matches_cotangent_formula() {
        let k = assemble_stiffness(&reference_triangle(), &Conductivity::uniform(1.0))
            .unwrap()
            .to_dense();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn indefinite_tensor_is_rejected() {
        let sigma = Conductivity::PerElement(vec![[[1.0, 0.0], [0.0, -1.0]]]);
        assert!(matches!(
            assemble_stiffness(&reference_triangle(), &sigma),
            Err(Error::Ellipticity { element: 0 })
        ));
    }

    #[test]
    fn mass_sums_to_area() {
        let m = assemble_mass_2d(&reference_triangle());
        let total: f64 = m.row_sums().iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
    }
}
