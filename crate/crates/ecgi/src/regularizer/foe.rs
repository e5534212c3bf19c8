use nalgebra::DMatrix;

use super::model::RegularizerModel;
use super::potential::Potential;
use crate::error::Result;
use crate::femcore::{temporal_kernel_matrix, SpaceTimeContext};

/// Four-channel response `(ε_θ u, P∇₁u, P∇₂u, K_i u)` of one expert.
pub type Response = [DMatrix<f64>; 4];

/// The discrete regularizer bound to a mesh, time grid and model.
#[derive(Debug, Clone)]
pub struct FoeOperator<'a> {
    ctx: &'a SpaceTimeContext,
    lambda: f64,
    eps_theta: f64,
    potentials: Vec<Potential>,
    kernels: Vec<DMatrix<f64>>,
    weights: DMatrix<f64>,
    model: RegularizerModel,
}

impl<'a> FoeOperator<'a> {
    pub fn new(ctx: &'a SpaceTimeContext, model: &RegularizerModel) -> Result<Self> {
        model.validate()?;
        let step = ctx.grid.step();
        Ok(Self {
            ctx,
            lambda: model.lambda,
            eps_theta: model.eps_theta,
            potentials: (0..model.experts.len())
                .map(|i| model.potential(i))
                .collect(),
            kernels: model
                .experts
                .iter()
                .map(|e| temporal_kernel_matrix(&ctx.grid, &e.kernel.nodal(step)))
                .collect(),
            weights: ctx.lumped_weights(),
            model: model.clone(),
        })
    }

    pub fn context(&self) -> &'a SpaceTimeContext {
        self.ctx
    }

    pub fn model(&self) -> &RegularizerModel {
        &self.model
    }

    pub fn n_experts(&self) -> usize {
        self.potentials.len()
    }

    fn spatial_channels(&self, u: &DMatrix<f64>) -> Result<[DMatrix<f64>; 2]> {
        let g = &self.ctx.gradient.components;
        Ok([
            self.ctx.projection.project(&g[0].mul_dense(u))?,
            self.ctx.projection.project(&g[1].mul_dense(u))?,
        ])
    }

    /// `L̃_i u` for every expert.
    pub fn apply(&self, u: &DMatrix<f64>) -> Result<Vec<Response>> {
        self.ctx.check_shape(u)?;
        let [s1, s2] = self.spatial_channels(u)?;
        let y0 = u * self.eps_theta;
        Ok(self
            .kernels
            .iter()
            .map(|c| [y0.clone(), s1.clone(), s2.clone(), u * c.transpose()])
            .collect())
    }

    /// Euclidean transpose `Σ_i L̃_iᵀ r_i` (no quadrature weights).
    fn transpose_sum(&self, r: &[Response]) -> Result<DMatrix<f64>> {
        let mut out = self.ctx.zeros();
        let mut spatial = [self.ctx.zeros(), self.ctx.zeros()];
        for (ri, c) in r.iter().zip(&self.kernels) {
            out += &ri[0] * self.eps_theta;
            spatial[0] += &ri[1];
            spatial[1] += &ri[2];
            out += &ri[3] * c;
        }
        let proj = &self.ctx.projection;
        for (k, s) in spatial.iter().enumerate() {
            let m_inv = proj.mass_solve(s);
            let seg = proj.load.tmul_dense(&m_inv);
            out += self.ctx.gradient.components[k].tmul_dense(&seg);
        }
        Ok(out)
    }

    /// Adjoint from the lumped-weighted response space to the field space.
    pub fn adjoint(&self, w: &[Response]) -> Result<DMatrix<f64>> {
        let weighted: Vec<Response> = w
            .iter()
            .map(|wi| wi.clone().map(|c| c.component_mul(&self.weights)))
            .collect();
        Ok(self.ctx.riesz(&self.transpose_sum(&weighted)?))
    }

    /// `Σ_i L̃_i* L̃_i u`.
    pub fn normal(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.adjoint(&self.apply(u)?)
    }

    /// Weighted pairing of two response families.
    pub fn response_inner(&self, a: &[Response], b: &[Response]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y.iter()))
            .map(|(x, y)| x.component_mul(&self.weights).dot(y))
            .sum()
    }

    pub fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        let r = self.apply(u)?;
        let (nv, nt) = u.shape();
        let mut total = 0.0;
        for (ri, pot) in r.iter().zip(&self.potentials) {
            for m in 0..nt {
                for j in 0..nv {
                    let y = [ri[0][(j, m)], ri[1][(j, m)], ri[2][(j, m)], ri[3][(j, m)]];
                    total += self.weights[(j, m)] * pot.value(y);
                }
            }
        }
        Ok(self.lambda * total)
    }

    /// Value and gradient in the space-time inner product.
    pub fn value_grad(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let r = self.apply(u)?;
        let (nv, nt) = u.shape();
        let source = self.model.grad_source;
        let mut total = 0.0;
        let mut psi: Vec<Response> = Vec::with_capacity(r.len());
        for (ri, pot) in r.iter().zip(&self.potentials) {
            let mut p: Response = std::array::from_fn(|_| DMatrix::zeros(nv, nt));
            for m in 0..nt {
                for j in 0..nv {
                    let y = [ri[0][(j, m)], ri[1][(j, m)], ri[2][(j, m)], ri[3][(j, m)]];
                    let w = self.weights[(j, m)];
                    total += w * pot.value(y);
                    let g = pot.grad(y, source);
                    for c in 0..4 {
                        p[c][(j, m)] = w * g[c];
                    }
                }
            }
            psi.push(p);
        }
        let e = self.transpose_sum(&psi)?;
        Ok((self.lambda * total, self.ctx.riesz(&e) * self.lambda))
    }
}
