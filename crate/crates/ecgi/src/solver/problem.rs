use std::time::Instant;

use nalgebra::DMatrix;

use super::agd::{agd_restart, AgdOptions, Objective, SolveReport};
use super::linear::{power_method, PowerOptions};
use crate::error::{shape_mismatch, Error, Result};
use crate::femcore::SpaceTimeContext;
use crate::forward::{fidelity_value_grad, ForwardMatrix, Observation};
use crate::regularizer::{
    tik_energy, tik_solve, tv_energy, tv_solve, Fidelity, FoeOperator, RegularizerModel, TvOptions,
};

/// Margin applied to power-method eigenvalue estimates.
pub const LIPSCHITZ_SAFETY: f64 = 1.02;

/// Data term of an [`EnergyProblem`].
#[derive(Debug, Clone, Copy)]
pub enum DataTerm<'a> {
    /// `½‖u − z‖²` in the space-time inner product.
    Denoise { z: &'a DMatrix<f64> },
    /// Electrode misfit `(1/2N_Σ) Σ_i r_iᵀ D r_i`.
    Inverse {
        z: &'a DMatrix<f64>,
        a: &'a ForwardMatrix,
    },
}

/// Fidelity plus optional FoE regularizer, with a gradient Lipschitz bound.
#[derive(Debug, Clone)]
pub struct EnergyProblem<'a> {
    pub ctx: &'a SpaceTimeContext,
    pub data: DataTerm<'a>,
    pub regularizer: Option<FoeOperator<'a>>,
    pub lipschitz: f64,
}

/// `λ_max(Σ_i L̃_i* L̃_i)` by the power method.
pub fn foe_normal_eigenvalue(op: &FoeOperator, opts: PowerOptions) -> Result<f64> {
    let ctx = op.context();
    power_method(
        |u| op.normal(u),
        |a, b| ctx.inner(a, b),
        (ctx.n_vertices(), ctx.n_times()),
        opts,
    )
}

/// `λ_max(Ã*Ã)` in the space-time inner product, from the symmetric
/// similarity transform `Mlump^{-1/2} ÃᵀÃ Mlump^{-1/2}`.
pub fn forward_normal_eigenvalue(a: &ForwardMatrix, ctx: &SpaceTimeContext) -> Result<f64> {
    let ata = a.a.transpose() * &a.a;
    let m = &ctx.mass_lumped;
    let s = DMatrix::from_fn(ata.nrows(), ata.ncols(), |i, j| {
        ata[(i, j)] / (m[i] * m[j]).sqrt()
    });
    Ok(s.symmetric_eigenvalues().max().max(0.0))
}

impl<'a> EnergyProblem<'a> {
    fn check(ctx: &SpaceTimeContext, data: &DataTerm) -> Result<()> {
        match data {
            DataTerm::Denoise { z } => ctx.check_shape(z),
            DataTerm::Inverse { z, a } => {
                if a.a.ncols() != ctx.n_vertices() || z.shape() != (a.n_electrodes(), ctx.n_times())
                {
                    return Err(shape_mismatch(
                        format!("{}x{}", a.n_electrodes(), ctx.n_times()),
                        format!("{}x{}", z.nrows(), z.ncols()),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Builds the problem and its Lipschitz bound
    /// `ℒ_G + λ_θ max_i Lip(φ_i′) λ_max(L̃*L̃)`, eigenvalues inflated by
    /// [`LIPSCHITZ_SAFETY`].
    pub fn new(
        ctx: &'a SpaceTimeContext,
        data: DataTerm<'a>,
        model: Option<&RegularizerModel>,
    ) -> Result<Self> {
        Self::with_normal_eigenvalue(ctx, data, model, None)
    }

    /// As [`EnergyProblem::new`], reusing a known `λ_max(L̃*L̃)` for the
    /// model's kernels instead of running the power method.
    pub fn with_normal_eigenvalue(
        ctx: &'a SpaceTimeContext,
        data: DataTerm<'a>,
        model: Option<&RegularizerModel>,
        normal_eigenvalue: Option<f64>,
    ) -> Result<Self> {
        Self::check(ctx, &data)?;
        let data_lip = match data {
            DataTerm::Denoise { .. } => 1.0,
            DataTerm::Inverse { a, .. } => {
                LIPSCHITZ_SAFETY * forward_normal_eigenvalue(a, ctx)? / a.n_electrodes() as f64
            }
        };
        let (regularizer, reg_lip) = match model {
            Some(m) => {
                let op = FoeOperator::new(ctx, m)?;
                let l = match normal_eigenvalue {
                    Some(l) => l,
                    None => foe_normal_eigenvalue(&op, PowerOptions::default())?,
                };
                let lip = m.lambda * m.max_potential_lipschitz() * l * LIPSCHITZ_SAFETY;
                (Some(op), lip)
            }
            None => (None, 0.0),
        };
        Ok(Self {
            ctx,
            data,
            regularizer,
            lipschitz: data_lip + reg_lip,
        })
    }

    fn data_value_grad(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        match self.data {
            DataTerm::Denoise { z } => {
                let r = u - z;
                Ok((0.5 * self.ctx.inner(&r, &r), r))
            }
            DataTerm::Inverse { z, a } => fidelity_value_grad(u, z, a, self.ctx),
        }
    }
}

impl Objective for EnergyProblem<'_> {
    fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        let (g, _) = self.data_value_grad(u)?;
        let r = match &self.regularizer {
            Some(op) => op.value(u)?,
            None => 0.0,
        };
        Ok(g + r)
    }

    fn value_grad(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let (mut f, mut g) = self.data_value_grad(u)?;
        if let Some(op) = &self.regularizer {
            let (rv, rg) = op.value_grad(u)?;
            f += rv;
            g += rg;
        }
        Ok((f, g))
    }

    fn norm(&self, g: &DMatrix<f64>) -> f64 {
        self.ctx.norm(g)
    }
}

/// `prox_R(z) = argmin ½‖u − z‖² + R_θ(u)` for the model at noise level
/// `κ`, started from `z`.
///
/// A model with `λ_θ = 0` returns `z` unchanged.
pub fn prox_denoise(
    z: &DMatrix<f64>,
    model: &RegularizerModel,
    kappa: f64,
    ctx: &SpaceTimeContext,
    opts: AgdOptions,
) -> Result<(DMatrix<f64>, SolveReport)> {
    prox_denoise_with(z, model, kappa, ctx, opts, None)
}

/// `λ_max(L̃*L̃)` of a model's kernels. It does not depend on `λ_θ`, `μ_i`
/// or the noise level, so one value serves a whole batch of prox calls.
pub fn model_normal_eigenvalue(model: &RegularizerModel, ctx: &SpaceTimeContext) -> Result<f64> {
    foe_normal_eigenvalue(&FoeOperator::new(ctx, model)?, PowerOptions::default())
}

/// [`prox_denoise`] with an optional precomputed [`model_normal_eigenvalue`].
pub fn prox_denoise_with(
    z: &DMatrix<f64>,
    model: &RegularizerModel,
    kappa: f64,
    ctx: &SpaceTimeContext,
    opts: AgdOptions,
    normal_eigenvalue: Option<f64>,
) -> Result<(DMatrix<f64>, SolveReport)> {
    ctx.check_shape(z)?;
    if !(kappa >= 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "noise level must be nonnegative, got {kappa}"
        )));
    }
    if model.lambda == 0.0 {
        return Ok((
            z.clone(),
            SolveReport::summary(0, 0.0, true, Default::default()),
        ));
    }
    let m = model.at_noise_level(kappa);
    let problem = EnergyProblem::with_normal_eigenvalue(
        ctx,
        DataTerm::Denoise { z },
        Some(&m),
        normal_eigenvalue,
    )?;
    agd_restart(&problem, problem.lipschitz, z, opts)
}

/// Regularization used by [`inverse_reconstruct`].
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Learned regularizer, `μ_i` scaled to noise level `kappa`.
    Foe {
        model: RegularizerModel,
        kappa: f64,
    },
    Tik {
        lambda_gamma: f64,
        lambda_t: f64,
    },
    Tv {
        lambda_gamma: f64,
        lambda_t: f64,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Foe { model, .. } if model.convex => "CMFoE",
            Method::Foe { .. } => "MFoE",
            Method::Tik { .. } => "TIK",
            Method::Tv { .. } => "TV",
        }
    }
}

/// Reconstructs epicardial potentials from electrode data.
///
/// FoE models run [`agd_restart`] from `u⁰ = 0`; the baselines use their
/// dedicated solvers and report iteration counts only.
pub fn inverse_reconstruct(
    z: &Observation,
    method: &Method,
    a: &ForwardMatrix,
    ctx: &SpaceTimeContext,
    opts: AgdOptions,
) -> Result<(DMatrix<f64>, SolveReport)> {
    if (z.step - ctx.grid.step()).abs() > 1e-12 * ctx.grid.step() {
        return Err(shape_mismatch(
            format!("time step {}", ctx.grid.step()),
            format!("time step {}", z.step),
        ));
    }
    let zv = &z.values;
    let start = Instant::now();
    match method {
        Method::Foe { model, kappa } => {
            let m = model.at_noise_level(*kappa);
            let problem = EnergyProblem::new(ctx, DataTerm::Inverse { z: zv, a }, Some(&m))?;
            agd_restart(&problem, problem.lipschitz, &ctx.zeros(), opts)
        }
        Method::Tik {
            lambda_gamma,
            lambda_t,
        } => {
            let fid = Fidelity::Inverse { z: zv, a };
            let u = tik_solve(&fid, *lambda_gamma, *lambda_t, ctx)?;
            let e = tik_energy(&fid, *lambda_gamma, *lambda_t, &u, ctx);
            Ok((u, SolveReport::summary(0, e, true, start.elapsed())))
        }
        Method::Tv {
            lambda_gamma,
            lambda_t,
        } => {
            let fid = Fidelity::Inverse { z: zv, a };
            let out = tv_solve(&fid, *lambda_gamma, *lambda_t, ctx, TvOptions::default())?;
            let e = tv_energy(&fid, *lambda_gamma, *lambda_t, &out.u, ctx);
            Ok((
                out.u,
                SolveReport::summary(out.iterations, e, out.converged, start.elapsed()),
            ))
        }
    }
}
