//! Handcrafted space-time baselines: quadratic smoothing (TIK) and total
//! variation (TV) in space and time.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::femcore::{SpaceTimeContext, TimeGrid};
use crate::forward::ForwardMatrix;
use crate::solver::{cg, power_method, PowerOptions};
use crate::sparse::CsrMatrix;

/// Data term shared by the baselines.
#[derive(Debug, Clone, Copy)]
pub enum Fidelity<'a> {
    /// `½‖u − z‖²` in the space-time inner product.
    Denoise { z: &'a DMatrix<f64> },
    /// `(1/2N_Σ) Σ_i (Ãu − z)_iᵀ D (Ãu − z)_i`.
    Inverse {
        z: &'a DMatrix<f64>,
        a: &'a ForwardMatrix,
    },
}

impl Fidelity<'_> {
    fn check(&self, ctx: &SpaceTimeContext) -> Result<()> {
        match self {
            Fidelity::Denoise { z } => ctx.check_shape(z),
            Fidelity::Inverse { z, a } => {
                if a.a.ncols() != ctx.n_vertices() || z.shape() != (a.n_electrodes(), ctx.n_times())
                {
                    return Err(crate::error::shape_mismatch(
                        format!("{}x{}", a.n_electrodes(), ctx.n_times()),
                        format!("{}x{}", z.nrows(), z.ncols()),
                    ));
                }
                Ok(())
            }
        }
    }

    fn value(&self, u: &DMatrix<f64>, ctx: &SpaceTimeContext) -> f64 {
        match self {
            Fidelity::Denoise { z } => 0.5 * ctx.inner(&(u - *z), &(u - *z)),
            Fidelity::Inverse { z, a } => {
                let r = a.apply(u) - *z;
                0.5 / a.n_electrodes() as f64 * ctx.temporal_mass.right_mul(&r).dot(&r)
            }
        }
    }
}

/// Arc-length stiffness `Σ_k G_kᵀ diag(|J|) G_k` on the closed curve.
pub fn curve_stiffness(ctx: &SpaceTimeContext) -> CsrMatrix {
    let lens = &ctx.surface.segment_lengths;
    let mut t = Vec::new();
    for g in &ctx.gradient.components {
        for seg in 0..g.nrows() {
            let (cols, vals) = g.row(seg);
            for (&a, &va) in cols.iter().zip(vals) {
                for (&b, &vb) in cols.iter().zip(vals) {
                    t.push((a, b, va * vb * lens[seg]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(ctx.n_vertices(), ctx.n_vertices(), &t)
}

/// Temporal stiffness, `1/δ` times `[1, −1; −1, 1]` per interval.
pub fn temporal_stiffness(grid: &TimeGrid) -> CsrMatrix {
    let n = grid.n_nodes();
    let w = 1.0 / grid.step();
    let mut t = Vec::with_capacity(4 * grid.n_intervals());
    for m in 0..grid.n_intervals() {
        t.extend([(m, m, w), (m + 1, m + 1, w), (m, m + 1, -w), (m + 1, m, -w)]);
    }
    CsrMatrix::from_triplets(n, n, &t)
}

fn scale_rows(x: &mut DMatrix<f64>, w: &[f64]) {
    for (j, &m) in w.iter().enumerate() {
        x.row_mut(j).scale_mut(m);
    }
}

fn scale_cols(x: &mut DMatrix<f64>, w: &[f64]) {
    for (m, &d) in w.iter().enumerate() {
        x.column_mut(m).scale_mut(d);
    }
}

/// Minimizes the fidelity plus
/// `(λ_γ²/2) Σ_m Dlump_m u_mᵀ K_s u_m + (λ_t²/2) Σ_j Mlump_j u_jᵀ K_t u_j`.
///
/// Solves the normal equations with conjugate gradients; with both weights
/// zero the denoising problem returns `z` unchanged.
pub fn tik_solve(
    fid: &Fidelity,
    lambda_gamma: f64,
    lambda_t: f64,
    ctx: &SpaceTimeContext,
) -> Result<DMatrix<f64>> {
    fid.check(ctx)?;
    if !(lambda_gamma >= 0.0 && lambda_t >= 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "TIK weights must be nonnegative, got ({lambda_gamma}, {lambda_t})"
        )));
    }
    let (cs, ct) = (lambda_gamma * lambda_gamma, lambda_t * lambda_t);
    if let Fidelity::Denoise { z } = fid {
        if cs == 0.0 && ct == 0.0 {
            return Ok((*z).clone());
        }
    }
    let ks = curve_stiffness(ctx);
    let kt = temporal_stiffness(&ctx.grid);
    let regular = |u: &DMatrix<f64>| {
        let mut a = ks.mul_dense(u);
        scale_cols(&mut a, &ctx.temporal_lumped);
        let mut b = kt.tmul_dense(&u.transpose()).transpose();
        scale_rows(&mut b, &ctx.mass_lumped);
        a * cs + b * ct
    };
    let (op_data, rhs, x0): (
        Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64>>,
        DMatrix<f64>,
        Option<DMatrix<f64>>,
    ) = match *fid {
        Fidelity::Denoise { z } => (
            Box::new(|u| ctx.apply_weight(u)),
            ctx.apply_weight(z),
            Some(z.clone()),
        ),
        Fidelity::Inverse { z, a } => {
            let n = a.n_electrodes() as f64;
            let ata = a.a.transpose() * &a.a / n;
            let rhs = ctx.temporal_mass.right_mul(&(a.a.transpose() * z)) / n;
            (
                Box::new(move |u| ctx.temporal_mass.right_mul(&(&ata * u))),
                rhs,
                None,
            )
        }
    };
    let dof = rhs.len();
    let (u, _) = cg(
        |u| op_data(u) + regular(u),
        &rhs,
        x0.as_ref(),
        1e-8,
        10 * dof,
    )?;
    Ok(u)
}

/// Energy minimized by [`tik_solve`].
pub fn tik_energy(
    fid: &Fidelity,
    lambda_gamma: f64,
    lambda_t: f64,
    u: &DMatrix<f64>,
    ctx: &SpaceTimeContext,
) -> f64 {
    let ks = curve_stiffness(ctx);
    let kt = temporal_stiffness(&ctx.grid);
    let mut s = ks.mul_dense(u);
    scale_cols(&mut s, &ctx.temporal_lumped);
    let mut t = kt.tmul_dense(&u.transpose()).transpose();
    scale_rows(&mut t, &ctx.mass_lumped);
    fid.value(u, ctx) + 0.5 * lambda_gamma.powi(2) * s.dot(u) + 0.5 * lambda_t.powi(2) * t.dot(u)
}

/// Result of [`tv_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct TvOutcome {
    pub u: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvOptions {
    pub max_iter: usize,
    /// Stop once `‖u⁺ − u‖ ≤ tol ‖u⁺‖`.
    pub tol: f64,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-6,
        }
    }
}

/// Discrete space-time gradient used by the TV baseline: per-segment
/// arc-length differences and forward time differences (zero at the last
/// node), scaled by `λ_γ` and `λ_t`.
struct TvGradient<'a> {
    ctx: &'a SpaceTimeContext,
    lg: f64,
    lt: f64,
    /// Dual quadrature weights `|J_j| Dlump_m`.
    omega: DMatrix<f64>,
}

impl<'a> TvGradient<'a> {
    fn new(ctx: &'a SpaceTimeContext, lg: f64, lt: f64) -> Self {
        let lens = &ctx.surface.segment_lengths;
        let omega = DMatrix::from_fn(ctx.n_vertices(), ctx.n_times(), |j, m| {
            lens[j] * ctx.temporal_lumped[m]
        });
        Self { ctx, lg, lt, omega }
    }

    fn apply(&self, u: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nv, nt) = u.shape();
        let lens = &self.ctx.surface.segment_lengths;
        let dt = self.ctx.grid.step();
        let ps = DMatrix::from_fn(nv, nt, |j, m| {
            self.lg * (u[((j + 1) % nv, m)] - u[(j, m)]) / lens[j]
        });
        let pt = DMatrix::from_fn(nv, nt, |j, m| {
            if m + 1 < nt {
                self.lt * (u[(j, m + 1)] - u[(j, m)]) / dt
            } else {
                0.0
            }
        });
        (ps, pt)
    }

    /// `K* q = W⁻¹ Kᵀ Ω q`.
    fn adjoint(&self, qs: &DMatrix<f64>, qt: &DMatrix<f64>) -> DMatrix<f64> {
        let (nv, nt) = qs.shape();
        let lens = &self.ctx.surface.segment_lengths;
        let dt = self.ctx.grid.step();
        let mut e = DMatrix::zeros(nv, nt);
        for m in 0..nt {
            for j in 0..nv {
                let w = self.omega[(j, m)];
                let a = self.lg * w * qs[(j, m)] / lens[j];
                e[((j + 1) % nv, m)] += a;
                e[(j, m)] -= a;
                if m + 1 < nt {
                    let b = self.lt * w * qt[(j, m)] / dt;
                    e[(j, m + 1)] += b;
                    e[(j, m)] -= b;
                }
            }
        }
        self.ctx.riesz(&e)
    }

    fn normal(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let (ps, pt) = self.apply(u);
        self.adjoint(&ps, &pt)
    }

    fn total_variation(&self, u: &DMatrix<f64>) -> f64 {
        let (ps, pt) = self.apply(u);
        ps.iter()
            .zip(pt.iter())
            .zip(self.omega.iter())
            .map(|((a, b), w)| w * a.hypot(*b))
            .sum()
    }
}

/// Energy minimized by [`tv_solve`].
pub fn tv_energy(
    fid: &Fidelity,
    lambda_gamma: f64,
    lambda_t: f64,
    u: &DMatrix<f64>,
    ctx: &SpaceTimeContext,
) -> f64 {
    fid.value(u, ctx) + TvGradient::new(ctx, lambda_gamma, lambda_t).total_variation(u)
}

/// Minimizes the fidelity plus isotropic space-time total variation with
/// the primal-dual method of Chambolle and Pock.
///
/// Without convergence the lowest-energy checkpoint is returned with
/// `converged = false`.
pub fn tv_solve(
    fid: &Fidelity,
    lambda_gamma: f64,
    lambda_t: f64,
    ctx: &SpaceTimeContext,
    opts: TvOptions,
) -> Result<TvOutcome> {
    fid.check(ctx)?;
    if !(lambda_gamma >= 0.0 && lambda_t >= 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "TV weights must be nonnegative, got ({lambda_gamma}, {lambda_t})"
        )));
    }
    if let Fidelity::Denoise { z } = fid {
        if lambda_gamma == 0.0 && lambda_t == 0.0 {
            return Ok(TvOutcome {
                u: (*z).clone(),
                iterations: 0,
                converged: true,
            });
        }
    }
    let k = TvGradient::new(ctx, lambda_gamma, lambda_t);
    let shape = (ctx.n_vertices(), ctx.n_times());
    let inner = |a: &DMatrix<f64>, b: &DMatrix<f64>| ctx.inner(a, b);
    // The data block is scaled by `c` so that both blocks of the stacked
    // operator have comparable norms; the dual step absorbs `c`.
    let c = match fid {
        Fidelity::Inverse { a, .. } => {
            let tv_norm2 =
                power_method(|u| Ok(k.normal(u)), inner, shape, PowerOptions::default())?;
            let a_norm2 = power_method(
                |u| Ok(a.adjoint(ctx, &a.apply(u))),
                inner,
                shape,
                PowerOptions::default(),
            )?;
            if tv_norm2 > 0.0 {
                (tv_norm2 / a_norm2).sqrt()
            } else {
                1.0
            }
        }
        Fidelity::Denoise { .. } => 1.0,
    };
    let normal = |u: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut x = k.normal(u);
        if let Fidelity::Inverse { a, .. } = fid {
            x += a.adjoint(ctx, &a.apply(u)) * (c * c);
        }
        Ok(x)
    };
    let norm2 = power_method(normal, inner, shape, PowerOptions::default())?;
    let step = 0.99 / norm2.sqrt();
    let (tau, sigma) = (step, step);

    let mut u = match fid {
        Fidelity::Denoise { z } => (*z).clone(),
        Fidelity::Inverse { .. } => ctx.zeros(),
    };
    let mut ubar = u.clone();
    let mut qs = ctx.zeros();
    let mut qt = ctx.zeros();
    let mut s = match fid {
        Fidelity::Inverse { z, .. } => DMatrix::zeros(z.nrows(), z.ncols()),
        Fidelity::Denoise { .. } => DMatrix::zeros(0, 0),
    };
    let mut best = (tv_energy(fid, lambda_gamma, lambda_t, &u, ctx), u.clone());
    for it in 1..=opts.max_iter {
        let (ps, pt) = k.apply(&ubar);
        qs += ps * sigma;
        qt += pt * sigma;
        for (a, b) in qs.iter_mut().zip(qt.iter_mut()) {
            let n = a.hypot(*b);
            if n > 1.0 {
                *a /= n;
                *b /= n;
            }
        }
        let mut v = &u - k.adjoint(&qs, &qt) * tau;
        match fid {
            Fidelity::Denoise { z } => {
                v = (v + *z * tau) / (1.0 + tau);
            }
            Fidelity::Inverse { z, a } => {
                let n = a.n_electrodes() as f64;
                s = (&s + a.apply(&ubar) * (sigma * c) - *z * (sigma * c))
                    / (1.0 + sigma * n * c * c);
                v -= a.adjoint(ctx, &s) * (tau * c);
            }
        }
        let du = ctx.norm(&(&v - &u));
        let un = ctx.norm(&v);
        ubar = &v * 2.0 - &u;
        u = v;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: it });
        }
        if du <= opts.tol * un || un == 0.0 && du == 0.0 {
            return Ok(TvOutcome {
                u,
                iterations: it,
                converged: true,
            });
        }
        if it % 100 == 0 {
            let e = tv_energy(fid, lambda_gamma, lambda_t, &u, ctx);
            if e < best.0 {
                best = (e, u.clone());
            }
        }
    }
    let e = tv_energy(fid, lambda_gamma, lambda_t, &u, ctx);
    if e < best.0 {
        best = (e, u);
    }
    log::warn!(
        "TV solver stopped after {} iterations without converging",
        opts.max_iter
    );
    Ok(TvOutcome {
        u: best.1,
        iterations: opts.max_iter,
        converged: false,
    })
}
