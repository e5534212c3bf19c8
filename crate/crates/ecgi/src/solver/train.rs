use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::agd::AgdOptions;
use super::problem::{model_normal_eigenvalue, prox_denoise_with};
use crate::error::{Error, Result};
use crate::femcore::SpaceTimeContext;
use crate::regularizer::{Kernel, RegularizerModel};

/// One training pair: clean field, its noisy version and the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub clean: DMatrix<f64>,
    pub noisy: DMatrix<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaOptions {
    /// Gain numerator `a` in `a_k = a / (k + 1 + A)^α`.
    pub a: f64,
    /// Perturbation numerator `c` in `c_k = c / (k + 1)^γ`.
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Stability offset `A`.
    pub offset: f64,
    /// Largest change of any parameter in one step.
    pub max_step: f64,
    pub seed: u64,
    /// Inner solver settings for each prox evaluation.
    pub agd: AgdOptions,
}

impl Default for SpsaOptions {
    fn default() -> Self {
        Self {
            a: 0.05,
            c: 0.05,
            alpha: 0.602,
            gamma: 0.101,
            offset: 10.0,
            max_step: 0.2,
            seed: 0,
            agd: AgdOptions {
                max_iter: 500,
                tol: 1e-6,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RegularizerModel,
    pub initial_loss: f64,
    pub best_loss: f64,
    /// Loss of the current iterate after every step.
    pub loss_trace: Vec<f64>,
}

/// Trainable parameters: `ln λ_θ`, `ln ε_θ`, `ln μ_i` and kernel values.
fn pack(m: &RegularizerModel) -> Vec<f64> {
    let mut p = vec![m.lambda.ln(), m.eps_theta.ln()];
    p.extend(m.experts.iter().map(|e| e.mu.ln()));
    for e in &m.experts {
        match &e.kernel {
            Kernel::Nodal(k) => p.extend(k),
            Kernel::Composed(ks) => p.extend(ks.iter().flatten()),
        }
    }
    p
}

fn unpack(template: &RegularizerModel, p: &[f64]) -> RegularizerModel {
    let mut m = template.clone();
    m.lambda = p[0].exp();
    m.eps_theta = p[1].exp();
    let n = m.experts.len();
    let mut k = 2 + n;
    for (i, e) in m.experts.iter_mut().enumerate() {
        e.mu = p[2 + i].exp();
        match &mut e.kernel {
            Kernel::Nodal(v) => {
                for x in v.iter_mut() {
                    *x = p[k];
                    k += 1;
                }
            }
            Kernel::Composed(ks) => {
                for x in ks.iter_mut().flatten() {
                    *x = p[k];
                    k += 1;
                }
            }
        }
    }
    m
}

/// `(1/M) Σ_m κ_m^{-1/2} ‖v_m − prox(z_m)‖`.
pub fn training_loss(
    samples: &[TrainingSample],
    model: &RegularizerModel,
    ctx: &SpaceTimeContext,
    agd: AgdOptions,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::ParameterOutOfRange("training set is empty".into()));
    }
    let eig = model_normal_eigenvalue(model, ctx)?;
    let terms: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let (u, _) = prox_denoise_with(&s.noisy, model, s.kappa, ctx, agd, Some(eig))?;
            Ok(ctx.norm(&(&s.clean - u)) / s.kappa.max(1e-12).sqrt())
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total / samples.len() as f64)
}

/// Simultaneous-perturbation stochastic approximation of the training
/// loss over `budget` steps.
///
/// Failed or non-finite loss evaluations count as `+∞`. The best model seen
/// is returned, so the reported loss never exceeds the initial one.
pub fn spsa_train(
    samples: &[TrainingSample],
    model0: &RegularizerModel,
    budget: usize,
    ctx: &SpaceTimeContext,
    opts: SpsaOptions,
) -> Result<TrainOutcome> {
    model0.validate()?;
    let initial_loss = if budget == 0 {
        f64::NAN
    } else {
        training_loss(samples, model0, ctx, opts.agd)?
    };
    let mut out = TrainOutcome {
        model: model0.clone(),
        initial_loss,
        best_loss: initial_loss,
        loss_trace: Vec::with_capacity(budget),
    };
    if budget == 0 {
        return Ok(out);
    }
    let loss = |p: &[f64]| -> f64 {
        let m = unpack(model0, p);
        match training_loss(samples, &m, ctx, opts.agd) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut theta = pack(model0);
    for k in 0..budget {
        let ak = opts.a / (k as f64 + 1.0 + opts.offset).powf(opts.alpha);
        let ck = opts.c / (k as f64 + 1.0).powf(opts.gamma);
        let delta: Vec<f64> = (0..theta.len())
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        if ck > 0.0 {
            let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + ck * d).collect();
            let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ck * d).collect();
            let (lp, lm) = (loss(&plus), loss(&minus));
            if lp.is_finite() && lm.is_finite() {
                let slope = (lp - lm) / (2.0 * ck);
                for (t, d) in theta.iter_mut().zip(&delta) {
                    *t -= (ak * slope * d).clamp(-opts.max_step, opts.max_step);
                }
            }
        }
        let l = loss(&theta);
        out.loss_trace.push(l);
        if l < out.best_loss {
            out.best_loss = l;
            out.model = unpack(model0, &theta);
        }
        log::debug!("spsa step {k}: loss {l:e}");
    }
    Ok(out)
}
