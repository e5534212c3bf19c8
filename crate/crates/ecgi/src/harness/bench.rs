use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::BenchmarkConfig;
use crate::datagen::{
    add_field_noise, add_observation_noise, DatagenConfig, Dataset, SampleGenerator,
};
use crate::error::{shape_mismatch, Error, Result};
use crate::femcore::{Conductivity, SpaceTimeContext, TimeGrid};
use crate::forward::{
    assemble_forward_matrix, build_forward_system, ForwardMatrix, NoiseMeta, Observation,
};
use crate::geometry::{
    build_torso_mesh, define_electrodes, extract_epicardial_curve, ElectrodeSet, Mesh2D,
};
use crate::regularizer::{tik_solve, tv_solve, Fidelity, RegularizerModel, TvOptions};
use crate::solver::{
    inverse_reconstruct, model_normal_eigenvalue, prox_denoise_with, spsa_train, AgdOptions,
    Method, SpsaOptions, TrainOutcome, TrainingSample,
};

/// `√((u − u_ref)ᵀ (Mlump ⊗ D)(u − u_ref))`.
pub fn l2_error(u: &DMatrix<f64>, u_ref: &DMatrix<f64>, ctx: &SpaceTimeContext) -> Result<f64> {
    ctx.check_shape(u_ref)?;
    if u.shape() != u_ref.shape() {
        return Err(shape_mismatch(
            format!("{:?}", u_ref.shape()),
            format!("{:?}", u.shape()),
        ));
    }
    Ok(ctx.norm(&(u - u_ref)))
}

/// Geometry, electrodes and the space-time context shared by all
/// pipeline stages.
#[derive(Debug, Clone)]
pub struct Setup {
    pub mesh: Mesh2D,
    pub electrodes: ElectrodeSet,
    pub ctx: SpaceTimeContext,
    pub config: BenchmarkConfig,
}

impl Setup {
    pub fn new(config: &BenchmarkConfig) -> Result<Self> {
        let mesh = build_torso_mesh(&config.mesh)?;
        let electrodes = define_electrodes(&mesh, config.n_electrodes, config.electrode_coverage)?;
        let curve = extract_epicardial_curve(&mesh)?;
        let grid = TimeGrid::new(config.time_intervals, config.time_step)?;
        Ok(Self {
            mesh,
            electrodes,
            ctx: SpaceTimeContext::new(curve, grid)?,
            config: config.clone(),
        })
    }

    pub fn forward_matrix(&self) -> Result<ForwardMatrix> {
        let sigma = Conductivity::ByRegion {
            torso: self.config.sigma_torso,
            lung: self.config.sigma_lung,
        };
        assemble_forward_matrix(&build_forward_system(&self.mesh, &sigma)?, &self.electrodes)
    }

    pub fn generator(&self) -> Result<SampleGenerator> {
        let dg = DatagenConfig {
            heart_center: self.config.mesh.heart_center,
            heart_radius: self.config.mesh.heart_radius,
            fine_rim_nodes: self.config.fine_rim_nodes,
            ..DatagenConfig::default()
        };
        SampleGenerator::new(dg, &self.ctx.surface, self.ctx.grid.clone())
    }

    /// Seeds `seed·10⁴ + k` for `k < n_samples`.
    pub fn dataset_seeds(&self) -> Vec<u64> {
        let base = self.config.seed.wrapping_mul(10_000);
        (0..self.config.n_samples as u64)
            .map(|k| base + k)
            .collect()
    }

    pub fn agd(&self) -> AgdOptions {
        AgdOptions {
            max_iter: self.config.agd_max_iter,
            tol: self.config.agd_tol,
        }
    }

    fn tv(&self) -> TvOptions {
        TvOptions {
            max_iter: self.config.tv_max_iter,
            tol: self.config.tv_tol,
        }
    }

    /// Loads the dataset and checks that every sample fits the context.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = Dataset::load(&self.config.dataset)?;
        for f in ds.samples.values() {
            self.ctx.check_shape(&f.values)?;
        }
        Ok(ds)
    }

    /// `(MFoE, CMFoE)` from the configured files, or the default model.
    pub fn models(&self) -> Result<(RegularizerModel, RegularizerModel)> {
        let load = |p: &Option<std::path::PathBuf>| -> Result<RegularizerModel> {
            match p {
                Some(p) if !p.exists() => Err(Error::MissingArtifacts(format!(
                    "model {} not found",
                    p.display()
                ))),
                Some(p) => RegularizerModel::read(p),
                None => Ok(RegularizerModel::default_model()),
            }
        };
        let mfoe = load(&self.config.mfoe_model)?;
        let mut cmfoe = load(&self.config.cmfoe_model)?;
        cmfoe.convex = true;
        Ok((mfoe, cmfoe))
    }
}

/// Mixes run seed and sample seed into a noise seed. The seed does not
/// depend on the noise level, so levels differ only by scaling one
/// realization.
pub fn noise_seed(run: u64, sample: u64) -> u64 {
    let mut x =
        run.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ sample.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 31;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 29)
}

/// One grid point of a method's parameter search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    Tik {
        lambda_gamma: f64,
        lambda_t: f64,
    },
    Tv {
        lambda_gamma: f64,
        lambda_t: f64,
    },
    /// Multiplier of the model's `λ_θ`.
    Foe {
        scale: f64,
    },
}

impl Candidate {
    /// Total regularization weight, used to order the grid.
    fn weight(&self) -> f64 {
        match *self {
            Candidate::Tik {
                lambda_gamma,
                lambda_t,
            }
            | Candidate::Tv {
                lambda_gamma,
                lambda_t,
            } => lambda_gamma + lambda_t,
            Candidate::Foe { scale } => scale,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Candidate::Tik {
                lambda_gamma,
                lambda_t,
            }
            | Candidate::Tv {
                lambda_gamma,
                lambda_t,
            } => {
                format!("lambda_gamma={lambda_gamma:e} lambda_t={lambda_t:e}")
            }
            Candidate::Foe { scale } => format!("lambda_scale={scale:e}"),
        }
    }
}

/// The grid of `method`, sorted by increasing total weight so that the
/// first minimizer is the least regularized one. Denoising grids always
/// contain the identity; FoE inverse grids drop `λ_θ = 0`.
pub fn candidates(method: &str, cfg: &BenchmarkConfig, denoise: bool) -> Vec<Candidate> {
    let pairs = |gs: &[f64], ts: &[f64]| {
        let mut v: Vec<(f64, f64)> = gs
            .iter()
            .flat_map(|&g| ts.iter().map(move |&t| (g, t)))
            .collect();
        if denoise {
            v.push((0.0, 0.0));
        }
        v
    };
    let mut c: Vec<Candidate> = match method {
        "TIK" => pairs(&cfg.lambda_gamma_grid, &cfg.lambda_t_grid)
            .into_iter()
            .map(|(g, t)| Candidate::Tik {
                lambda_gamma: g,
                lambda_t: t,
            })
            .collect(),
        "TV" => pairs(&cfg.tv_lambda_gamma_grid, &cfg.tv_lambda_t_grid)
            .into_iter()
            .map(|(g, t)| Candidate::Tv {
                lambda_gamma: g,
                lambda_t: t,
            })
            .collect(),
        _ => {
            let mut s = if denoise {
                cfg.foe_scale_grid.clone()
            } else {
                cfg.foe_inverse_scale_grid.clone()
            };
            if denoise {
                s.push(0.0);
            } else {
                s.retain(|&v| v > 0.0);
            }
            s.into_iter()
                .map(|scale| Candidate::Foe { scale })
                .collect()
        }
    };
    c.sort_by(|a, b| {
        a.weight()
            .total_cmp(&b.weight())
            .then(a.describe().cmp(&b.describe()))
    });
    c.dedup();
    c
}

/// One tuned method at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// κ for denoising, SNR in dB for the inverse problem.
    pub level: f64,
    pub method: String,
    pub params: String,
    pub val_error: f64,
    pub mean_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// `"kappa"` or `"snr_db"`.
    pub level_name: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn row(&self, level: f64, method: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.level == level && r.method == method)
    }

    /// Checks that every mean is the arithmetic mean of its samples.
    pub fn check_means(&self) -> Result<()> {
        for r in &self.rows {
            let mean = r.errors.iter().sum::<f64>() / r.errors.len() as f64;
            if (mean - r.mean_error).abs() > 1e-12 * mean.abs().max(1.0) {
                return Err(Error::Format(format!(
                    "{} at {}: mean {} vs {}",
                    r.method, r.level, r.mean_error, mean
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let n = self.rows.iter().map(|r| r.errors.len()).max().unwrap_or(0);
        let mut s = format!("{},method,params,val_error,mean_error", self.level_name);
        for k in 0..n {
            let _ = write!(s, ",error_{k}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{:e},{},{},{:e},{:e}",
                r.level, r.method, r.params, r.val_error, r.mean_error
            );
            for e in &r.errors {
                let _ = write!(s, ",{e:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let head = [
            self.level_name.as_str(),
            "method",
            "mean_error",
            "val_error",
            "params",
        ];
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    format!("{}", r.level),
                    r.method.clone(),
                    format!("{:.6}", r.mean_error),
                    format!("{:.6}", r.val_error),
                    r.params.clone(),
                ]
            })
            .collect();
        let width: Vec<usize> = (0..5)
            .map(|c| {
                body.iter()
                    .map(|r| r[c].len())
                    .chain([head[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        let line = |cells: &[&str]| {
            let mut l = String::new();
            for (c, cell) in cells.iter().enumerate() {
                let _ = write!(l, "{:<w$}  ", cell, w = width[c]);
            }
            l.trim_end().to_string() + "\n"
        };
        s += &line(&head);
        for r in &body {
            s += &line(&r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.txt`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(())
    }
}

/// A clean sample with its corrupted version.
struct Pair {
    clean: DMatrix<f64>,
    noisy: DMatrix<f64>,
}

fn collect_errors(results: Vec<Result<f64>>) -> Result<Vec<f64>> {
    results.into_iter().collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Grid search on `val`, then evaluation on `test`. Ties go to the first
/// (least regularized) candidate.
fn tune_and_test(
    grid: &[Candidate],
    val: &[Pair],
    test: &[Pair],
    solve: &(dyn Fn(&Candidate, &DMatrix<f64>) -> Result<DMatrix<f64>> + Sync),
    ctx: &SpaceTimeContext,
) -> Result<(Candidate, f64, Vec<f64>)> {
    let eval = |c: &Candidate, set: &[Pair]| -> Result<Vec<f64>> {
        collect_errors(
            set.par_iter()
                .map(|p| l2_error(&solve(c, &p.noisy)?, &p.clean, ctx))
                .collect(),
        )
    };
    let scores: Vec<Result<f64>> = grid
        .par_iter()
        .map(|c| eval(c, val).map(|e| mean(&e)))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    let (i, val_error) = best.ok_or_else(|| Error::Config("empty parameter grid".into()))?;
    let errors = eval(&grid[i], test)?;
    Ok((grid[i], val_error, errors))
}

fn split_pairs(
    ds: &Dataset,
    seeds: &[u64],
    corrupt: &(dyn Fn(u64, &DMatrix<f64>) -> Result<DMatrix<f64>> + Sync),
) -> Result<Vec<Pair>> {
    seeds
        .iter()
        .map(|s| {
            let f = ds.samples.get(s).ok_or_else(|| {
                Error::MissingArtifacts(format!("sample {s} missing from dataset"))
            })?;
            Ok(Pair {
                noisy: corrupt(*s, &f.values)?,
                clean: f.values.clone(),
            })
        })
        .collect()
}

fn check_nonempty(ds: &Dataset) -> Result<()> {
    if ds.split.val.is_empty() || ds.split.test.is_empty() {
        return Err(Error::MissingArtifacts(
            "dataset needs validation and test samples".into(),
        ));
    }
    Ok(())
}

/// Denoising benchmark on an already loaded dataset.
pub fn denoise_bench(setup: &Setup, ds: &Dataset) -> Result<ResultTable> {
    check_nonempty(ds)?;
    let cfg = &setup.config;
    let ctx = &setup.ctx;
    let (mfoe, cmfoe) = setup.models()?;
    let (agd, tv) = (setup.agd(), setup.tv());
    let eig_m = model_normal_eigenvalue(&mfoe, ctx)?;
    let eig_c = model_normal_eigenvalue(&cmfoe, ctx)?;
    let mut rows = Vec::new();
    for &kappa in &cfg.kappas {
        let corrupt =
            |s: u64, u: &DMatrix<f64>| Ok(add_field_noise(u, kappa, noise_seed(cfg.seed, s)));
        let val = split_pairs(ds, &ds.split.val, &corrupt)?;
        let test = split_pairs(ds, &ds.split.test, &corrupt)?;
        let noisy_err = |set: &[Pair]| -> Result<Vec<f64>> {
            set.iter()
                .map(|p| l2_error(&p.noisy, &p.clean, ctx))
                .collect()
        };
        let noisy = noisy_err(&test)?;
        rows.push(ResultRow {
            level: kappa,
            method: "noisy".into(),
            params: "-".into(),
            val_error: mean(&noisy_err(&val)?),
            mean_error: mean(&noisy),
            errors: noisy,
        });
        for method in &cfg.methods {
            let solve = |c: &Candidate, z: &DMatrix<f64>| -> Result<DMatrix<f64>> {
                let fid = Fidelity::Denoise { z };
                match *c {
                    Candidate::Tik {
                        lambda_gamma,
                        lambda_t,
                    } => tik_solve(&fid, lambda_gamma, lambda_t, ctx),
                    Candidate::Tv {
                        lambda_gamma,
                        lambda_t,
                    } => Ok(tv_solve(&fid, lambda_gamma, lambda_t, ctx, tv)?.u),
                    Candidate::Foe { scale } => {
                        let (m, eig) = if method == "CMFoE" {
                            (&cmfoe, eig_c)
                        } else {
                            (&mfoe, eig_m)
                        };
                        let m = m.with_lambda(scale * m.lambda);
                        Ok(prox_denoise_with(z, &m, kappa, ctx, agd, Some(eig))?.0)
                    }
                }
            };
            let grid = candidates(method, cfg, true);
            let (best, val_error, errors) = tune_and_test(&grid, &val, &test, &solve, ctx)?;
            log::info!(
                "denoise κ={kappa} {method}: {} val {val_error:.5}",
                best.describe()
            );
            rows.push(ResultRow {
                level: kappa,
                method: method.clone(),
                params: best.describe(),
                val_error,
                mean_error: mean(&errors),
                errors,
            });
        }
    }
    Ok(ResultTable {
        level_name: "kappa".into(),
        rows,
    })
}

/// Loads the configured dataset and runs [`denoise_bench`].
pub fn run_denoise_bench(config: &BenchmarkConfig) -> Result<ResultTable> {
    let setup = Setup::new(config)?;
    let ds = setup.load_dataset()?;
    denoise_bench(&setup, &ds)
}

/// Inverse benchmark: observations `Ã u + noise` at every SNR.
pub fn inverse_bench(setup: &Setup, ds: &Dataset, a: &ForwardMatrix) -> Result<ResultTable> {
    check_nonempty(ds)?;
    let cfg = &setup.config;
    let ctx = &setup.ctx;
    if a.a.ncols() != ctx.n_vertices() {
        return Err(shape_mismatch(ctx.n_vertices(), a.a.ncols()));
    }
    let (mfoe, cmfoe) = setup.models()?;
    let (agd, tv) = (setup.agd(), setup.tv());
    let step = ctx.grid.step();
    let mut rows = Vec::new();
    for &snr in &cfg.snrs {
        let corrupt = |s: u64, u: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let clean = Observation::new(a.apply(u), step, NoiseMeta::NONE)?;
            Ok(add_observation_noise(&clean, snr, noise_seed(cfg.seed, s))?.values)
        };
        let val = split_pairs(ds, &ds.split.val, &corrupt)?;
        let test = split_pairs(ds, &ds.split.test, &corrupt)?;
        for method in &cfg.methods {
            let solve = |c: &Candidate, z: &DMatrix<f64>| -> Result<DMatrix<f64>> {
                let obs = Observation::new(z.clone(), step, NoiseMeta::NONE)?;
                let m = match *c {
                    Candidate::Tik {
                        lambda_gamma,
                        lambda_t,
                    } => Method::Tik {
                        lambda_gamma,
                        lambda_t,
                    },
                    Candidate::Tv {
                        lambda_gamma,
                        lambda_t,
                    } => Method::Tv {
                        lambda_gamma,
                        lambda_t,
                    },
                    Candidate::Foe { scale } => {
                        let m = if method == "CMFoE" { &cmfoe } else { &mfoe };
                        Method::Foe {
                            model: m.with_lambda(scale * m.lambda),
                            kappa: cfg.train_kappa,
                        }
                    }
                };
                if let Method::Tv {
                    lambda_gamma,
                    lambda_t,
                } = m
                {
                    return Ok(tv_solve(
                        &Fidelity::Inverse { z, a },
                        lambda_gamma,
                        lambda_t,
                        ctx,
                        tv,
                    )?
                    .u);
                }
                Ok(inverse_reconstruct(&obs, &m, a, ctx, agd)?.0)
            };
            let grid = candidates(method, cfg, false);
            let (best, val_error, errors) = tune_and_test(&grid, &val, &test, &solve, ctx)?;
            log::info!(
                "inverse {snr} dB {method}: {} val {val_error:.5}",
                best.describe()
            );
            rows.push(ResultRow {
                level: snr,
                method: method.clone(),
                params: best.describe(),
                val_error,
                mean_error: mean(&errors),
                errors,
            });
        }
    }
    Ok(ResultTable {
        level_name: "snr_db".into(),
        rows,
    })
}

/// Loads the configured dataset, assembles `Ã` and runs [`inverse_bench`].
pub fn run_inverse_bench(config: &BenchmarkConfig) -> Result<ResultTable> {
    let setup = Setup::new(config)?;
    let ds = setup.load_dataset()?;
    let a = setup.forward_matrix()?;
    inverse_bench(&setup, &ds, &a)
}

/// Noisy training pairs at the configured training noise level.
pub fn training_samples(setup: &Setup, ds: &Dataset) -> Result<Vec<TrainingSample>> {
    let cfg = &setup.config;
    let kappa = cfg.train_kappa;
    ds.split
        .train
        .iter()
        .map(|s| {
            let f = ds.samples.get(s).ok_or_else(|| {
                Error::MissingArtifacts(format!("sample {s} missing from dataset"))
            })?;
            Ok(TrainingSample {
                clean: f.values.clone(),
                noisy: add_field_noise(&f.values, kappa, noise_seed(cfg.seed, *s)),
                kappa,
            })
        })
        .collect()
}

/// SPSA training of `model0` on the training split.
pub fn train_model(setup: &Setup, ds: &Dataset, model0: &RegularizerModel) -> Result<TrainOutcome> {
    let samples = training_samples(setup, ds)?;
    let opts = SpsaOptions {
        seed: setup.config.seed,
        agd: setup.agd(),
        ..SpsaOptions::default()
    };
    spsa_train(&samples, model0, setup.config.spsa_budget, &setup.ctx, opts)
}
