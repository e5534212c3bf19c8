use ecgi::femcore::{Conductivity, SpaceTimeContext, TimeGrid};
use ecgi::forward::{
    assemble_forward_matrix, build_forward_system, ForwardMatrix, NoiseMeta, Observation,
};
use ecgi::geometry::{build_torso_mesh, define_electrodes, MeshConfig, SurfaceMesh1D};
use ecgi::regularizer::{tik_energy, Fidelity, Kernel, RegularizerModel};
use ecgi::solver::*;
use ecgi::Result;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn context(n: usize, intervals: usize, step: f64) -> SpaceTimeContext {
    let curve = SurfaceMesh1D::circle([0.0, 0.0], 1.0, n).unwrap();
    SpaceTimeContext::new(curve, TimeGrid::new(intervals, step).unwrap()).unwrap()
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

fn convex_model() -> RegularizerModel {
    let mut m = RegularizerModel::default_model();
    m.convex = true;
    m
}

fn torso(n_electrodes: usize, intervals: usize, step: f64) -> (ForwardMatrix, SpaceTimeContext) {
    let mesh = build_torso_mesh(&MeshConfig::default()).unwrap();
    let el = define_electrodes(&mesh, n_electrodes, 0.9).unwrap();
    let sys = build_forward_system(
        &mesh,
        &Conductivity::ByRegion {
            torso: 0.2,
            lung: 0.05,
        },
    )
    .unwrap();
    let a = assemble_forward_matrix(&sys, &el).unwrap();
    let ctx =
        SpaceTimeContext::new(sys.curve.clone(), TimeGrid::new(intervals, step).unwrap()).unwrap();
    (a, ctx)
}

#[test]
fn power_method_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let b = random(8, 8, &mut rng);
        let a = &b * b.transpose() + DMatrix::identity(8, 8) * 0.1;
        let exact = a.clone().symmetric_eigenvalues().max();
        let opts = PowerOptions {
            max_iter: 500,
            ..PowerOptions::default()
        };
        let est = power_method(|x| Ok(&a * x), |p, q| p.dot(q), (8, 1), opts).unwrap();
        assert!((est - exact).abs() <= 0.01 * exact);
        let scaled = power_method(|x| Ok(&a * x * 3.5), |p, q| p.dot(q), (8, 1), opts).unwrap();
        assert!((scaled - 3.5 * est).abs() <= 1e-8 * scaled);
    }
}

#[test]
fn cg_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = random(50, 50, &mut rng);
    let a = &b * b.transpose() + DMatrix::identity(50, 50);
    let rhs = random(50, 1, &mut rng);
    let exact = a.clone().lu().solve(&rhs).unwrap();
    let (x, _) = cg(|x| &a * x, &rhs, None, 1e-12, 500).unwrap();
    assert!((x - &exact).norm() <= 1e-8 * exact.norm());
}

#[test]
fn cg_reports_divergence() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(30, |i, _| {
        1.0 + i as f64 * 100.0
    }));
    let rhs = DMatrix::from_element(30, 1, 1.0);
    assert!(matches!(
        cg(|x| &a * x, &rhs, None, 1e-14, 2),
        Err(ecgi::Error::CgDivergence { .. })
    ));
}

#[test]
fn agd_solves_identity_fidelity() {
    let ctx = context(10, 5, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random(10, 6, &mut rng);
    let p = EnergyProblem::new(&ctx, DataTerm::Denoise { z: &z }, None).unwrap();
    assert_eq!(p.lipschitz, 1.0);
    let (u, r) = agd_restart(&p, 1.0, &ctx.zeros(), AgdOptions::default()).unwrap();
    assert!(r.converged && r.iterations <= 200);
    assert!((u - z).norm() <= 1e-8);
}

#[test]
fn agd_matches_long_gradient_descent_on_convex_denoising() {
    let ctx = context(12, 7, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = random(12, 8, &mut rng);
    let model = convex_model().at_noise_level(0.3);
    let p = EnergyProblem::new(&ctx, DataTerm::Denoise { z: &z }, Some(&model)).unwrap();
    let opts = AgdOptions {
        max_iter: 5000,
        tol: 1e-9,
    };
    let (_, report) = agd_restart(&p, p.lipschitz, &z, opts).unwrap();
    assert!(report.converged);
    let mut u = z.clone();
    for _ in 0..10 * report.iterations.max(100) {
        let (_, g) = p.value_grad(&u).unwrap();
        u -= g / p.lipschitz;
    }
    let slow = p.value(&u).unwrap();
    assert!((report.final_objective - slow).abs() <= 1e-6 * slow.abs());
}

/// Sum of 1D double wells `(x² − 1)²/4` with a weak coupling.
struct DoubleWell;

impl Objective for DoubleWell {
    fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        Ok(u.iter().map(|x| 0.25 * (x * x - 1.0).powi(2)).sum::<f64>() + 0.05 * u.sum().powi(2))
    }
    fn value_grad(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let s = u.sum();
        Ok((self.value(u)?, u.map(|x| x * (x * x - 1.0) + 0.1 * s)))
    }
    fn norm(&self, g: &DMatrix<f64>) -> f64 {
        g.norm()
    }
}

#[test]
fn restart_trace_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = random(20, 1, &mut rng) * 1.4;
    let (_, r) = agd_restart(&DoubleWell, 12.0, &u0, AgdOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.restarts > 0, "the test needs at least one restart");
    assert_eq!(r.restarts, r.restart_trace.iter().filter(|&&x| x).count());
    let mut tau = 1.0f64;
    for (n, &reset) in r.restart_trace.iter().enumerate() {
        let expected = if reset {
            1.0
        } else {
            (1.0 + (1.0 + 4.0 * tau * tau).sqrt()) / 2.0
        };
        assert_eq!(r.momentum_trace[n].to_bits(), expected.to_bits());
        tau = expected;
        if reset && n + 1 < r.objective_trace.len() {
            assert!(r.objective_trace[n + 1] <= r.objective_trace[n] + 1e-12);
        }
    }
    let text = r.to_text();
    assert_eq!(text.lines().count(), 2 + r.objective_trace.len());
}

#[test]
fn lipschitz_bound_holds_on_random_pairs() {
    let (a, ctx) = torso(16, 7, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = RegularizerModel::default_model().at_noise_level(0.5);
    let zd = random(ctx.n_vertices(), 8, &mut rng);
    let zi = random(16, 8, &mut rng);
    for data in [
        DataTerm::Denoise { z: &zd },
        DataTerm::Inverse { z: &zi, a: &a },
    ] {
        let p = EnergyProblem::new(&ctx, data, Some(&model)).unwrap();
        for _ in 0..100 {
            let scale = 10f64.powf(rng.random::<f64>() * 2.0 - 1.0);
            let u1 = random(ctx.n_vertices(), 8, &mut rng) * scale;
            let u2 = &u1 + random(ctx.n_vertices(), 8, &mut rng) * (scale * rng.random::<f64>());
            let (_, g1) = p.value_grad(&u1).unwrap();
            let (_, g2) = p.value_grad(&u2).unwrap();
            let ratio = ctx.norm(&(g1 - g2)) / ctx.norm(&(&u1 - &u2));
            assert!(
                ratio <= p.lipschitz * (1.0 + 1e-6),
                "{ratio} > {}",
                p.lipschitz
            );
        }
    }
}

#[test]
fn prox_with_zero_weight_is_identity() {
    let ctx = context(12, 7, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = random(12, 8, &mut rng);
    let model = RegularizerModel::default_model().with_lambda(0.0);
    let (u, _) = prox_denoise(&z, &model, 0.2, &ctx, AgdOptions::default()).unwrap();
    assert_eq!(u, z);
}

#[test]
fn convex_prox_is_nonexpansive() {
    let ctx = context(12, 7, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = convex_model();
    let opts = AgdOptions {
        max_iter: 5000,
        tol: 1e-11,
    };
    for _ in 0..20 {
        let z1 = random(12, 8, &mut rng);
        let z2 = random(12, 8, &mut rng);
        let (p1, _) = prox_denoise(&z1, &model, 0.3, &ctx, opts).unwrap();
        let (p2, _) = prox_denoise(&z2, &model, 0.3, &ctx, opts).unwrap();
        assert!(ctx.norm(&(p1 - p2)) <= ctx.norm(&(z1 - z2)) + 1e-8);
    }
}

#[test]
fn prox_output_is_a_fixed_point() {
    let ctx = context(12, 7, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = random(12, 8, &mut rng);
    let model = RegularizerModel::default_model();
    let opts = AgdOptions::default();
    let (u, r) = prox_denoise(&z, &model, 0.2, &ctx, opts).unwrap();
    assert!(r.converged);
    let scaled = model.at_noise_level(0.2);
    let p = EnergyProblem::new(&ctx, DataTerm::Denoise { z: &z }, Some(&scaled)).unwrap();
    let (again, r2) = agd_restart(&p, p.lipschitz, &u, opts).unwrap();
    assert_eq!(r2.iterations, 0);
    assert!(ctx.norm(&(again - &u)) <= opts.tol * ctx.norm(&u));
}

#[test]
fn small_noise_level_barely_changes_clean_field() {
    let ctx = context(16, 11, 0.1);
    let clean = DMatrix::from_fn(16, 12, |j, m| {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
        th.cos() * (0.3 * m as f64).sin()
    });
    let (u, _) = prox_denoise(
        &clean,
        &RegularizerModel::default_model(),
        1e-3,
        &ctx,
        AgdOptions::default(),
    )
    .unwrap();
    assert!(ctx.norm(&(u - &clean)) <= 0.02 * ctx.norm(&clean));
}

fn ground_truth(ctx: &SpaceTimeContext) -> DMatrix<f64> {
    DMatrix::from_fn(ctx.n_vertices(), ctx.n_times(), |j, m| {
        let [x, y] = ctx.surface.points[j];
        let t = ctx.grid.node(m);
        (x + 0.5) * (2.0 * t).sin() + 0.3 * y * (3.0 * t).cos()
    })
}

#[test]
fn noise_free_reconstruction_beats_zero_field() {
    let (a, ctx) = torso(64, 7, 0.2);
    let gt = ground_truth(&ctx);
    let z = Observation::new(a.apply(&gt), 0.2, NoiseMeta::NONE).unwrap();
    let method = Method::Foe {
        model: RegularizerModel::default_model().with_lambda(1e-3),
        kappa: 0.1,
    };
    let (u, _) = inverse_reconstruct(&z, &method, &a, &ctx, AgdOptions::inverse()).unwrap();
    assert!(ctx.norm(&(u - &gt)) < ctx.norm(&gt));
}

#[test]
fn reconstruction_shrinks_with_weight() {
    let (a, ctx) = torso(16, 5, 0.2);
    let gt = ground_truth(&ctx);
    let z = Observation::new(a.apply(&gt), 0.2, NoiseMeta::NONE).unwrap();
    let mut prev = f64::INFINITY;
    for lambda in [0.01, 0.1, 1.0, 10.0] {
        let method = Method::Foe {
            model: convex_model().with_lambda(lambda),
            kappa: 0.1,
        };
        let (u, _) = inverse_reconstruct(&z, &method, &a, &ctx, AgdOptions::inverse()).unwrap();
        let n = ctx.norm(&u);
        assert!(n < prev, "{n} >= {prev} at lambda {lambda}");
        prev = n;
    }
}

/// Dense normal equations for a single-expert model with `Q = 0`, a zero
/// temporal kernel and responses inside the quadratic zone of `φ`.
#[test]
fn quadratic_regime_matches_dense_normal_equations() {
    let (a, ctx) = torso(16, 1, 0.25);
    let (nv, nt) = (ctx.n_vertices(), ctx.n_times());
    let mut model = RegularizerModel::default_model();
    model.experts.truncate(1);
    model.experts[0].mu = 1e3;
    model.experts[0].q = [[0.0; 4]; 4];
    model.experts[0].kernel = Kernel::Nodal(vec![0.0; 3]);
    model.lambda = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let zv = random(16, nt, &mut rng) * 0.1;
    let z = Observation::new(zv.clone(), 0.25, NoiseMeta::NONE).unwrap();
    let opts = AgdOptions {
        max_iter: 200_000,
        tol: 1e-12,
    };
    let method = Method::Foe {
        model: model.clone(),
        kappa: 1.0,
    };
    let (u, _) = inverse_reconstruct(&z, &method, &a, &ctx, opts).unwrap();

    // independent dense assembly on the curve
    let pts = &ctx.surface.points;
    let mut mc = DMatrix::zeros(nv, nv);
    let mut ml = DMatrix::zeros(nv, nv);
    let mut b = DMatrix::zeros(nv, nv);
    let mut g = [DMatrix::zeros(nv, nv), DMatrix::zeros(nv, nv)];
    for j in 0..nv {
        let jn = (j + 1) % nv;
        let d = [pts[jn][0] - pts[j][0], pts[jn][1] - pts[j][1]];
        let len = d[0].hypot(d[1]);
        for (p, q, w) in [(j, j, 2.0), (jn, jn, 2.0), (j, jn, 1.0), (jn, j, 1.0)] {
            mc[(p, q)] += w * len / 6.0;
        }
        ml[(j, j)] += len / 2.0;
        ml[(jn, jn)] += len / 2.0;
        b[(j, j)] += len / 2.0;
        b[(jn, j)] += len / 2.0;
        for c in 0..2 {
            g[c][(j, j)] -= d[c] / (len * len);
            g[c][(j, jn)] += d[c] / (len * len);
        }
    }
    let proj = mc.clone().lu().solve(&b).unwrap();
    let e = model.eps_theta;
    let c = 1.0 + model.eps_omega / model.experts[0].mu;
    let mut spatial = DMatrix::identity(nv, nv) * (e * e);
    spatial = ml.clone() * spatial;
    for gk in &g {
        let l = &proj * gk;
        spatial += l.transpose() * &ml * &l;
    }
    let dt = 0.25;
    let d = DMatrix::from_row_slice(2, 2, &[dt / 3.0, dt / 6.0, dt / 6.0, dt / 3.0]);
    let dl = DMatrix::from_row_slice(2, 2, &[dt / 2.0, 0.0, 0.0, dt / 2.0]);
    let n = 16.0;
    let ata = a.a.transpose() * &a.a;
    let h = d.kronecker(&ata) / n + dl.kronecker(&spatial) * (model.lambda * c);
    let rhs =
        d.kronecker(&a.a.transpose()) * DMatrix::from_column_slice(16 * nt, 1, zv.as_slice()) / n;
    let x = h.lu().solve(&rhs).unwrap();
    let oracle = DMatrix::from_column_slice(nv, nt, x.as_slice());
    assert!(
        (&u - &oracle).norm() <= 1e-6 * oracle.norm(),
        "{:e}",
        (&u - &oracle).norm() / oracle.norm()
    );
    // responses stayed in the quadratic zone
    assert!(u.amax() * 10.0 < model.experts[0].mu);
}

#[test]
fn baselines_through_the_inverse_driver() {
    let (a, ctx) = torso(32, 5, 0.2);
    let gt = ground_truth(&ctx);
    let z = Observation::new(a.apply(&gt), 0.2, NoiseMeta::NONE).unwrap();
    let tik = Method::Tik {
        lambda_gamma: 0.05,
        lambda_t: 0.05,
    };
    let (u, _) = inverse_reconstruct(&z, &tik, &a, &ctx, AgdOptions::inverse()).unwrap();
    let fid = Fidelity::Inverse {
        z: &z.values,
        a: &a,
    };
    let e0 = tik_energy(&fid, 0.05, 0.05, &u, &ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let v = &u + random(ctx.n_vertices(), ctx.n_times(), &mut rng) * 1e-3;
        assert!(tik_energy(&fid, 0.05, 0.05, &v, &ctx) >= e0);
    }
    assert!(ctx.norm(&(u - &gt)) < ctx.norm(&gt));
    let tv = Method::Tv {
        lambda_gamma: 0.01,
        lambda_t: 0.01,
    };
    let (u, _) = inverse_reconstruct(&z, &tv, &a, &ctx, AgdOptions::inverse()).unwrap();
    assert!(ctx.norm(&(u - &gt)) < ctx.norm(&gt));
    let wrong_step = Observation::new(z.values.clone(), 0.3, NoiseMeta::NONE).unwrap();
    assert!(inverse_reconstruct(&wrong_step, &tik, &a, &ctx, AgdOptions::inverse()).is_err());
}

fn training_set(ctx: &SpaceTimeContext) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    (0..4)
        .map(|s| {
            let clean = DMatrix::from_fn(ctx.n_vertices(), ctx.n_times(), |j, m| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / ctx.n_vertices() as f64;
                ((s + 1) as f64 * th).cos() * (0.4 * m as f64 + s as f64).sin()
            });
            let kappa = 0.1 * (1 + s % 2) as f64;
            let noisy = &clean
                + DMatrix::from_fn(clean.nrows(), clean.ncols(), |_, _| {
                    kappa * rng.sample(normal)
                });
            TrainingSample {
                clean,
                noisy,
                kappa,
            }
        })
        .collect()
}

#[test]
fn spsa_budget_zero_returns_initial_model() {
    let ctx = context(12, 7, 0.1);
    let model = RegularizerModel::default_model();
    let out = spsa_train(&training_set(&ctx), &model, 0, &ctx, SpsaOptions::default()).unwrap();
    assert_eq!(out.model, model);
    assert!(out.loss_trace.is_empty());
}

#[test]
fn spsa_zero_perturbation_is_a_no_op() {
    let ctx = context(12, 7, 0.1);
    let model = RegularizerModel::default_model();
    let opts = SpsaOptions {
        c: 0.0,
        ..SpsaOptions::default()
    };
    let out = spsa_train(&training_set(&ctx), &model, 3, &ctx, opts).unwrap();
    assert_eq!(out.model, model);
    assert!(out
        .loss_trace
        .iter()
        .all(|&l| (l - out.initial_loss).abs() <= 1e-12 * l));
}

#[test]
fn spsa_does_not_increase_the_loss() {
    let ctx = context(12, 7, 0.1);
    let samples = training_set(&ctx);
    let model = RegularizerModel::default_model();
    let out = spsa_train(&samples, &model, 200, &ctx, SpsaOptions::default()).unwrap();
    assert_eq!(out.loss_trace.len(), 200);
    assert!(out.best_loss <= out.initial_loss);
    let check = training_loss(&samples, &out.model, &ctx, SpsaOptions::default().agd).unwrap();
    assert!((check - out.best_loss).abs() <= 1e-12 * check);
}
