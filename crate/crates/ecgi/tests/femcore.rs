use ecgi::femcore::*;
use ecgi::geometry::{build_torso_mesh, MeshConfig, SurfaceMesh1D};
use ecgi::sparse::SparseCholesky;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn gauss(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    GAUSS5.iter().map(|&(x, w)| w * r * f(m + r * x)).sum()
}

fn hat(center: f64, lo: f64, hi: f64, x: f64) -> f64 {
    if x < lo || x > hi {
        0.0
    } else {
        (1.0 - (x - center).abs()).max(0.0)
    }
}

#[test]
fn temporal_mass_equals_quadrature() {
    let g = TimeGrid::new(6, 0.37).unwrap();
    let d = assemble_temporal_mass(&g).to_dense();
    let t_end = g.end_time();
    for i in 0..7 {
        for j in 0..7 {
            let ti = |t: f64| hat(g.node(i) / 0.37, 0.0, t_end / 0.37, t / 0.37);
            let tj = |t: f64| hat(g.node(j) / 0.37, 0.0, t_end / 0.37, t / 0.37);
            let q: f64 = (0..6)
                .map(|k| gauss(g.node(k), g.node(k + 1), |t| ti(t) * tj(t)))
                .sum();
            assert!(
                (d[(i, j)] - q).abs() < 1e-14,
                "({i},{j}) {} vs {q}",
                d[(i, j)]
            );
        }
    }
}

#[test]
fn temporal_mass_is_spd() {
    let g = TimeGrid::new(9, 0.2).unwrap();
    let d = assemble_temporal_mass(&g);
    assert_eq!(d.asymmetry(), 0.0);
    SparseCholesky::factor(&d).unwrap();
}

#[test]
fn cross_correlation_matches_quadrature_for_every_shift() {
    let (nt, nw, step) = (10usize, 2usize, 0.5);
    let g = TimeGrid::new(nt, step).unwrap();
    for s in 0..=nt {
        let d = cross_correlation_matrix(&g, nw, s);
        for i in 0..=2 * nw {
            for j in 0..=nt {
                let ci = i as f64 - nw as f64;
                let cj = j as f64 - s as f64;
                let f = |x: f64| {
                    hat(ci, -(nw as f64), nw as f64, x) * hat(cj, -(s as f64), (nt - s) as f64, x)
                };
                let q: f64 = step
                    * (-(nw as i64)..nw as i64)
                        .map(|m| gauss(m as f64, m as f64 + 1.0, &f))
                        .sum::<f64>();
                assert!(
                    (d[(i, j)] - q).abs() <= 1e-14,
                    "s={s} ({i},{j}) {} vs {q}",
                    d[(i, j)]
                );
            }
        }
    }
}

#[test]
fn cross_correlation_reference_entries() {
    let g = TimeGrid::new(10, 0.3).unwrap();
    let d0 = cross_correlation_matrix(&g, 2, 0);
    assert!((d0[(2, 0)] - 2.0 * 0.3 / 6.0).abs() < 1e-15);
    // centered kernel hat against a full interior data hat
    let d5 = cross_correlation_matrix(&g, 2, 5);
    assert!((d5[(2, 5)] - 4.0 * 0.3 / 6.0).abs() < 1e-15);
    assert!((d5[(2, 6)] - 0.3 / 6.0).abs() < 1e-15);
    // kernel end hats are half hats
    assert!((d5[(0, 3)] - 2.0 * 0.3 / 6.0).abs() < 1e-15);
}

#[test]
fn constant_kernel_on_constant_signal() {
    let (nt, step) = (12usize, 0.25);
    let g = TimeGrid::new(nt, step).unwrap();
    let u = DMatrix::from_element(3, nt + 1, 1.0);
    let out = apply_temporal_kernel(&u, &[1.0; 5], &g).unwrap();
    for s in 0..=nt {
        let v = out[(1, s)];
        if (2..=nt - 2).contains(&s) {
            assert!((v - 4.0 * step).abs() < 1e-14);
        } else {
            assert!(v < 4.0 * step - 1e-3);
        }
    }
    let zero = apply_temporal_kernel(&u, &[0.0; 5], &g).unwrap();
    assert_eq!(zero.amax(), 0.0);
}

#[test]
fn temporal_kernel_is_linear() {
    let g = TimeGrid::new(8, 0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = DMatrix::from_fn(4, 9, |_, _| rng.random::<f64>() - 0.5);
    let v = DMatrix::from_fn(4, 9, |_, _| rng.random::<f64>() - 0.5);
    let k: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
    let lhs = apply_temporal_kernel(&(&u * 2.0 - &v * 3.0), &k, &g).unwrap();
    let rhs = apply_temporal_kernel(&u, &k, &g).unwrap() * 2.0
        - apply_temporal_kernel(&v, &k, &g).unwrap() * 3.0;
    assert!((lhs - rhs).amax() < 1e-12);
}

fn pl(k: &[f64], x: f64) -> f64 {
    let w = (k.len() / 2) as f64;
    if x < -w || x > w {
        return 0.0;
    }
    let y = x + w;
    let i = (y.floor() as usize).min(k.len() - 2);
    let f = y - i as f64;
    (1.0 - f) * k[i] + f * k[i + 1]
}

#[test]
fn composed_kernel_matches_brute_force_double_integral() {
    let k1 = [0.3, -1.0, 2.0, 0.5, -0.2];
    let k2 = [1.0, 0.0, -0.5, 1.5, 0.7];
    let k3 = [-0.4, 0.9, 0.1, 0.2, 1.1];
    let step = 0.5;
    let got = compose_kernels(&k1, &k2, &k3, step);
    assert_eq!(got.len(), 13);
    // composite Gauss in s on a grid aligned with the integer kinks
    let n = 40;
    let hgrid = 4.0 / n as f64;
    for (idx, m) in (-6..=6).enumerate() {
        let t = m as f64;
        let mut acc = 0.0;
        for a in 0..n {
            let s0 = -2.0 + a as f64 * hgrid;
            acc += gauss(s0, s0 + hgrid, |s| {
                // split τ where either factor has a kink or jump
                let mut br: Vec<f64> = (-2..=2).map(f64::from).collect();
                for m in -12..=12 {
                    let x = m as f64 - s - t;
                    if x > -2.0 && x < 2.0 {
                        br.push(x);
                    }
                }
                br.sort_by(f64::total_cmp);
                let inner: f64 = br
                    .windows(2)
                    .map(|w| gauss(w[0], w[1], |tau| pl(&k2, tau) * pl(&k1, tau + s + t)))
                    .sum();
                pl(&k3, s) * inner
            });
        }
        acc *= step * step;
        assert!(
            (got[idx] - acc).abs() < 1e-12,
            "m={m}: {} vs {acc}",
            got[idx]
        );
    }
}

#[test]
fn composed_kernel_support_and_linearity() {
    let k = [1.0, 1.0, 1.0, 1.0, 1.0];
    let c = compose_kernels(&k, &k, &k, 1.0);
    assert!(c[0].abs() < 1e-12 && c[12].abs() < 1e-12);
    assert!(c[1] > 0.0 && c[11] > 0.0);
    let z = compose_kernels(&[0.0; 5], &k, &k, 1.0);
    assert!(z.iter().all(|v| *v == 0.0));
    let k1 = [0.2, -0.3, 0.5, 0.1, 0.9];
    let a = compose_kernels(&k1.map(|v| 2.5 * v), &k, &k1, 0.7);
    let b = compose_kernels(&k1, &k, &k1, 0.7);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - 2.5 * y).abs() < 1e-12);
    }
}

#[test]
fn interpolation_of_cubic_converges_quadratically() {
    let f = |t: f64| t * t * t - 2.0 * t * t + 0.5;
    let err = |nt: usize| {
        let step = 2.0 / nt as f64;
        let mut e2 = 0.0;
        for k in 0..nt {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            e2 += gauss(a, b, |t| {
                let lin = f(a) + (f(b) - f(a)) * (t - a) / step;
                (f(t) - lin).powi(2)
            });
        }
        e2.sqrt()
    };
    let ratio = err(20) / err(40);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

fn curve() -> SurfaceMesh1D {
    let m = build_torso_mesh(&MeshConfig::default()).unwrap();
    ecgi::geometry::extract_epicardial_curve(&m).unwrap()
}

#[test]
fn spatial_mass_partition_of_unity() {
    let c = curve();
    let (m, lump) = assemble_spatial_mass(&c);
    let total: f64 = m.row_sums().iter().sum();
    assert!((total - c.perimeter()).abs() < 1e-12);
    assert!((lump.iter().sum::<f64>() - c.perimeter()).abs() < 1e-12);
    SparseCholesky::factor(&m).unwrap();
}

#[test]
fn arclength_has_unit_gradient() {
    let c = curve();
    let n = c.len();
    let mut s = vec![0.0; n];
    for k in 1..n {
        s[k] = s[k - 1] + c.segment_lengths[k - 1];
    }
    let g = assemble_surface_gradient(&c);
    let u = DMatrix::from_column_slice(n, 1, &s);
    let gf = g.apply(&u);
    for k in 0..n - 1 {
        let norm = (gf.values[(k, 0)].powi(2) + gf.values[(n + k, 0)].powi(2)).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gradient_norm_matches_segment_quadrature() {
    let c = curve();
    let n = c.len();
    let g = TimeGrid::new(5, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = DMatrix::from_fn(n, 6, |_, _| rng.random::<f64>());
    let grad = assemble_surface_gradient(&c).apply(&u);
    // matrix form: Σ_J |J| g_J(t)ᵀ D g_J(t)
    let d = assemble_temporal_mass(&g).to_dense();
    let mut matrix_form = 0.0;
    for comp in 0..2 {
        let gc = grad.component(comp);
        for k in 0..n {
            let row = gc.row(k).transpose();
            matrix_form += c.segment_lengths[k] * (row.transpose() * &d * &row)[(0, 0)];
        }
    }
    // oracle: explicit slopes, time quadrature of the affine interpolant
    let mut oracle = 0.0;
    for k in 0..n {
        let (a, b) = c.segment(k);
        for step in 0..5 {
            let slope = |col: usize| (u[(b, col)] - u[(a, col)]) / c.segment_lengths[k];
            let (s0, s1) = (slope(step), slope(step + 1));
            oracle +=
                c.segment_lengths[k] * gauss(0.0, 0.3, |t| (s0 + (s1 - s0) * t / 0.3).powi(2));
        }
    }
    assert!((matrix_form - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn l2_projection_properties() {
    let c = curve();
    let n = c.len();
    let proj = L2Projection::new(&c).unwrap();
    let constant = proj.project(&DMatrix::from_element(n, 2, -1.75)).unwrap();
    assert!(constant.iter().all(|v| (v + 1.75).abs() < 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
    let pt = proj.project(&p).unwrap();
    // Galerkin orthogonality
    let resid = proj.load.mul_dense(&p) - proj.mass().mul_dense(&pt);
    assert!(resid.amax() < 1e-12);
    // idempotence on P1 data whose load is computed exactly
    let again = proj.mass_solve(&proj.mass().mul_dense(&pt));
    assert!((again - &pt).amax() < 1e-10);
    // adjointness: ⟨P p, q⟩_M = Σ_J |J| p_J mean_J(q)
    let q = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
    let lhs = (proj.mass().mul_dense(&pt)).dot(&q);
    let mut rhs = 0.0;
    for col in 0..3 {
        for k in 0..n {
            let (a, b) = c.segment(k);
            rhs += c.segment_lengths[k] * p[(k, col)] * 0.5 * (q[(a, col)] + q[(b, col)]);
        }
    }
    assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
}

#[test]
fn stiffness_kernel_is_constants() {
    let m = build_torso_mesh(&MeshConfig::default()).unwrap();
    let sigma = Conductivity::ByRegion {
        torso: 0.2,
        lung: 0.05,
    };
    let k = assemble_stiffness(&m, &sigma).unwrap();
    let ones = vec![1.0; m.vertices.len()];
    let r = k.mul_vec(&ones);
    let scale = k.diagonal().iter().cloned().fold(0.0, f64::max);
    assert!(r.iter().all(|v| v.abs() < 1e-12 * scale));
    assert!(k.asymmetry() < 1e-14 * scale);
    // K + 11ᵀ/n is positive definite iff the kernel is exactly the constants
    let n = m.vertices.len() as f64;
    let mut kd = k.to_dense();
    kd.add_scalar_mut(scale / n);
    assert!(kd.cholesky().is_some());
    let k2 = assemble_stiffness(&m, &sigma.scaled(3.0)).unwrap();
    for ((_, _, a), (_, _, b)) in k.triplets().iter().zip(k2.triplets()) {
        assert!((3.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
}

#[test]
fn space_time_inner_product_and_riesz_map() {
    let c = curve();
    let ctx = SpaceTimeContext::new(c, TimeGrid::new(7, 0.5).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = DMatrix::from_fn(ctx.n_vertices(), 8, |_, _| rng.random::<f64>() - 0.5);
    let v = DMatrix::from_fn(ctx.n_vertices(), 8, |_, _| rng.random::<f64>() - 0.5);
    assert!((ctx.inner(&u, &v) - ctx.inner(&v, &u)).abs() < 1e-12);
    assert!(ctx.norm(&u) > 0.0);
    let back = ctx.riesz(&ctx.apply_weight(&u));
    assert!((back - &u).amax() < 1e-12);
}
