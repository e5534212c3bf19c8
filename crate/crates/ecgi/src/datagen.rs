//! Synthetic epicardial potentials from a monodomain reaction–diffusion
//! model on a fine heart disk.
//!
//! Units follow the cardiac convention: cm, ms, mV, μF/cm², μA/cm² and
//! mS/cm. Conductivities are specified in S/m and multiplied by 10.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::femcore::{
    assemble_mass_2d, assemble_stiffness, Conductivity, SpaceTimeField, Tensor2, TimeGrid,
};
use crate::forward::{NoiseKind, NoiseMeta, Observation};
use crate::geometry::{build_disk_mesh, Disk, Mesh2D, Point, SurfaceMesh1D};
use crate::sparse::{CsrMatrix, SparseCholesky};

/// S/m to mS/cm.
const SIEMENS_PER_METRE: f64 = 10.0;

/// Nagumo-type cubic ionic current without repolarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonicModel {
    pub v_rest: f64,
    pub v_dep: f64,
    pub v_th: f64,
    pub g_max: f64,
}

impl Default for IonicModel {
    fn default() -> Self {
        Self {
            v_rest: -85.0,
            v_dep: 30.0,
            v_th: -55.0,
            g_max: 1.4e-3,
        }
    }
}

impl IonicModel {
    pub fn current(&self, v: f64) -> f64 {
        self.g_max * (v - self.v_rest) * (v - self.v_th) * (v - self.v_dep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membrane {
    /// Capacitance, μF/cm².
    pub cm: f64,
    /// Surface-to-volume ratio, 1/cm.
    pub beta: f64,
}

impl Default for Membrane {
    fn default() -> Self {
        Self {
            cm: 1.0,
            beta: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    /// Amplitude, μA/cm².
    pub i_max: f64,
    /// Duration, ms.
    pub duration: f64,
    pub region: Disk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scar {
    pub region: Disk,
    /// Multiplier applied to `G_m` inside the region.
    pub factor: f64,
}

/// Parameters of the conductivity construction; `sigma_il` in S/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tissue {
    pub sigma_il: f64,
    pub lambda_lt: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Tissue {
    /// `(σ_il, σ_it, σ_el, σ_et)`.
    pub fn conductivities(&self) -> Result<[f64; 4]> {
        let Tissue {
            sigma_il,
            lambda_lt,
            alpha,
            eps,
        } = *self;
        if !(sigma_il > 0.0 && lambda_lt > 0.0 && alpha > 0.0 && eps > 0.0 && eps < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "tissue parameters need σ_il, λ_LT, α > 0 and 0 < ε < 1, got {self:?}"
            )));
        }
        let sigma_it =
            sigma_il / (lambda_lt * lambda_lt) * ((1.0 + alpha * (1.0 - eps)) / (1.0 + alpha));
        Ok([
            sigma_il,
            sigma_it,
            sigma_il / alpha,
            sigma_it / (alpha * (1.0 - eps)),
        ])
    }
}

fn rank_one(t: f64, l: f64, fiber: [f64; 2]) -> Tensor2 {
    let d = l - t;
    [
        [t + d * fiber[0] * fiber[0], d * fiber[0] * fiber[1]],
        [d * fiber[1] * fiber[0], t + d * fiber[1] * fiber[1]],
    ]
}

fn mat_mul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    [0, 1].map(|i| [0, 1].map(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

fn mat_inv(a: &Tensor2) -> Tensor2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ]
}

/// `G_m = G_i (G_i + G_e)⁻¹ G_e`, symmetrized.
pub fn monodomain_tensor(gi: &Tensor2, ge: &Tensor2) -> Tensor2 {
    let sum = [0, 1].map(|i| [0, 1].map(|j| gi[i][j] + ge[i][j]));
    let g = mat_mul(&mat_mul(gi, &mat_inv(&sum)), ge);
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

/// Intra-, extracellular and monodomain tensors (S/m) for a unit fiber
/// direction.
pub fn conductivity_tensors(
    tissue: &Tissue,
    fiber: [f64; 2],
) -> Result<(Tensor2, Tensor2, Tensor2)> {
    let [il, it, el, et] = tissue.conductivities()?;
    let n = fiber[0].hypot(fiber[1]);
    if !((n - 1.0).abs() < 1e-12) {
        return Err(Error::ParameterOutOfRange(format!(
            "fiber direction must be a unit vector, norm {n}"
        )));
    }
    let gi = rank_one(it, il, fiber);
    let ge = rank_one(et, el, fiber);
    Ok((gi, ge, monodomain_tensor(&gi, &ge)))
}

/// A fine heart disk with element-wise tensors and electrophysiology
/// parameters. Tensors are stored in mS/cm.
#[derive(Debug, Clone)]
pub struct HeartModel {
    pub mesh: Mesh2D,
    pub gi: Vec<Tensor2>,
    pub ge: Vec<Tensor2>,
    pub gm: Vec<Tensor2>,
    pub ionic: IonicModel,
    pub membrane: Membrane,
    pub stimulus: Stimulus,
    pub scars: Vec<Scar>,
}

impl HeartModel {
    /// Circumferential fibers around the disk centre, blended linearly to
    /// the isotropic transverse tensor within `taper` of the centre.
    pub fn new(
        mesh: Mesh2D,
        tissue: &Tissue,
        ionic: IonicModel,
        membrane: Membrane,
        stimulus: Stimulus,
        scars: Vec<Scar>,
        taper: f64,
    ) -> Result<Self> {
        let [_, it, _, et] = tissue.conductivities()?;
        let c = mesh.heart_center;
        let nt = mesh.triangles.len();
        let (mut gi, mut ge, mut gm) = (
            Vec::with_capacity(nt),
            Vec::with_capacity(nt),
            Vec::with_capacity(nt),
        );
        for t in 0..nt {
            let p = mesh.centroid(t);
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let r = dx.hypot(dy);
            let fiber = if r > 0.0 {
                [-dy / r, dx / r]
            } else {
                [1.0, 0.0]
            };
            let (ai, ae, _) = conductivity_tensors(tissue, fiber)?;
            let w = if taper > 0.0 {
                (r / taper).min(1.0)
            } else {
                1.0
            };
            let blend = |a: Tensor2, s: f64| {
                [0, 1].map(|i| {
                    [0, 1].map(|j| {
                        SIEMENS_PER_METRE * (w * a[i][j] + (1.0 - w) * if i == j { s } else { 0.0 })
                    })
                })
            };
            let (bi, be) = (blend(ai, it), blend(ae, et));
            let mut m = monodomain_tensor(&bi, &be);
            for s in &scars {
                if s.region.contains(p) {
                    m = m.map(|row| row.map(|v| v * s.factor));
                }
            }
            gi.push(bi);
            ge.push(be);
            gm.push(m);
        }
        Ok(Self {
            mesh,
            gi,
            ge,
            gm,
            ionic,
            membrane,
            stimulus,
            scars,
        })
    }
}

/// Output of [`simulate_monodomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Nodal `v` (mV) at steps `0, n_sample, 2 n_sample, ...`.
    pub transmembrane: DMatrix<f64>,
    /// First time (ms) each node crosses `V_th`, linearly interpolated.
    pub activation: Vec<Option<f64>>,
    pub dt: f64,
    pub sample_every: usize,
    /// Largest one-step drop of a nodal value starting at or below `V_dep`,
    /// mV; relaxation of stimulus overshoot above `V_dep` is excluded.
    pub max_decrease: f64,
}

impl SimulationResult {
    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..self.transmembrane.ncols())
            .map(|k| (k * self.sample_every) as f64 * self.dt)
            .collect()
    }
}

/// Semi-implicit time stepping
/// `(C_m M + Δt/β K_m) v⁺ = M (C_m v − Δt (I_ion(v) − I_stim))`,
/// starting from rest, with the left-hand matrix factorized once. The
/// explicit reaction part is limited so it never steps past `V_dep`.
pub fn simulate_monodomain(
    model: &HeartModel,
    dt: f64,
    steps: usize,
    sample_every: usize,
) -> Result<SimulationResult> {
    if !(dt > 0.0) || sample_every == 0 {
        return Err(Error::ParameterOutOfRange(format!(
            "need Δt > 0 and n_sample >= 1, got {dt} and {sample_every}"
        )));
    }
    let mesh = &model.mesh;
    let n = mesh.vertices.len();
    let mass = assemble_mass_2d(mesh);
    let km = assemble_stiffness(mesh, &Conductivity::PerElement(model.gm.clone()))?;
    let cm = model.membrane.cm;
    let lhs = mass.scaled(cm).add_scaled(dt / model.membrane.beta, &km);
    let chol = SparseCholesky::factor(&lhs)?;
    let stim: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|&p| {
            if model.stimulus.region.contains(p) {
                model.stimulus.i_max
            } else {
                0.0
            }
        })
        .collect();
    let ion = model.ionic;
    let mut v = vec![ion.v_rest; n];
    let n_snap = steps / sample_every + 1;
    let mut snaps = DMatrix::zeros(n, n_snap);
    snaps.column_mut(0).copy_from_slice(&v);
    let mut activation: Vec<Option<f64>> = vec![None; n];
    let mut max_decrease: f64 = 0.0;
    let mut src = vec![0.0; n];
    for step in 0..steps {
        let t = step as f64 * dt;
        let on = t < model.stimulus.duration;
        for i in 0..n {
            let s = if on { stim[i] } else { 0.0 };
            // the explicit reaction update may not jump past V_dep
            let react = cm * v[i] - dt * ion.current(v[i]);
            let react = if v[i] <= ion.v_dep {
                react.min(cm * ion.v_dep)
            } else {
                react
            };
            src[i] = react + dt * s;
        }
        let next = chol.solve(&mass.mul_vec(&src));
        for i in 0..n {
            if !(next[i].abs() <= 1e3) {
                return Err(Error::BlowUp {
                    step: step + 1,
                    value: next[i],
                });
            }
            if v[i] <= ion.v_dep {
                max_decrease = max_decrease.max(v[i] - next[i]);
            }
            if activation[i].is_none() && next[i] >= ion.v_th {
                let frac = if next[i] > v[i] {
                    (ion.v_th - v[i]) / (next[i] - v[i])
                } else {
                    1.0
                };
                activation[i] = Some(t + frac.clamp(0.0, 1.0) * dt);
            }
        }
        v = next;
        if (step + 1) % sample_every == 0 {
            snaps
                .column_mut((step + 1) / sample_every)
                .copy_from_slice(&v);
        }
    }
    Ok(SimulationResult {
        transmembrane: snaps,
        activation,
        dt,
        sample_every,
        max_decrease,
    })
}

/// Pseudo-bidomain recovery `(K_i + K_e + η M) v_e = −K_i v` for every
/// snapshot, shifted to zero mean over the disk.
pub fn extracellular_solve(
    result: &SimulationResult,
    model: &HeartModel,
    eta: f64,
) -> Result<DMatrix<f64>> {
    let mesh = &model.mesh;
    let ki = assemble_stiffness(mesh, &Conductivity::PerElement(model.gi.clone()))?;
    let ke = assemble_stiffness(mesh, &Conductivity::PerElement(model.ge.clone()))?;
    let mass = assemble_mass_2d(mesh);
    let a = ki.add_scaled(1.0, &ke).add_scaled(eta, &mass);
    let chol = SparseCholesky::factor(&a)?;
    let rhs = ki.mul_dense(&result.transmembrane) * -1.0;
    let mut ve = chol.solve_dense(&rhs);
    let res = a.mul_dense(&ve) - &rhs;
    let ki_abs = CsrMatrix::from_triplets(
        ki.nrows(),
        ki.ncols(),
        &ki.triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, v.abs()))
            .collect::<Vec<_>>(),
    );
    let scale = ki_abs
        .mul_dense(&result.transmembrane.abs())
        .norm()
        .max(f64::MIN_POSITIVE);
    if res.norm() > 1e-8 * scale {
        return Err(Error::SolveFailure(format!(
            "extracellular solve residual {:e} relative",
            res.norm() / scale
        )));
    }
    gauge_fix(&mut ve, &mass);
    Ok(ve)
}

/// Subtracts the area-weighted mean from every column.
fn gauge_fix(ve: &mut DMatrix<f64>, mass: &CsrMatrix) {
    let w = mass.row_sums();
    let total: f64 = w.iter().sum();
    for mut col in ve.column_iter_mut() {
        let mean = col.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / total;
        col.add_scalar_mut(-mean);
    }
}

/// Sampling ranges and fixed settings of the synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatagenConfig {
    pub heart_center: Point,
    pub heart_radius: f64,
    /// Rim nodes of the fine heart mesh.
    pub fine_rim_nodes: usize,
    pub ionic: IonicModel,
    pub membrane: Membrane,
    pub sigma_il: f64,
    pub alpha: f64,
    pub lambda_lt: (f64, f64),
    pub eps: (f64, f64),
    pub dt: (f64, f64),
    pub n_sample: (usize, usize),
    pub i_max: f64,
    pub i_dur: f64,
    /// Stimulus radius as a fraction of the heart radius.
    pub stimulus_radius: f64,
    /// Scar radius as a fraction of the heart radius.
    pub scar_radius: f64,
    pub scar_factor: (f64, f64),
    pub p_scar: f64,
    pub p_second_scar: f64,
    /// Fiber taper radius as a fraction of the heart radius.
    pub taper: f64,
    pub eta: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            heart_center: [-0.5, 0.0],
            heart_radius: 3.0,
            fine_rim_nodes: 256,
            ionic: IonicModel::default(),
            membrane: Membrane::default(),
            sigma_il: 3.0,
            alpha: 1.0,
            lambda_lt: (2.16, 2.84),
            eps: (0.58, 0.93),
            dt: (0.07, 0.12),
            n_sample: (7, 13),
            i_max: 200.0,
            i_dur: 100.0,
            stimulus_radius: 0.15,
            scar_radius: 0.25,
            scar_factor: (0.05, 0.25),
            p_scar: 1.0 / 3.0,
            p_second_scar: 1.0 / 6.0,
            taper: 0.1,
            eta: 1e-9,
        }
    }
}

/// Random draws that define one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub seed: u64,
    pub dt: f64,
    pub n_sample: usize,
    pub lambda_lt: f64,
    pub eps: f64,
    pub stimulus: Disk,
    pub scars: Vec<Scar>,
}

impl SampleMeta {
    /// Draws every random quantity of a sample from `seed`.
    pub fn draw(seed: u64, cfg: &DatagenConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = rng.random_range(cfg.dt.0..=cfg.dt.1);
        let n_sample = rng.random_range(cfg.n_sample.0..=cfg.n_sample.1);
        let lambda_lt = rng.random_range(cfg.lambda_lt.0..=cfg.lambda_lt.1);
        let eps = rng.random_range(cfg.eps.0..=cfg.eps.1);
        let (c, r) = (cfg.heart_center, cfg.heart_radius);
        let th = rng.random_range(0.0..2.0 * PI);
        let stimulus = Disk::new(
            [c[0] + r * th.cos(), c[1] + r * th.sin()],
            cfg.stimulus_radius * r,
        );
        let u: f64 = rng.random();
        let n_scars = if u < cfg.p_second_scar {
            2
        } else if u < cfg.p_scar {
            1
        } else {
            0
        };
        let scars = (0..n_scars)
            .map(|_| {
                // area-uniform centre within 0.8 r_H
                let rad = 0.8 * r * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..2.0 * PI);
                Scar {
                    region: Disk::new(
                        [c[0] + rad * phi.cos(), c[1] + rad * phi.sin()],
                        cfg.scar_radius * r,
                    ),
                    factor: rng.random_range(cfg.scar_factor.0..=cfg.scar_factor.1),
                }
            })
            .collect();
        Self {
            seed,
            dt,
            n_sample,
            lambda_lt,
            eps,
            stimulus,
            scars,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "dt {:e}", self.dt);
        let _ = writeln!(s, "n_sample {}", self.n_sample);
        let _ = writeln!(s, "lambda_lt {:e}", self.lambda_lt);
        let _ = writeln!(s, "eps {:e}", self.eps);
        let st = &self.stimulus;
        let _ = writeln!(
            s,
            "stimulus {:e} {:e} {:e}",
            st.center[0], st.center[1], st.radius
        );
        for sc in &self.scars {
            let r = &sc.region;
            let _ = writeln!(
                s,
                "scar {:e} {:e} {:e} {:e}",
                r.center[0], r.center[1], r.radius, sc.factor
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("sample meta: {m}"));
        let mut fields: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut scars = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let vals: Vec<f64> = it
                .map(|t| t.parse().map_err(|_| bad(format!("bad number '{t}'"))))
                .collect::<Result<_>>()?;
            if key == "scar" {
                if vals.len() != 4 {
                    return Err(bad("scar needs 4 values".into()));
                }
                scars.push(Scar {
                    region: Disk::new([vals[0], vals[1]], vals[2]),
                    factor: vals[3],
                });
            } else {
                fields.insert(key, vals);
            }
        }
        let one = |k: &str| -> Result<f64> {
            match fields.get(k).map(Vec::as_slice) {
                Some([v]) => Ok(*v),
                _ => Err(bad(format!("missing or malformed '{k}'"))),
            }
        };
        let st = match fields.get("stimulus").map(Vec::as_slice) {
            Some([x, y, r]) => Disk::new([*x, *y], *r),
            _ => return Err(bad("missing or malformed 'stimulus'".into())),
        };
        Ok(Self {
            seed: one("seed")? as u64,
            dt: one("dt")?,
            n_sample: one("n_sample")? as usize,
            lambda_lt: one("lambda_lt")?,
            eps: one("eps")?,
            stimulus: st,
            scars,
        })
    }
}

/// Builds samples for one coarse epicardial curve and time grid; the fine
/// heart mesh and the nearest-node map are computed once.
#[derive(Debug, Clone)]
pub struct SampleGenerator {
    pub config: DatagenConfig,
    pub fine_mesh: Mesh2D,
    pub grid: TimeGrid,
    /// Nearest fine node of every coarse curve node.
    pub nearest: Vec<usize>,
}

impl SampleGenerator {
    pub fn new(config: DatagenConfig, curve: &SurfaceMesh1D, grid: TimeGrid) -> Result<Self> {
        if config.fine_rim_nodes < 4 * curve.len() {
            return Err(Error::InsufficientResolution(format!(
                "fine heart mesh needs >= {} rim nodes, got {}",
                4 * curve.len(),
                config.fine_rim_nodes
            )));
        }
        let fine_mesh = build_disk_mesh(
            config.heart_center,
            config.heart_radius,
            config.fine_rim_nodes,
            0,
        )?;
        let nearest = curve
            .points
            .iter()
            .map(|p| {
                let d2 = |q: &Point| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                (0..fine_mesh.vertices.len())
                    .min_by(|&a, &b| {
                        d2(&fine_mesh.vertices[a]).total_cmp(&d2(&fine_mesh.vertices[b]))
                    })
                    .unwrap_or(0)
            })
            .collect();
        Ok(Self {
            config,
            fine_mesh,
            grid,
            nearest,
        })
    }

    pub fn model(&self, meta: &SampleMeta) -> Result<HeartModel> {
        let c = &self.config;
        let tissue = Tissue {
            sigma_il: c.sigma_il,
            lambda_lt: meta.lambda_lt,
            alpha: c.alpha,
            eps: meta.eps,
        };
        HeartModel::new(
            self.fine_mesh.clone(),
            &tissue,
            c.ionic,
            c.membrane,
            Stimulus {
                i_max: c.i_max,
                duration: c.i_dur,
                region: meta.stimulus,
            },
            meta.scars.clone(),
            c.taper * c.heart_radius,
        )
    }

    /// Number of steps so that the last snapshot reaches the grid end.
    pub fn steps(&self, meta: &SampleMeta) -> usize {
        let per = meta.dt * meta.n_sample as f64;
        meta.n_sample * (self.grid.end_time() / per).ceil() as usize
    }

    /// Simulates, restricts to the coarse curve, resamples in time and
    /// rescales to `[0, 1]`.
    pub fn generate(&self, seed: u64) -> Result<(SpaceTimeField, SampleMeta)> {
        let meta = SampleMeta::draw(seed, &self.config);
        let model = self.model(&meta)?;
        let sim = simulate_monodomain(&model, meta.dt, self.steps(&meta), meta.n_sample)?;
        let ve = extracellular_solve(&sim, &model, self.config.eta)?;
        let times = sim.snapshot_times();
        let nt = self.grid.n_nodes();
        let mut u = DMatrix::zeros(self.nearest.len(), nt);
        for m in 0..nt {
            let t = self.grid.node(m);
            let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
            let w = ((t - times[k - 1]) / (times[k] - times[k - 1])).clamp(0.0, 1.0);
            for (j, &f) in self.nearest.iter().enumerate() {
                u[(j, m)] = (1.0 - w) * ve[(f, k - 1)] + w * ve[(f, k)];
            }
        }
        let (lo, hi) = (u.min(), u.max());
        if !(hi > lo) {
            return Err(Error::SolveFailure(format!(
                "sample {seed} is constant on the epicardium"
            )));
        }
        u.apply(|x| *x = (*x - lo) / (hi - lo));
        Ok((SpaceTimeField::new(u, self.grid.step())?, meta))
    }
}

/// `u + κ n` with `n` standard normal per coefficient.
pub fn add_field_noise(u: &DMatrix<f64>, kappa: f64, seed: u64) -> DMatrix<f64> {
    if kappa == 0.0 {
        return u.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    u.map(|x| x + kappa * rng.sample::<f64, _>(StandardNormal))
}

/// White Gaussian noise with per-electrode standard deviation
/// `rms(z_i) 10^(−snr/20)`.
pub fn add_observation_noise(z: &Observation, snr_db: f64, seed: u64) -> Result<Observation> {
    if !snr_db.is_finite() {
        return Err(Error::ParameterOutOfRange(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = 10f64.powf(-snr_db / 20.0);
    let mut values = z.values.clone();
    for mut row in values.row_iter_mut() {
        let rms = (row.iter().map(|x| x * x).sum::<f64>() / row.len() as f64).sqrt();
        for x in row.iter_mut() {
            *x += rms * factor * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Observation::new(
        values,
        z.step,
        NoiseMeta {
            kind: NoiseKind::GaussianSnr,
            level: snr_db,
            seed,
        },
    )
}

/// Train/validation/test seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl DatasetSplit {
    /// Consecutive 80/10/10 ranges of `seeds`.
    pub fn by_ranges(seeds: &[u64]) -> Self {
        let n = seeds.len();
        let n_val = n / 10;
        let n_test = n / 10;
        let n_train = n - n_val - n_test;
        Self {
            train: seeds[..n_train].to_vec(),
            val: seeds[n_train..n_train + n_val].to_vec(),
            test: seeds[n_train + n_val..].to_vec(),
        }
    }

    pub fn all(&self) -> Vec<u64> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
            .collect()
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "train {}\nval {}\ntest {}\n",
            list(&self.train),
            list(&self.val),
            list(&self.test)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut parts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default().to_string();
            let v = it
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Format(format!("split: bad seed '{t}'")))
                })
                .collect::<Result<Vec<u64>>>()?;
            parts.insert(key, v);
        }
        let mut take = |k: &str| {
            parts
                .remove(k)
                .ok_or_else(|| Error::Format(format!("split: missing '{k}'")))
        };
        Ok(Self {
            train: take("train")?,
            val: take("val")?,
            test: take("test")?,
        })
    }
}

fn sample_path(dir: &Path, seed: u64, ext: &str) -> std::path::PathBuf {
    dir.join("samples").join(format!("{seed:04}.{ext}"))
}

/// Writes `samples/NNNN.stf`, `samples/NNNN.meta` and `split.txt`.
pub fn generate_dataset(
    dir: &Path,
    generator: &SampleGenerator,
    seeds: &[u64],
) -> Result<DatasetSplit> {
    std::fs::create_dir_all(dir.join("samples"))?;
    let results: Vec<Result<()>> = seeds
        .par_iter()
        .map(|&seed| {
            let (field, meta) = generator.generate(seed)?;
            field.write(&sample_path(dir, seed, "stf"))?;
            std::fs::write(sample_path(dir, seed, "meta"), meta.to_text())?;
            log::info!("sample {seed} written");
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    let split = DatasetSplit::by_ranges(seeds);
    std::fs::write(dir.join("split.txt"), split.to_text())?;
    Ok(split)
}

/// A dataset read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: DatasetSplit,
    pub samples: BTreeMap<u64, SpaceTimeField>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let split_path = dir.join("split.txt");
        if !split_path.exists() {
            return Err(Error::MissingArtifacts(format!(
                "{} not found",
                split_path.display()
            )));
        }
        let split = DatasetSplit::from_text(&std::fs::read_to_string(split_path)?)?;
        let mut samples = BTreeMap::new();
        for seed in split.all() {
            let p = sample_path(dir, seed, "stf");
            if !p.exists() {
                return Err(Error::MissingArtifacts(format!(
                    "{} not found",
                    p.display()
                )));
            }
            samples.insert(seed, SpaceTimeField::read(&p)?);
        }
        Ok(Self { split, samples })
    }

    pub fn fields(&self, seeds: &[u64]) -> Vec<&SpaceTimeField> {
        seeds.iter().filter_map(|s| self.samples.get(s)).collect()
    }
}
