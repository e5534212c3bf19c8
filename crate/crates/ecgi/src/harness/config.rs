use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Disk, MeshConfig};

/// Benchmark and pipeline settings, read from `key = value` text.
///
/// Lists are comma separated. Unknown keys are rejected so that typos do
/// not silently fall back to defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub mesh: MeshConfig,
    pub n_electrodes: usize,
    pub electrode_coverage: f64,
    pub sigma_torso: f64,
    pub sigma_lung: f64,
    pub time_intervals: usize,
    pub time_step: f64,
    pub fine_rim_nodes: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub kappas: Vec<f64>,
    pub snrs: Vec<f64>,
    pub methods: Vec<String>,
    /// Tikhonov weights.
    pub lambda_gamma_grid: Vec<f64>,
    pub lambda_t_grid: Vec<f64>,
    /// Total variation weights; TV penalizes `|∇u|`, not its square, so
    /// its useful range sits well below the Tikhonov one.
    pub tv_lambda_gamma_grid: Vec<f64>,
    pub tv_lambda_t_grid: Vec<f64>,
    /// Multipliers of the FoE models' `λ_θ`.
    pub foe_scale_grid: Vec<f64>,
    /// Multipliers of `λ_θ` for the inverse problem, where the fidelity is
    /// scaled by `1/N_Σ` and much smaller weights are needed.
    pub foe_inverse_scale_grid: Vec<f64>,
    pub mfoe_model: Option<PathBuf>,
    pub cmfoe_model: Option<PathBuf>,
    /// Noise level used for training and for FoE in the inverse bench.
    pub train_kappa: f64,
    pub spsa_budget: usize,
    pub agd_max_iter: usize,
    pub agd_tol: f64,
    pub tv_max_iter: usize,
    pub tv_tol: f64,
    pub dataset: PathBuf,
    pub out: PathBuf,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let mut foe = vec![0.0];
        foe.extend(log_grid(0.05, 5.0, 7));
        Self {
            mesh: MeshConfig::default(),
            n_electrodes: 64,
            electrode_coverage: 0.5,
            sigma_torso: 0.2,
            sigma_lung: 0.05,
            time_intervals: 60,
            time_step: 0.5,
            fine_rim_nodes: 256,
            n_samples: 20,
            seed: 0,
            kappas: vec![0.05, 0.1, 0.2],
            snrs: vec![30.0, 40.0, 50.0],
            methods: ["TIK", "TV", "CMFoE", "MFoE"].map(String::from).to_vec(),
            lambda_gamma_grid: log_grid(0.01, 1.0, 8),
            lambda_t_grid: log_grid(0.01, 1.0, 8),
            tv_lambda_gamma_grid: log_grid(3e-4, 0.3, 8),
            tv_lambda_t_grid: log_grid(3e-4, 0.3, 8),
            foe_scale_grid: foe,
            foe_inverse_scale_grid: log_grid(1e-4, 1e-1, 8),
            mfoe_model: None,
            cmfoe_model: None,
            train_kappa: 0.1,
            spsa_budget: 100,
            agd_max_iter: 2000,
            agd_tol: 1e-6,
            tv_max_iter: 5000,
            tv_tol: 1e-5,
            dataset: PathBuf::from("dataset"),
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{key}': cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl BenchmarkConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), no).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{k}'",
                    no + 1
                )));
            }
            match k {
                "mesh.outer_radius" => c.mesh.outer_radius = parse(k, v)?,
                "mesh.heart_radius" => c.mesh.heart_radius = parse(k, v)?,
                "mesh.heart_center" => {
                    let p: Vec<f64> = parse_list(k, v)?;
                    let [x, y] = p[..] else {
                        return Err(Error::Config(format!("'{k}' needs two values")));
                    };
                    c.mesh.heart_center = [x, y];
                }
                "mesh.target_h" => c.mesh.target_h = parse(k, v)?,
                "mesh.seed" => c.mesh.seed = parse(k, v)?,
                "mesh.lungs" => {
                    let p: Vec<f64> = parse_list(k, v)?;
                    if p.len() % 3 != 0 {
                        return Err(Error::Config(format!("'{k}' needs x, y, r triples")));
                    }
                    c.mesh.lung_disks =
                        p.chunks(3).map(|t| Disk::new([t[0], t[1]], t[2])).collect();
                }
                "electrodes" => c.n_electrodes = parse(k, v)?,
                "electrode_coverage" => c.electrode_coverage = parse(k, v)?,
                "sigma_torso" => c.sigma_torso = parse(k, v)?,
                "sigma_lung" => c.sigma_lung = parse(k, v)?,
                "time_intervals" => c.time_intervals = parse(k, v)?,
                "time_step" => c.time_step = parse(k, v)?,
                "fine_rim_nodes" => c.fine_rim_nodes = parse(k, v)?,
                "n_samples" => c.n_samples = parse(k, v)?,
                "seed" => c.seed = parse(k, v)?,
                "kappas" => c.kappas = parse_list(k, v)?,
                "snrs" => c.snrs = parse_list(k, v)?,
                "methods" => c.methods = parse_list(k, v)?,
                "lambda_gamma_grid" => c.lambda_gamma_grid = parse_list(k, v)?,
                "lambda_t_grid" => c.lambda_t_grid = parse_list(k, v)?,
                "tv_lambda_gamma_grid" => c.tv_lambda_gamma_grid = parse_list(k, v)?,
                "tv_lambda_t_grid" => c.tv_lambda_t_grid = parse_list(k, v)?,
                "foe_scale_grid" => c.foe_scale_grid = parse_list(k, v)?,
                "foe_inverse_scale_grid" => c.foe_inverse_scale_grid = parse_list(k, v)?,
                "mfoe_model" => c.mfoe_model = Some(PathBuf::from(v)),
                "cmfoe_model" => c.cmfoe_model = Some(PathBuf::from(v)),
                "train_kappa" => c.train_kappa = parse(k, v)?,
                "spsa_budget" => c.spsa_budget = parse(k, v)?,
                "agd_max_iter" => c.agd_max_iter = parse(k, v)?,
                "agd_tol" => c.agd_tol = parse(k, v)?,
                "tv_max_iter" => c.tv_max_iter = parse(k, v)?,
                "tv_tol" => c.tv_tol = parse(k, v)?,
                "dataset" => c.dataset = PathBuf::from(v),
                "out" => c.out = PathBuf::from(v),
                _ => return Err(Error::Config(format!("line {}: unknown key '{k}'", no + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.lambda_gamma_grid.is_empty()
            || self.lambda_t_grid.is_empty()
            || self.tv_lambda_gamma_grid.is_empty()
            || self.tv_lambda_t_grid.is_empty()
            || self.foe_scale_grid.is_empty()
            || self.foe_inverse_scale_grid.is_empty()
        {
            return bad("parameter grids must be nonempty");
        }
        let all = self
            .lambda_gamma_grid
            .iter()
            .chain(&self.lambda_t_grid)
            .chain(&self.tv_lambda_gamma_grid)
            .chain(&self.tv_lambda_t_grid)
            .chain(&self.foe_scale_grid)
            .chain(&self.foe_inverse_scale_grid);
        if all.clone().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return bad("grid values must be finite and nonnegative");
        }
        if self.kappas.iter().any(|k| !(*k >= 0.0)) || self.snrs.iter().any(|s| !s.is_finite()) {
            return bad("noise levels must be nonnegative κ and finite SNR");
        }
        for m in &self.methods {
            if !["TIK", "TV", "CMFoE", "MFoE"].contains(&m.as_str()) {
                return Err(Error::Config(format!("unknown method '{m}'")));
            }
        }
        if self.time_intervals == 0 || !(self.time_step > 0.0) {
            return bad("time grid needs at least one interval and a positive step");
        }
        if self.n_samples == 0 || self.n_electrodes == 0 {
            return bad("need at least one sample and one electrode");
        }
        Ok(())
    }

    /// Text that [`BenchmarkConfig::from_text`] reads back to `self`.
    pub fn to_text(&self) -> String {
        let m = &self.mesh;
        let lungs: Vec<f64> = m
            .lung_disks
            .iter()
            .flat_map(|d| [d.center[0], d.center[1], d.radius])
            .collect();
        let mut lines = vec![
            format!("mesh.outer_radius = {}", m.outer_radius),
            format!("mesh.heart_radius = {}", m.heart_radius),
            format!(
                "mesh.heart_center = {}, {}",
                m.heart_center[0], m.heart_center[1]
            ),
            format!("mesh.target_h = {}", m.target_h),
            format!("mesh.seed = {}", m.seed),
            format!("mesh.lungs = {}", fmt_list(&lungs)),
            format!("electrodes = {}", self.n_electrodes),
            format!("electrode_coverage = {}", self.electrode_coverage),
            format!("sigma_torso = {}", self.sigma_torso),
            format!("sigma_lung = {}", self.sigma_lung),
            format!("time_intervals = {}", self.time_intervals),
            format!("time_step = {}", self.time_step),
            format!("fine_rim_nodes = {}", self.fine_rim_nodes),
            format!("n_samples = {}", self.n_samples),
            format!("seed = {}", self.seed),
            format!("kappas = {}", fmt_list(&self.kappas)),
            format!("snrs = {}", fmt_list(&self.snrs)),
            format!("methods = {}", self.methods.join(", ")),
            format!("lambda_gamma_grid = {}", fmt_list(&self.lambda_gamma_grid)),
            format!("lambda_t_grid = {}", fmt_list(&self.lambda_t_grid)),
            format!(
                "tv_lambda_gamma_grid = {}",
                fmt_list(&self.tv_lambda_gamma_grid)
            ),
            format!("tv_lambda_t_grid = {}", fmt_list(&self.tv_lambda_t_grid)),
            format!("foe_scale_grid = {}", fmt_list(&self.foe_scale_grid)),
            format!(
                "foe_inverse_scale_grid = {}",
                fmt_list(&self.foe_inverse_scale_grid)
            ),
        ];
        if let Some(p) = &self.mfoe_model {
            lines.push(format!("mfoe_model = {}", p.display()));
        }
        if let Some(p) = &self.cmfoe_model {
            lines.push(format!("cmfoe_model = {}", p.display()));
        }
        lines.extend([
            format!("train_kappa = {}", self.train_kappa),
            format!("spsa_budget = {}", self.spsa_budget),
            format!("agd_max_iter = {}", self.agd_max_iter),
            format!("agd_tol = {}", self.agd_tol),
            format!("tv_max_iter = {}", self.tv_max_iter),
            format!("tv_tol = {}", self.tv_tol),
            format!("dataset = {}", self.dataset.display()),
            format!("out = {}", self.out.display()),
        ]);
        lines.join("\n") + "\n"
    }
}
