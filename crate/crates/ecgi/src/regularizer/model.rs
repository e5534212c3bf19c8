use std::fmt::Write as _;
use std::path::Path;

use super::potential::{inf_norm, spectral_norm, GradSource, Mat4, Potential};
use crate::error::{Error, Result};
use crate::femcore::compose_kernels;

/// Smallest admissible envelope scale.
pub const MU_MIN: f64 = 1e-8;

/// Floor applied to `ε_ω` by [`RegularizerModel::at_noise_level`].
pub const EPS_OMEGA_MIN: f64 = 1e-16;

/// Temporal filter of one expert.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `2 nw + 1` nodal values on `[-nw δ, nw δ]`.
    Nodal(Vec<f64>),
    /// Three half-width-2 kernels composed into one of half-width 6.
    Composed([[f64; 5]; 3]),
}

impl Kernel {
    pub fn nodal(&self, step: f64) -> Vec<f64> {
        match self {
            Kernel::Nodal(k) => k.clone(),
            Kernel::Composed([a, b, c]) => compose_kernels(a, b, c, step),
        }
    }

    pub fn half_width(&self) -> usize {
        match self {
            Kernel::Nodal(k) => k.len() / 2,
            Kernel::Composed(_) => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub mu: f64,
    pub eta: f64,
    pub q: Mat4,
    pub kernel: Kernel,
}

/// Which structural guarantees the loaded parameters satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraints {
    /// `‖Q‖∞ ≤ 1` and `η > max(‖Q‖₂², ‖Q‖₂)` for every expert.
    pub nonnegative: bool,
    /// `‖Q‖₂ = 1` for every expert.
    pub unit_norm_q: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerModel {
    pub lambda: f64,
    pub eps_theta: f64,
    pub eps_omega: f64,
    pub experts: Vec<ExpertParams>,
    /// Convex variant: every `Q` is treated as zero.
    pub convex: bool,
    pub grad_source: GradSource,
}

impl RegularizerModel {
    /// Checks hard requirements (errors) and returns the soft guarantees.
    pub fn validate(&self) -> Result<Constraints> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterOutOfRange(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        pos("lambda", self.lambda)?;
        pos("epsTheta", self.eps_theta)?;
        pos("epsOmega", self.eps_omega)?;
        if self.experts.is_empty() {
            return Err(Error::ParameterOutOfRange(
                "model needs at least one expert".into(),
            ));
        }
        let mut c = Constraints {
            nonnegative: true,
            unit_norm_q: true,
        };
        for (i, e) in self.experts.iter().enumerate() {
            if !(e.mu >= MU_MIN) || !e.mu.is_finite() {
                return Err(Error::ParameterOutOfRange(format!(
                    "expert {i}: mu = {} < {MU_MIN}",
                    e.mu
                )));
            }
            pos(&format!("expert {i} eta"), e.eta)?;
            if e.q.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::ParameterOutOfRange(format!(
                    "expert {i}: non-finite Q"
                )));
            }
            if let Kernel::Nodal(k) = &e.kernel {
                if k.len() % 2 == 0 || k.len() < 3 {
                    return Err(Error::ParameterOutOfRange(format!(
                        "expert {i}: kernel needs an odd length >= 3, got {}",
                        k.len()
                    )));
                }
            }
            let q = self.effective_q(i);
            let n2 = spectral_norm(&q);
            if !(inf_norm(&q) <= 1.0 && e.eta > n2 * n2 && e.eta >= n2) {
                c.nonnegative = false;
            }
            if (n2 - 1.0).abs() > 1e-8 {
                c.unit_norm_q = false;
            }
        }
        Ok(c)
    }

    /// `Q_i`, or zero in convex mode.
    pub fn effective_q(&self, i: usize) -> Mat4 {
        if self.convex {
            [[0.0; 4]; 4]
        } else {
            self.experts[i].q
        }
    }

    pub fn potential(&self, i: usize) -> Potential {
        let e = &self.experts[i];
        Potential {
            mu: e.mu,
            eta: e.eta,
            q: self.effective_q(i),
            eps_omega: self.eps_omega,
        }
    }

    /// Model with `μ_i(κ) = max(κ m_i, 1e-8)`, the stored `μ_i` acting as `m_i`.
    ///
    /// `ε_ω` is scaled by `κ²` so that `ε_ω / μ_i²` does not depend on `κ`;
    /// otherwise the smoothing term `ε_ω ‖y‖² / (2μ)` of `φ` would grow
    /// without bound as `κ → 0`.
    pub fn at_noise_level(&self, kappa: f64) -> Self {
        let mut m = self.clone();
        m.eps_omega = (kappa * kappa * self.eps_omega).max(EPS_OMEGA_MIN);
        for e in &mut m.experts {
            e.mu = (kappa * e.mu).max(MU_MIN);
        }
        m
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    /// Largest Lipschitz bound of the potential derivatives.
    pub fn max_potential_lipschitz(&self) -> f64 {
        (0..self.experts.len())
            .map(|i| self.potential(i).grad_lipschitz(self.grad_source))
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("foe-model v1\n");
        let _ = writeln!(s, "lambda {:e}", self.lambda);
        let _ = writeln!(s, "epsTheta {:e}", self.eps_theta);
        let _ = writeln!(s, "epsOmega {:e}", self.eps_omega);
        let _ = writeln!(s, "nExperts {}", self.experts.len());
        let _ = writeln!(s, "convexMode {}", self.convex);
        for e in &self.experts {
            let _ = writeln!(s, "mu {:e}", e.mu);
            let _ = writeln!(s, "eta {:e}", e.eta);
            let q: Vec<String> = e.q.iter().flatten().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "Q {}", q.join(" "));
            match &e.kernel {
                Kernel::Nodal(k) => {
                    let v: Vec<String> = k.iter().map(|v| format!("{v:e}")).collect();
                    let _ = writeln!(s, "kernel {} {}", k.len(), v.join(" "));
                }
                Kernel::Composed(ks) => {
                    let v: Vec<String> = ks.iter().flatten().map(|v| format!("{v:e}")).collect();
                    let _ = writeln!(s, "subkernels 3 {}", v.join(" "));
                }
            }
        }
        s
    }

    /// Parses the `foe-model v1` format. Models violating the nonnegativity
    /// conditions are accepted with a warning.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("foe-model: {m}"));
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some("foe-model v1") {
            return Err(bad("missing header".into()));
        }
        fn take<'l>(lines: &mut impl Iterator<Item = &'l str>, key: &str) -> Result<Vec<String>> {
            let bad = |m: String| Error::Format(format!("foe-model: {m}"));
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing '{key}'")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected '{key}', got '{line}'")));
            }
            Ok(it.map(str::to_string).collect())
        }
        let scalar = |v: Vec<String>, key: &str| -> Result<f64> {
            match v.as_slice() {
                [x] => x
                    .parse()
                    .map_err(|_| bad(format!("bad value for {key}: '{x}'"))),
                _ => Err(bad(format!("{key} takes one value"))),
            }
        };
        let floats = |v: &[String]| -> Result<Vec<f64>> {
            v.iter()
                .map(|x| x.parse().map_err(|_| bad(format!("bad number '{x}'"))))
                .collect()
        };
        let lambda = scalar(take(&mut lines, "lambda")?, "lambda")?;
        let eps_theta = scalar(take(&mut lines, "epsTheta")?, "epsTheta")?;
        let eps_omega = scalar(take(&mut lines, "epsOmega")?, "epsOmega")?;
        let n = scalar(take(&mut lines, "nExperts")?, "nExperts")?;
        if n < 1.0 || n.fract() != 0.0 {
            return Err(bad(format!("nExperts must be a positive integer, got {n}")));
        }
        let convex = match take(&mut lines, "convexMode")?.as_slice() {
            [v] if v == "true" => true,
            [v] if v == "false" => false,
            other => return Err(bad(format!("convexMode must be true/false, got {other:?}"))),
        };
        let mut experts = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let mu = scalar(take(&mut lines, "mu")?, "mu")?;
            let eta = scalar(take(&mut lines, "eta")?, "eta")?;
            let qv = floats(&take(&mut lines, "Q")?)?;
            if qv.len() != 16 {
                return Err(bad(format!("expert {i}: Q needs 16 entries")));
            }
            let q = [0, 1, 2, 3].map(|r| [0, 1, 2, 3].map(|c| qv[4 * r + c]));
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("expert {i}: missing kernel")))?;
            let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            let kernel = match toks.first().map(String::as_str) {
                Some("kernel") => {
                    let len: usize = toks
                        .get(1)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("bad kernel length".into()))?;
                    let vals = floats(&toks[2..])?;
                    if vals.len() != len {
                        return Err(bad(format!(
                            "expert {i}: kernel length {len} but {} values",
                            vals.len()
                        )));
                    }
                    Kernel::Nodal(vals)
                }
                Some("subkernels") => {
                    let vals = floats(toks.get(2..).unwrap_or(&[]))?;
                    if toks.get(1).map(String::as_str) != Some("3") || vals.len() != 15 {
                        return Err(bad(format!(
                            "expert {i}: subkernels needs '3' and 15 values"
                        )));
                    }
                    Kernel::Composed([0, 1, 2].map(|k| [0, 1, 2, 3, 4].map(|j| vals[5 * k + j])))
                }
                _ => {
                    return Err(bad(format!(
                        "expert {i}: expected kernel or subkernels, got '{line}'"
                    )))
                }
            };
            experts.push(ExpertParams { mu, eta, q, kernel });
        }
        let model = Self {
            lambda,
            eps_theta,
            eps_omega,
            experts,
            convex,
            grad_source: GradSource::Analytic,
        };
        let c = model.validate()?;
        if !c.nonnegative {
            log::warn!("regularizer parameters violate the nonnegativity conditions; model treated as unconstrained");
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Small hand-designed model used as the starting point for training.
    ///
    /// Expert 0 sees first temporal differences, expert 1 second
    /// differences; both mix the spatial channels through a weak rotation
    /// `Q`, which softens the penalty on large jumps.
    pub fn default_model() -> Self {
        let rot = |a: f64| -> Mat4 {
            let (c, s) = (a.cos(), a.sin());
            [
                [c, -s, 0.0, 0.0],
                [s, c, 0.0, 0.0],
                [0.0, 0.0, c, -s],
                [0.0, 0.0, s, c],
            ]
        };
        let scaled = |m: Mat4, f: f64| m.map(|r| r.map(|v| f * v));
        Self {
            lambda: 0.5,
            eps_theta: 0.01,
            eps_omega: 0.05,
            experts: vec![
                ExpertParams {
                    mu: 0.3,
                    eta: 1.5,
                    q: scaled(rot(0.3), 0.3),
                    kernel: Kernel::Nodal(vec![0.0, -1.0, 0.0, 1.0, 0.0]),
                },
                ExpertParams {
                    mu: 0.3,
                    eta: 2.0,
                    q: scaled(rot(-0.5), 0.3),
                    kernel: Kernel::Nodal(vec![0.0, 8.0, -16.0, 8.0, 0.0]),
                },
            ],
            convex: false,
            grad_source: GradSource::Analytic,
        }
    }
}
