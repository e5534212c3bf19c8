use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::femcore::{SpaceTimeContext, TimeGrid};
use crate::geometry::SurfaceMesh1D;
use crate::regularizer::{tik_energy, Fidelity, FoeOperator, RegularizerModel};

/// Energy evaluated by [`refinement_study`].
#[derive(Debug, Clone, PartialEq)]
pub enum StudyEnergy {
    Foe(RegularizerModel),
    /// Regularization part of the Tikhonov energy.
    Tik {
        lambda_gamma: f64,
        lambda_t: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub nodes: Vec<usize>,
    pub energies: Vec<f64>,
    /// `|J_h − J_{h/2}|` for consecutive levels.
    pub differences: Vec<f64>,
    /// `log2` of consecutive difference ratios; `None` where a difference
    /// vanishes.
    pub orders: Vec<Option<f64>>,
}

impl RefinementReport {
    /// True when the energy does not change under refinement.
    pub fn exact(&self) -> bool {
        self.differences.iter().all(|d| *d == 0.0)
    }

    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().flatten().copied().reduce(f64::min)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("nodes energy difference order\n");
        for (l, (&n, &e)) in self.nodes.iter().zip(&self.energies).enumerate() {
            let d = l
                .checked_sub(1)
                .map_or("-".into(), |k| format!("{:e}", self.differences[k]));
            let o = match l.checked_sub(2).map(|k| self.orders[k]) {
                None => "-".into(),
                Some(None) => "exact".into(),
                Some(Some(p)) => format!("{p:.3}"),
            };
            let _ = writeln!(s, "{n} {e:e} {d} {o}");
        }
        s
    }
}

/// Evaluates an energy of the fixed field `u(θ, t)` on circles with
/// `base_nodes · 2^l` vertices, `l < levels`, on a fixed time grid.
///
/// Time stays fixed because the temporal kernels are defined on the
/// nodal time grid.
pub fn refinement_study(
    field: &dyn Fn(f64, f64) -> f64,
    energy: &StudyEnergy,
    radius: f64,
    base_nodes: usize,
    levels: usize,
    grid: &TimeGrid,
) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(Error::ParameterOutOfRange(format!(
            "refinement study needs >= 3 levels, got {levels}"
        )));
    }
    let mut nodes = Vec::with_capacity(levels);
    let mut energies = Vec::with_capacity(levels);
    for l in 0..levels {
        let n = base_nodes << l;
        let ctx =
            SpaceTimeContext::new(SurfaceMesh1D::circle([0.0, 0.0], radius, n)?, grid.clone())?;
        let u = DMatrix::from_fn(n, grid.n_nodes(), |j, m| {
            let p = ctx.surface.points[j];
            field(p[1].atan2(p[0]), grid.node(m))
        });
        let e = match energy {
            StudyEnergy::Foe(model) => FoeOperator::new(&ctx, model)?.value(&u)?,
            StudyEnergy::Tik {
                lambda_gamma,
                lambda_t,
            } => tik_energy(
                &Fidelity::Denoise { z: &u },
                *lambda_gamma,
                *lambda_t,
                &u,
                &ctx,
            ),
        };
        nodes.push(n);
        energies.push(e);
    }
    let differences: Vec<f64> = energies.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let orders = differences
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect();
    Ok(RefinementReport {
        nodes,
        energies,
        differences,
        orders,
    })
}

/// Exact Tikhonov regularization energy of `u = cos θ + t/T` on a circle of
/// radius `r` over `[0, T]`.
pub fn tik_reference_energy(radius: f64, end_time: f64, lambda_gamma: f64, lambda_t: f64) -> f64 {
    0.5 * lambda_gamma.powi(2) * PI / radius * end_time
        + 0.5 * lambda_t.powi(2) * 2.0 * PI * radius / end_time
}
