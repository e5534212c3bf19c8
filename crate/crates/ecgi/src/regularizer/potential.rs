//! Multivariate ridge potentials built from smoothed ℓ∞ envelopes.

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

/// Which derivative of the potential is used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradSource {
    /// Exact derivative of the implemented value.
    #[default]
    Analytic,
    /// The closed form `μ (P(y/μ) − Qᵀ P(Qy/(μη)) + ε_ω (I − QᵀQ) y)`.
    PaperDisplay,
}

/// Euclidean projection onto the unit ℓ1 ball.
pub fn project_l1_ball(y: Vec4) -> Vec4 {
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 <= 1.0 {
        return y;
    }
    let mut a = y.map(f64::abs);
    a.sort_by(|p, q| q.total_cmp(p));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in a.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v > t {
            theta = t;
        }
    }
    y.map(|v| v.signum() * (v.abs() - theta).max(0.0))
}

fn scale(y: Vec4, c: f64) -> Vec4 {
    y.map(|v| c * v)
}

fn dot(a: Vec4, b: Vec4) -> f64 {
    a.iter().zip(&b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(q: &Mat4, y: Vec4) -> Vec4 {
    [0, 1, 2, 3].map(|i| dot(q[i], y))
}

pub fn mat_tvec(q: &Mat4, y: Vec4) -> Vec4 {
    [0, 1, 2, 3].map(|j| (0..4).map(|i| q[i][j] * y[i]).sum())
}

/// `‖y − μP‖∞ + (μ/2)‖P‖² + (ε/2)‖y/μ‖²` with `P = Proj(y/μ)`.
pub fn omega_value(y: Vec4, mu: f64, eps: f64) -> f64 {
    let p = project_l1_ball(scale(y, 1.0 / mu));
    let linf = (0..4).map(|k| (y[k] - mu * p[k]).abs()).fold(0.0, f64::max);
    linf + 0.5 * mu * dot(p, p) + 0.5 * eps * dot(y, y) / (mu * mu)
}

/// Derivative of [`omega_value`]: `Proj(y/μ) + ε y / μ²`.
pub fn omega_grad(y: Vec4, mu: f64, eps: f64) -> Vec4 {
    let p = project_l1_ball(scale(y, 1.0 / mu));
    [0, 1, 2, 3].map(|k| p[k] + eps * y[k] / (mu * mu))
}

/// The displayed closed form `Proj(y/μ) + ε y / μ`; equals
/// [`omega_grad`] only at `μ = 1`.
pub fn omega_grad_display(y: Vec4, mu: f64, eps: f64) -> Vec4 {
    let p = project_l1_ball(scale(y, 1.0 / mu));
    [0, 1, 2, 3].map(|k| p[k] + eps * y[k] / mu)
}

/// Lipschitz constant of [`omega_grad`].
pub fn omega_grad_lipschitz(mu: f64, eps: f64) -> f64 {
    (1.0 + eps / mu) / mu
}

/// Parameters of one potential `φ(y) = μ ω_μ(y) − μ ω_{ημ}(Qy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub mu: f64,
    pub eta: f64,
    pub q: Mat4,
    pub eps_omega: f64,
}

impl Potential {
    pub fn value(&self, y: Vec4) -> f64 {
        let qy = mat_vec(&self.q, y);
        self.mu * omega_value(y, self.mu, self.eps_omega)
            - self.mu * omega_value(qy, self.eta * self.mu, self.eps_omega)
    }

    pub fn grad(&self, y: Vec4, source: GradSource) -> Vec4 {
        let (mu, eta, eps) = (self.mu, self.eta, self.eps_omega);
        let qy = mat_vec(&self.q, y);
        match source {
            GradSource::Analytic => {
                let a = omega_grad(y, mu, eps);
                let b = mat_tvec(&self.q, omega_grad(qy, eta * mu, eps));
                [0, 1, 2, 3].map(|k| mu * (a[k] - b[k]))
            }
            GradSource::PaperDisplay => {
                let a = project_l1_ball(scale(y, 1.0 / mu));
                let b = mat_tvec(&self.q, project_l1_ball(scale(qy, 1.0 / (mu * eta))));
                let qtqy = mat_tvec(&self.q, qy);
                [0, 1, 2, 3].map(|k| mu * (a[k] - b[k] + eps * (y[k] - qtqy[k])))
            }
        }
    }

    /// Upper bound on the Lipschitz constant of the selected derivative.
    pub fn grad_lipschitz(&self, source: GradSource) -> f64 {
        let (mu, eta, eps) = (self.mu, self.eta, self.eps_omega);
        let q2 = spectral_norm(&self.q).powi(2);
        match source {
            // difference of two convex functions with Lipschitz gradients
            GradSource::Analytic => (1.0 + eps / mu).max(q2 * (1.0 / eta + eps / (eta * eta * mu))),
            GradSource::PaperDisplay => {
                let mut iqtq = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        let qtq: f64 = (0..4).map(|k| self.q[k][i] * self.q[k][j]).sum();
                        iqtq[i][j] = if i == j { 1.0 } else { 0.0 } - qtq;
                    }
                }
                1.0 + q2 / eta + eps * mu * spectral_norm(&iqtq)
            }
        }
    }
}

/// Largest singular value of a 4x4 matrix.
pub fn spectral_norm(q: &Mat4) -> f64 {
    let m = nalgebra::Matrix4::from_fn(|i, j| q[i][j]);
    m.singular_values().max()
}

/// Induced ∞-norm (maximum absolute row sum).
pub fn inf_norm(q: &Mat4) -> f64 {
    q.iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_reference_points() {
        assert_eq!(
            project_l1_ball([0.3, -0.2, 0.1, 0.0]),
            [0.3, -0.2, 0.1, 0.0]
        );
        assert_eq!(project_l1_ball([2.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0]);
        let p = project_l1_ball([0.8, 0.6, 0.0, 0.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.4).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn omega_at_origin() {
        assert_eq!(omega_value([0.0; 4], 0.3, 0.1), 0.0);
        assert_eq!(omega_grad([0.0; 4], 0.3, 0.1), [0.0; 4]);
    }

    #[test]
    fn display_and_analytic_gradients_agree_at_unit_scale() {
        let y = [0.4, -1.3, 0.2, 0.9];
        let a = omega_grad(y, 1.0, 0.2);
        let b = omega_grad_display(y, 1.0, 0.2);
        assert_eq!(a, b);
    }
}
