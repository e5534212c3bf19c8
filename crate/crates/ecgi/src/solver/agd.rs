use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A smooth objective on space-time fields.
pub trait Objective {
    fn value(&self, u: &DMatrix<f64>) -> Result<f64>;
    /// Value and gradient with respect to the objective's inner product.
    fn value_grad(&self, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>;
    /// Norm used in the stopping test.
    fn norm(&self, g: &DMatrix<f64>) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdOptions {
    pub max_iter: usize,
    /// Stop once `‖∇f‖ ≤ tol (1 + |f|)`.
    pub tol: f64,
}

impl Default for AgdOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-7,
        }
    }
}

impl AgdOptions {
    pub fn inverse() -> Self {
        Self {
            max_iter: 20_000,
            ..Self::default()
        }
    }
}

/// Iteration history of [`agd_restart`]. Equality ignores `wall_time`.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub restarts: usize,
    pub final_objective: f64,
    /// `f(u^{n+1})` for every step taken.
    pub objective_trace: Vec<f64>,
    /// `τ_{n+1}` after every step, reset steps included.
    pub momentum_trace: Vec<f64>,
    pub restart_trace: Vec<bool>,
    pub wall_time: Duration,
    pub converged: bool,
}

impl PartialEq for SolveReport {
    fn eq(&self, other: &Self) -> bool {
        self.iterations == other.iterations
            && self.restarts == other.restarts
            && self.final_objective.to_bits() == other.final_objective.to_bits()
            && self.objective_trace == other.objective_trace
            && self.momentum_trace == other.momentum_trace
            && self.restart_trace == other.restart_trace
            && self.converged == other.converged
    }
}

impl SolveReport {
    /// Report for a solver without an objective trace.
    pub fn summary(
        iterations: usize,
        final_objective: f64,
        converged: bool,
        wall_time: Duration,
    ) -> Self {
        Self {
            iterations,
            restarts: 0,
            final_objective,
            objective_trace: Vec::new(),
            momentum_trace: Vec::new(),
            restart_trace: Vec::new(),
            wall_time,
            converged,
        }
    }

    /// Whitespace-separated table with one row per step.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# iterations {} restarts {} converged {} final {:e}\niter f restart\n",
            self.iterations, self.restarts, self.converged, self.final_objective
        );
        for (n, (f, r)) in self
            .objective_trace
            .iter()
            .zip(&self.restart_trace)
            .enumerate()
        {
            let _ = writeln!(s, "{} {:e} {}", n + 1, f, u8::from(*r));
        }
        s
    }
}

/// Accelerated gradient descent with objective-based restart.
///
/// Starting from `u⁰ = v⁰ = u0`, `τ₀ = 1`, `f⁰ = ∞`:
///
/// ```text
/// u^{n+1} = v^n − ∇f(v^n) / ℒ
/// τ_{n+1} = (1 + √(1 + 4τ_n²)) / 2
/// v^{n+1} = u^{n+1} + (τ_n − 1)/τ_{n+1} (u^{n+1} − u^n)
/// if f(u^{n+1}) > f^n: v^{n+1} = u^{n+1}, τ_{n+1} = 1
/// ```
///
/// Stops when the gradient at `v^n` is small; that `v^n` is returned.
pub fn agd_restart(
    problem: &impl Objective,
    lipschitz: f64,
    u0: &DMatrix<f64>,
    opts: AgdOptions,
) -> Result<(DMatrix<f64>, SolveReport)> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    let start = Instant::now();
    let mut u = u0.clone();
    let mut v = u0.clone();
    let mut tau = 1.0f64;
    let mut f_prev = f64::INFINITY;
    let mut report = SolveReport::summary(0, f64::NAN, false, Duration::ZERO);
    for n in 0..opts.max_iter {
        let (fv, g) = problem.value_grad(&v)?;
        if !fv.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: n });
        }
        if problem.norm(&g) <= opts.tol * (1.0 + fv.abs()) {
            report.iterations = n;
            report.final_objective = fv;
            report.converged = true;
            report.wall_time = start.elapsed();
            return Ok((v, report));
        }
        let u_next = &v - g / lipschitz;
        let mut tau_next = (1.0 + (1.0 + 4.0 * tau * tau).sqrt()) / 2.0;
        let f_next = problem.value(&u_next)?;
        if !f_next.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: n + 1 });
        }
        let restart = f_next > f_prev;
        if restart {
            v = u_next.clone();
            tau_next = 1.0;
            report.restarts += 1;
        } else {
            v = &u_next + (&u_next - &u) * ((tau - 1.0) / tau_next);
        }
        report.objective_trace.push(f_next);
        report.momentum_trace.push(tau_next);
        report.restart_trace.push(restart);
        u = u_next;
        tau = tau_next;
        f_prev = f_next;
    }
    log::warn!(
        "accelerated gradient descent stopped after {} iterations",
        opts.max_iter
    );
    report.iterations = opts.max_iter;
    report.final_objective = f_prev;
    report.wall_time = start.elapsed();
    Ok((u, report))
}
