use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Conjugate gradients for a symmetric positive definite operator on
/// matrices with the Frobenius inner product.
///
/// Starts from `x0` (zero if `None`) and stops at relative residual `tol`.
pub fn cg(
    op: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    rhs: &DMatrix<f64>,
    x0: Option<&DMatrix<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let bnorm = rhs.norm();
    let mut x = x0
        .cloned()
        .unwrap_or_else(|| DMatrix::zeros(rhs.nrows(), rhs.ncols()));
    if bnorm == 0.0 && x0.is_none() {
        return Ok((x, 0));
    }
    let mut r = rhs - op(&x);
    let target = tol * bnorm.max(f64::MIN_POSITIVE);
    let mut rr = r.norm_squared();
    if rr.sqrt() <= target {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let ap = op(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::CgDivergence {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        x += &p * alpha;
        r -= &ap * alpha;
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= target {
            return Ok((x, it));
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    Err(Error::CgDivergence {
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Largest eigenvalue of an operator that is self-adjoint and positive
/// semidefinite in the given inner product.
pub fn power_method(
    op: impl Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    inner: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> f64,
    shape: (usize, usize),
    opts: PowerOptions,
) -> Result<f64> {
    'attempt: for attempt in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(attempt));
        let mut x = DMatrix::from_fn(shape.0, shape.1, |_, _| rng.random::<f64>() - 0.5);
        let n = inner(&x, &x).sqrt();
        x /= n;
        let mut lambda = 0.0;
        for it in 0..opts.max_iter {
            let y = op(&x)?;
            let next = inner(&x, &y);
            let ny = inner(&y, &y).sqrt();
            if !(ny > 0.0) {
                log::debug!("power method: zero iterate on attempt {attempt}");
                continue 'attempt;
            }
            x = y / ny;
            if it > 0 && (next - lambda).abs() <= opts.tol * next.abs() {
                return Ok(next);
            }
            lambda = next;
        }
        return Ok(lambda);
    }
    Err(Error::ZeroIterate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_identity_in_one_step() {
        let b = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let (x, it) = cg(|x| x.clone(), &b, None, 1e-12, 10).unwrap();
        assert_eq!(it, 1);
        assert!((x - b).amax() < 1e-15);
    }

    #[test]
    fn cg_zero_rhs() {
        let b = DMatrix::zeros(4, 1);
        let (x, it) = cg(|x| x * 2.0, &b, None, 1e-12, 10).unwrap();
        assert_eq!(it, 0);
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn power_method_on_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        let l = power_method(
            |x| Ok(&d * x),
            |a, b| a.dot(b),
            (2, 1),
            PowerOptions::default(),
        )
        .unwrap();
        assert!((l - 2.0).abs() < 1e-8);
    }

    #[test]
    fn power_method_zero_operator() {
        let r = power_method(
            |x| Ok(x * 0.0),
            |a, b| a.dot(b),
            (3, 1),
            PowerOptions::default(),
        );
        assert!(matches!(r, Err(Error::ZeroIterate)));
    }
}
