//! Unpreconditioned BiCGStab (van der Vorst) on a matrix-free operator.

use crate::error::{Error, Result};
use crate::operator::check_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovStatus {
    Converged,
    /// `ρ = (r̂₀, r)` or `ω` collapsed to zero.
    Breakdown,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct KrylovSolution {
    /// Iterate with the smallest relative residual seen.
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − Ax‖₂ / ‖b‖₂` of `x`.
    pub residual: f64,
    pub status: KrylovStatus,
}

impl KrylovSolution {
    pub fn converged(&self) -> bool {
        self.status == KrylovStatus::Converged
    }

    /// Turn a non-converged outcome into the matching error.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            KrylovStatus::Converged => Ok(self),
            KrylovStatus::Breakdown => Err(Error::KrylovBreakdown {
                iterations: self.iterations,
                residual: self.residual,
            }),
            KrylovStatus::MaxIterations => Err(Error::KrylovNotConverged {
                iterations: self.iterations,
                residual: self.residual,
            }),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A·x = b`, stopping once `‖b − Ax‖₂/‖b‖₂ ≤ tol` or after `maxiter`
/// iterations. `apply(x, out)` must write `A·x` into `out`.
pub fn bicgstab<F>(
    mut apply: F,
    b: &[f64],
    tol: f64,
    maxiter: usize,
    x0: Option<&[f64]>,
) -> Result<KrylovSolution>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    if maxiter == 0 {
        return Err(Error::InvalidParameter("maxiter must be ≥ 1".into()));
    }
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(KrylovSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            status: KrylovStatus::Converged,
        });
    }

    let mut x = match x0 {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = norm(&r) / b_norm;
    let mut best = (res, x.clone());
    if res <= tol {
        return Ok(KrylovSolution {
            x,
            iterations: 0,
            residual: res,
            status: KrylovStatus::Converged,
        });
    }

    let r_hat = r.clone();
    let r_hat_norm = norm(&r_hat);
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let breakdown_eps = f64::EPSILON * f64::EPSILON;

    let finish = |best: (f64, Vec<f64>), iterations, status| {
        Ok(KrylovSolution {
            x: best.1,
            iterations,
            residual: best.0,
            status,
        })
    };

    for it in 1..=maxiter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() <= breakdown_eps * r_hat_norm * norm(&r) {
            return finish(best, it - 1, KrylovStatus::Breakdown);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        apply(&p, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return finish(best, it - 1, KrylovStatus::Breakdown);
        }
        alpha = rho / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        let s_res = norm(&s) / b_norm;
        if s_res <= tol {
            for k in 0..n {
                x[k] += alpha * p[k];
            }
            return finish((s_res, x), it, KrylovStatus::Converged);
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return finish(best, it, KrylovStatus::Breakdown);
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * p[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r) / b_norm;
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= tol {
            return finish((res, x), it, KrylovStatus::Converged);
        }
        if omega == 0.0 {
            return finish(best, it, KrylovStatus::Breakdown);
        }
    }
    finish(best, maxiter, KrylovStatus::MaxIterations)
}
