#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use osmosis::{DriftField, GridShape, SplitOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn positive(shape: GridShape, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..shape.len())
        .map(|_| r.random_range(0.02..1.0))
        .collect()
}

/// Arbitrary drift, not necessarily canonical; `|d| < lim`.
pub fn arbitrary_drift(shape: GridShape, h: f64, lim: f64, seed: u64) -> DriftField {
    let mut r = rng(seed);
    let GridShape { nx, ny } = shape;
    let mut d1 = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for e in 1..nx {
            d1[j * (nx + 1) + e] = r.random_range(-lim..lim);
        }
    }
    let mut d2 = vec![0.0; nx * (ny + 1)];
    for e in 1..ny {
        for i in 0..nx {
            d2[e * nx + i] = r.random_range(-lim..lim);
        }
    }
    DriftField::from_parts(shape, h, d1, d2).unwrap()
}

pub fn canonical_op(shape: GridShape, v: &[f64]) -> SplitOperator {
    SplitOperator::assemble(&DriftField::canonical(shape, v, 1.0).unwrap())
}

/// Dense `(A1, A2)` built edge by edge from the flux
/// `F = (u_q − u_p)/h² − d·(u_q + u_p)/(2h)` leaving `p` and entering `q`.
pub fn flux_oracle(drift: &DriftField) -> (DMatrix<f64>, DMatrix<f64>) {
    let shape = drift.shape();
    let h = drift.spacing();
    let n = shape.len();
    let mut a1 = DMatrix::zeros(n, n);
    let mut a2 = DMatrix::zeros(n, n);
    let add = |m: &mut DMatrix<f64>, p: usize, q: usize, d: f64| {
        let a = 1.0 / (h * h) - d / (2.0 * h);
        let b = -1.0 / (h * h) - d / (2.0 * h);
        m[(p, q)] += a;
        m[(p, p)] += b;
        m[(q, q)] -= a;
        m[(q, p)] -= b;
    };
    for j in 0..shape.ny {
        for e in 1..shape.nx {
            add(
                &mut a1,
                shape.index(e - 1, j),
                shape.index(e, j),
                drift.d1(e, j),
            );
        }
    }
    for e in 1..shape.ny {
        for i in 0..shape.nx {
            add(
                &mut a2,
                shape.index(i, e - 1),
                shape.index(i, e),
                drift.d2(i, e),
            );
        }
    }
    (a1, a2)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Pairwise-summed mean, independent of the crate's compensated sum.
pub fn mean_oracle(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    while v.len() > 1 {
        v = v.chunks(2).map(|c| c.iter().sum()).collect();
    }
    v.first().copied().unwrap_or(0.0) / x.len() as f64
}
