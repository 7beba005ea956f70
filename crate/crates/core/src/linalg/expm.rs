//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants (orders 3, 5, 7, 9, 13), after Higham (2005).
//!
//! Used as the exact-in-time reference for the linear evolution
//! `u(t) = exp(tA)·f`; it is O(N³) and meant for desk-scale grids only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default largest system the dense oracle accepts.
pub const DEFAULT_EXPM_CAP: usize = 4096;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(U, V)` for the low-order approximants, built from even powers of `A`.
fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * b[1];
    let mut even = DMatrix::identity(n, n) * b[0];
    let mut power = a2.clone();
    for k in 1..b.len() / 2 {
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
        if k + 1 < b.len() / 2 {
            power = &power * &a2;
        }
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// Dense `exp(A)`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let coeffs: [&[f64]; 4] = [&B3, &B5, &B7, &B9];
    for (&(_, theta), b) in THETA.iter().zip(coeffs) {
        if norm <= theta {
            let (u, v) = pade_low(a, b);
            return pade_quotient(u, v);
        }
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-(squarings as i32));
    let (u, v) = pade13(&scaled);
    let mut r = pade_quotient(u, v);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn pade_quotient(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let numer = &v + &u;
    let denom = v - u;
    denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for scaled arguments")
}

/// `exp(t·A)·f` with a dense `A`. Rejects systems larger than `cap`.
pub fn dense_expm_apply(a: &DMatrix<f64>, f: &[f64], t: f64, cap: usize) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n > cap {
        return Err(Error::OracleCap { size: n, cap });
    }
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: f.len(),
        });
    }
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t}")));
    }
    let e = expm(&(a * t));
    let y = e * DVector::from_column_slice(f);
    Ok(y.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix() {
        let a = DMatrix::zeros(3, 3);
        let y = dense_expm_apply(&a, &[1.0, 2.0, 3.0], 5.0, 10).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_matches_scalar_exponentials() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let y = dense_expm_apply(&a, &[1.0, 1.0], 1.0, 10).unwrap();
        assert!((y[0] - (-1f64).exp()).abs() < 1e-15);
        assert!((y[1] - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn every_pade_branch_matches_series() {
        // Nilpotent-free 2x2 with a closed form: exp([[0, x],[−x, 0]]) is a rotation.
        for &x in &[1e-3, 0.1, 0.5, 1.5, 4.0, 40.0] {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, x, -x, 0.0]);
            let e = expm(&a);
            let (s, c) = f64::sin_cos(x);
            let expected = [c, s, -s, c];
            for (k, v) in expected.iter().enumerate() {
                assert!(
                    (e[(k / 2, k % 2)] - v).abs() < 1e-13 * x.max(1.0),
                    "x = {x}: {e}"
                );
            }
        }
    }

    #[test]
    fn cap_and_shape_checks() {
        let a = DMatrix::zeros(3, 3);
        assert!(matches!(
            dense_expm_apply(&a, &[0.0; 3], 1.0, 2),
            Err(Error::OracleCap { size: 3, cap: 2 })
        ));
        assert!(dense_expm_apply(&a, &[0.0; 2], 1.0, 10).is_err());
        assert!(dense_expm_apply(&DMatrix::zeros(2, 3), &[0.0; 2], 1.0, 10).is_err());
    }
}
