mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use osmosis::linalg::DEFAULT_BANDED_CAP;
use osmosis::{bicgstab, BandedLu, Direction, DirectionalOperator, GridShape, TridiagonalFactors};

fn directional(seed: u64, canonical: bool) -> (DirectionalOperator, f64) {
    let mut r = rng(seed);
    let shape = GridShape::new(r.random_range(1..10), r.random_range(1..10));
    let drift = if canonical {
        osmosis::DriftField::canonical(shape, &positive(shape, seed ^ 0x55), 1.0).unwrap()
    } else {
        arbitrary_drift(shape, 1.0, 1.99, seed)
    };
    let dir = if seed % 2 == 0 {
        Direction::X
    } else {
        Direction::Y
    };
    (
        DirectionalOperator::assemble(&drift, dir),
        10f64.powf(r.random_range(-3.0..4.0)),
    )
}

fn dense_solve(op: &DirectionalOperator, c: f64, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let m = DMatrix::<f64>::identity(n, n) - op.to_dense() * c;
    m.lu()
        .solve(&DVector::from_column_slice(b))
        .unwrap()
        .as_slice()
        .to_vec()
}

proptest! {
    #[test]
    fn pivots_are_at_least_one(seed in any::<u64>()) {
        let (op, c) = directional(seed, false);
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        prop_assert!(f.min_pivot() >= 1.0 - 1e-12);
    }

    #[test]
    fn inverse_has_unit_column_sums(seed in any::<u64>()) {
        // Rounding in 1 − c·a_ii grows with c; up to c = 100 (θτ at τ = 100)
        // the mean holds to 1e-13, beyond that to c·1e-15.
        let (op, c) = directional(seed, false);
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        let mut r = rng(seed.wrapping_add(1));
        let b: Vec<f64> = (0..f.len()).map(|_| r.random_range(0.0..1.0)).collect();
        let mut x = vec![0.0; b.len()];
        f.solve(&b, &mut x).unwrap();
        let tol = if c <= 100.0 { 1e-13 } else { 1e-15 * c };
        prop_assert!((mean_oracle(&x) - mean_oracle(&b)).abs() <= tol * max_abs(&b).max(1e-300));
    }

    #[test]
    fn inverse_is_non_negative(seed in any::<u64>()) {
        let (op, c) = directional(seed, true);
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        let mut r = rng(seed.wrapping_add(2));
        let b: Vec<f64> = (0..f.len())
            .map(|_| if r.random_bool(0.4) { 0.0 } else { r.random_range(0.0..1.0) })
            .collect();
        let mut x = vec![0.0; b.len()];
        f.solve(&b, &mut x).unwrap();
        prop_assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn factor_solve_matches_dense(seed in any::<u64>()) {
        let (op, c) = directional(seed, false);
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        let mut r = rng(seed.wrapping_add(3));
        let b: Vec<f64> = (0..f.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; b.len()];
        f.solve(&b, &mut x).unwrap();
        let d = dense_solve(&op, c, &b);
        prop_assert!(max_abs_diff(&x, &d) <= 1e-10 * max_abs(&d).max(1e-300));
    }

    #[test]
    fn permuted_and_strided_paths_agree(seed in any::<u64>()) {
        let (op, c) = directional(seed | 1, false);
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        let mut r = rng(seed);
        let b: Vec<f64> = (0..f.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let (mut x, mut y) = (vec![0.0; b.len()], vec![0.0; b.len()]);
        f.solve(&b, &mut x).unwrap();
        f.solve_strided(&b, &mut y).unwrap();
        prop_assert!(max_abs_diff(&x, &y) <= 1e-14 * max_abs(&x).max(1e-300));
    }
}

#[test]
fn round_trip_through_the_operator() {
    for seed in 0..50 {
        let (op, c) = directional(seed, false);
        let n = op.diag().len();
        let mut r = rng(seed + 100);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut ax = vec![0.0; n];
        op.apply(&x, &mut ax).unwrap();
        let rhs: Vec<f64> = x.iter().zip(&ax).map(|(x, a)| x - c * a).collect();
        let f = TridiagonalFactors::factor(&op, c).unwrap();
        let mut back = vec![0.0; n];
        f.solve(&rhs, &mut back).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-12 * (1.0 + c), "seed {seed}");
    }
}

#[test]
fn banded_and_krylov_match_dense_full_system() {
    let shape = GridShape::new(7, 6);
    let op = canonical_op(shape, &positive(shape, 77));
    let n = shape.len();
    let c = 5.0;
    let b = positive(shape, 78);
    let m = DMatrix::<f64>::identity(n, n) - op.to_dense() * c;
    let dense = m.lu().solve(&DVector::from_column_slice(&b)).unwrap();

    let lu = BandedLu::factor_shifted(&op, c, DEFAULT_BANDED_CAP).unwrap();
    let mut x = vec![0.0; n];
    lu.solve(&b, &mut x).unwrap();
    assert!(max_abs_diff(&x, dense.as_slice()) < 1e-12);

    let sol = bicgstab(
        |x, y| {
            op.apply(x, y).unwrap();
            for (yk, xk) in y.iter_mut().zip(x) {
                *yk = xk - c * *yk;
            }
        },
        &b,
        1e-12,
        10_000,
        None,
    )
    .unwrap();
    assert!(sol.converged());
    assert!(max_abs_diff(&sol.x, dense.as_slice()) < 1e-9);
}
