//! Fixtures shared by the criterion benches.

use osmosis::validation::benchmark_pair;
use osmosis::{DriftField, GridShape, SplitOperator};

/// Square grids used for the per-step scaling runs.
pub const SIDES: [usize; 4] = [32, 64, 128, 256];

/// Operator of the synthetic bump on an `n × n` grid, with the constant
/// initial image.
pub fn bump_operator(n: usize) -> (SplitOperator, Vec<f64>) {
    let shape = GridShape::new(n, n);
    let (f, v) = benchmark_pair(shape);
    let drift = DriftField::canonical(shape, &v, 1.0).expect("bump is positive");
    (SplitOperator::assemble(&drift), f)
}
