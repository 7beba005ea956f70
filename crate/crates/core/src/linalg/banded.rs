use crate::error::{Error, Result};
use crate::operator::{check_len, SplitOperator};

/// Default limit on stored band entries (≈ 400 MB of `f64`).
pub const DEFAULT_BANDED_CAP: usize = 50_000_000;

/// Pivot-free banded LU of the unsplit `I − c·A` in natural ordering.
///
/// `A2` couples pixels `nx` apart, so the half-bandwidth is `nx` and
/// factorization costs O(N·nx²). Only sensible on small grids; this is the
/// direct full-system baseline the ADI schemes are measured against.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    shift: f64,
    /// Row-major band storage, `2·bw + 1` entries per row; entry `(i, j)` is
    /// at `i·(2bw+1) + (j + bw − i)`.
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor_shifted(op: &SplitOperator, shift: f64, cap: usize) -> Result<Self> {
        if !(shift > 0.0) || !shift.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "factor shift must be positive, got {shift}"
            )));
        }
        let shape = op.shape();
        let n = shape.len();
        let bw = if shape.ny > 1 { shape.nx } else { 1 };
        let width = 2 * bw + 1;
        let needed = n.saturating_mul(width);
        if needed > cap {
            return Err(Error::BandedCap { needed, cap });
        }
        let mut band = vec![0.0; needed];
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        for i in 0..n {
            band[at(i, i)] = 1.0;
        }
        for (r, c, v) in op.a1.triplets().into_iter().chain(op.a2.triplets()) {
            band[at(r, c)] -= shift * v;
        }

        for k in 0..n {
            let pivot = band[at(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularPivot { row: k, pivot });
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let lik = band[at(i, k)];
                if lik == 0.0 {
                    continue;
                }
                let l = lik / pivot;
                band[at(i, k)] = l;
                for j in k + 1..=last {
                    band[at(i, j)] -= l * band[at(k, j)];
                }
            }
        }
        Ok(Self { n, bw, shift, band })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, rhs.len())?;
        check_len(self.n, out.len())?;
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        out.copy_from_slice(rhs);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut acc = out[i];
            for j in first..i {
                acc -= self.band[at(i, j)] * out[j];
            }
            out[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + bw).min(n - 1);
            let mut acc = out[i];
            for j in i + 1..=last {
                acc -= self.band[at(i, j)] * out[j];
            }
            out[i] = acc / self.band[at(i, i)];
        }
        Ok(())
    }
}
