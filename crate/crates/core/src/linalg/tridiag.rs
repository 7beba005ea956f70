use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GridShape;
use crate::linalg::GridPermutation;
use crate::operator::{check_len, Direction, DirectionalOperator};

const LANES: usize = 4;

/// Pivot-free LU factors of `I − c·A_i` for every tridiagonal block of a
/// [`DirectionalOperator`].
///
/// Computed once per time-step size and reused for every substitution.
#[derive(Debug, Clone)]
pub struct TridiagonalFactors {
    direction: Direction,
    shape: GridShape,
    shift: f64,
    block_len: usize,
    /// `l_k` with `L = I + sub(l)`, zero at block starts.
    multipliers: Vec<f64>,
    /// Diagonal of `U`.
    pivots: Vec<f64>,
    inv_pivots: Vec<f64>,
    /// Superdiagonal of `U` (equal to that of `I − cA`).
    upper: Vec<f64>,
    perm: Option<GridPermutation>,
}

impl TridiagonalFactors {
    /// Factor `I − shift·A` block by block. Cost O(N).
    pub fn factor(op: &DirectionalOperator, shift: f64) -> Result<Self> {
        if !(shift > 0.0) || !shift.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "factor shift must be positive, got {shift}"
            )));
        }
        let n = op.diag().len();
        let bl = op.block_len();
        let mut multipliers = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        let upper: Vec<f64> = op.upper().iter().map(|u| -shift * u).collect();
        for start in (0..n).step_by(bl) {
            for k in start..start + bl {
                let main = 1.0 - shift * op.diag()[k];
                let pivot = if k == start {
                    main
                } else {
                    let l = -shift * op.lower()[k] / pivots[k - 1];
                    multipliers[k] = l;
                    main - l * upper[k - 1]
                };
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(Error::SingularPivot {
                        row: op.natural_index(k),
                        pivot,
                    });
                }
                pivots[k] = pivot;
            }
        }
        let perm = match op.direction() {
            Direction::X => None,
            Direction::Y => Some(GridPermutation::transpose(op.shape())),
        };
        let inv_pivots = pivots.iter().map(|p| 1.0 / p).collect();
        Ok(Self {
            direction: op.direction(),
            shape: op.shape(),
            shift,
            block_len: bl,
            multipliers,
            pivots,
            inv_pivots,
            upper,
            perm,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivots.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Forward and back substitution on a vector in block order.
    pub fn solve_blocks_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.pivots.len());
        for (g, chunk) in x.chunks_mut(LANES * self.block_len).enumerate() {
            self.solve_group(chunk, g * LANES);
        }
    }

    /// [`TridiagonalFactors::solve_blocks_in_place`] with groups of blocks
    /// spread over the rayon pool. Blocks never interact, so the result is
    /// bit-identical to the serial version.
    pub fn par_solve_blocks_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.pivots.len());
        x.par_chunks_mut(LANES * self.block_len)
            .enumerate()
            .for_each(|(g, chunk)| self.solve_group(chunk, g * LANES));
    }

    /// `chunk` holds whole blocks starting at block `first`.
    fn solve_group(&self, chunk: &mut [f64], first: usize) {
        let bl = self.block_len;
        if chunk.len() == LANES * bl {
            self.solve_lanes::<LANES>(chunk, first);
        } else {
            for (b, block) in chunk.chunks_exact_mut(bl).enumerate() {
                self.solve_lanes::<1>(block, first + b);
            }
        }
    }

    // Substitution is a serial dependency chain within a block; sweeping
    // several blocks in lockstep lets their chains overlap.
    fn solve_lanes<const L: usize>(&self, x: &mut [f64], first: usize) {
        let bl = self.block_len;
        let n = L * bl;
        let base = first * bl;
        let l = &self.multipliers[base..base + n];
        let u = &self.upper[base..base + n];
        let r = &self.inv_pivots[base..base + n];
        for k in 1..bl {
            for lane in 0..L {
                let i = lane * bl + k;
                x[i] -= l[i] * x[i - 1];
            }
        }
        for lane in 0..L {
            let i = lane * bl + bl - 1;
            x[i] *= r[i];
        }
        for k in (0..bl - 1).rev() {
            for lane in 0..L {
                let i = lane * bl + k;
                x[i] = (x[i] - u[i] * x[i + 1]) * r[i];
            }
        }
    }

    /// Solve `(I − cA)·x = rhs` with vectors in natural order. Y-direction
    /// factors go through the transpose permutation so every block is
    /// contiguous.
    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), rhs.len())?;
        check_len(self.len(), out.len())?;
        match &self.perm {
            None => {
                out.copy_from_slice(rhs);
                self.solve_blocks_in_place(out);
            }
            Some(perm) => {
                let mut work = vec![0.0; rhs.len()];
                perm.permute(rhs, &mut work);
                self.solve_blocks_in_place(&mut work);
                perm.unpermute(&work, out);
            }
        }
        Ok(())
    }

    /// Same as [`TridiagonalFactors::solve`] but walks each block with a
    /// stride on the natural layout instead of permuting.
    pub fn solve_strided(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), rhs.len())?;
        check_len(self.len(), out.len())?;
        let GridShape { nx, ny } = self.shape;
        let (n_blocks, bl, stride, block_step) = match self.direction {
            Direction::X => (ny, nx, 1, nx),
            Direction::Y => (nx, ny, nx, 1),
        };
        out.copy_from_slice(rhs);
        for b in 0..n_blocks {
            let base = b * block_step;
            let fb = b * bl;
            let at = |k: usize| base + k * stride;
            for k in 1..bl {
                out[at(k)] -= self.multipliers[fb + k] * out[at(k - 1)];
            }
            out[at(bl - 1)] *= self.inv_pivots[fb + bl - 1];
            for k in (0..bl - 1).rev() {
                out[at(k)] =
                    (out[at(k)] - self.upper[fb + k] * out[at(k + 1)]) * self.inv_pivots[fb + k];
            }
        }
        Ok(())
    }
}
