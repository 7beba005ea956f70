use crate::image::GridShape;

/// Reordering between x-fastest (natural) and y-fastest pixel orderings.
///
/// Under the y-fastest ordering the y-direction operator is block
/// tridiagonal with bandwidth one, which is what a reverse Cuthill–McKee
/// ordering of `A2` would find on a regular grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPermutation {
    shape: GridShape,
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl GridPermutation {
    pub fn transpose(shape: GridShape) -> Self {
        let n = shape.len();
        let mut forward = vec![0; n];
        let mut inverse = vec![0; n];
        for j in 0..shape.ny {
            for i in 0..shape.nx {
                let natural = j * shape.nx + i;
                let transposed = i * shape.ny + j;
                forward[natural] = transposed;
                inverse[transposed] = natural;
            }
        }
        Self {
            shape,
            forward,
            inverse,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// `forward[natural] = transposed`.
    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    /// `inverse[transposed] = natural`.
    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Reorder a natural-order vector into y-fastest order.
    pub fn permute(&self, natural: &[f64], out: &mut [f64]) {
        debug_assert!(natural.len() == self.forward.len() && out.len() == natural.len());
        let GridShape { nx, ny } = self.shape;
        transpose_tiled(natural, out, ny, nx);
    }

    /// Inverse of [`GridPermutation::permute`].
    pub fn unpermute(&self, transposed: &[f64], out: &mut [f64]) {
        debug_assert!(transposed.len() == self.forward.len() && out.len() == transposed.len());
        let GridShape { nx, ny } = self.shape;
        transpose_tiled(transposed, out, nx, ny);
    }
}

const TILE: usize = 8;

/// `dst[c·rows + r] = src[r·cols + c]` for a `rows × cols` row-major `src`,
/// in square tiles so both sides stay in cache on large grids.
fn transpose_tiled(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    for r0 in (0..rows).step_by(TILE) {
        let r1 = (r0 + TILE).min(rows);
        for c0 in (0..cols).step_by(TILE) {
            let c1 = (c0 + TILE).min(cols);
            for r in r0..r1 {
                let row = &src[r * cols..(r + 1) * cols];
                for c in c0..c1 {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}
