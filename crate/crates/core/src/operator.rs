//! Drift fields and the direction-split osmosis operator `A = A1 + A2`.
//!
//! Every pixel pair `(p, q)` sharing an interior edge exchanges the flux
//!
//! ```text
//!   F = (u_q − u_p)/h² − d_e·(u_q + u_p)/(2h)
//! ```
//!
//! with `u_p' += F` and `u_q' −= F`. Edges on the image border carry no flux,
//! which realizes the no-flux boundary condition and gives every column of
//! `A` a zero sum.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::GridShape;
use crate::linalg::GridPermutation;

/// Staggered drift samples.
///
/// `d1` lives on vertical cell edges: `d1[j·(nx+1) + e]` is the drift across
/// the edge left of pixel `(e, j)`, for `e ∈ 0..=nx`. `d2` lives on
/// horizontal edges: `d2[e·nx + i]` is the edge above pixel `(i, e)`, for
/// `e ∈ 0..=ny`. Border edges (`e = 0` or `e = n`) are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    shape: GridShape,
    h: f64,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl DriftField {
    pub fn zeros(shape: GridShape, h: f64) -> Result<Self> {
        check_spacing(h)?;
        Ok(Self {
            shape,
            h,
            d1: vec![0.0; (shape.nx + 1) * shape.ny],
            d2: vec![0.0; shape.nx * (shape.ny + 1)],
        })
    }

    /// Build from explicit edge arrays. Border entries must be zero.
    pub fn from_parts(shape: GridShape, h: f64, d1: Vec<f64>, d2: Vec<f64>) -> Result<Self> {
        check_spacing(h)?;
        let (n1, n2) = ((shape.nx + 1) * shape.ny, shape.nx * (shape.ny + 1));
        if d1.len() != n1 || d2.len() != n2 {
            return Err(Error::DimensionMismatch(format!(
                "drift arrays {}/{} for grid {shape}, expected {n1}/{n2}",
                d1.len(),
                d2.len()
            )));
        }
        let field = Self { shape, h, d1, d2 };
        let border_ok = (0..shape.ny)
            .all(|j| field.d1(0, j) == 0.0 && field.d1(shape.nx, j) == 0.0)
            && (0..shape.nx).all(|i| field.d2(i, 0) == 0.0 && field.d2(i, shape.ny) == 0.0);
        if !border_ok {
            return Err(Error::InvalidParameter(
                "drift must vanish on border edges".into(),
            ));
        }
        if let Some(v) = field.d1.iter().chain(&field.d2).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite drift {v}")));
        }
        Ok(field)
    }

    /// Drift encoding the reference image `v`, sampled so that `v` is an exact
    /// discrete steady state:
    ///
    /// ```text
    ///   d_{i+1/2} = 2 (v_{i+1} − v_i) / (h (v_{i+1} + v_i))
    /// ```
    ///
    /// which makes the edge flux vanish identically at `u = v`.
    pub fn canonical(shape: GridShape, v: &[f64], h: f64) -> Result<Self> {
        if v.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                found: v.len(),
            });
        }
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
            return Err(Error::NonPositive { index, value });
        }
        let mut field = Self::zeros(shape, h)?;
        let (nx, ny) = (shape.nx, shape.ny);
        let sample = |a: f64, b: f64| 2.0 * (b - a) / (h * (a + b));
        for j in 0..ny {
            for e in 1..nx {
                let (a, b) = (v[shape.index(e - 1, j)], v[shape.index(e, j)]);
                field.d1[j * (nx + 1) + e] = sample(a, b);
            }
        }
        for e in 1..ny {
            for i in 0..nx {
                let (a, b) = (v[shape.index(i, e - 1)], v[shape.index(i, e)]);
                field.d2[e * nx + i] = sample(a, b);
            }
        }
        Ok(field)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Drift across the vertical edge left of pixel `(e, j)`.
    #[inline]
    pub fn d1(&self, e: usize, j: usize) -> f64 {
        self.d1[j * (self.shape.nx + 1) + e]
    }

    /// Drift across the horizontal edge above pixel `(i, e)`.
    #[inline]
    pub fn d2(&self, i: usize, e: usize) -> f64 {
        self.d2[e * self.shape.nx + i]
    }

    pub fn d1_values(&self) -> &[f64] {
        &self.d1
    }

    pub fn d2_values(&self) -> &[f64] {
        &self.d2
    }

    pub fn max_abs(&self) -> f64 {
        self.d1
            .iter()
            .chain(&self.d2)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy with the drift zeroed on every masked edge.
    pub fn masked(&self, mask: &EdgeMask) -> Result<Self> {
        if mask.shape != self.shape {
            return Err(Error::DimensionMismatch(format!(
                "edge mask for {} applied to drift on {}",
                mask.shape, self.shape
            )));
        }
        let zero_where = |d: &[f64], m: &[bool]| -> Vec<f64> {
            d.iter()
                .zip(m)
                .map(|(&v, &masked)| if masked { 0.0 } else { v })
                .collect()
        };
        Ok(Self {
            shape: self.shape,
            h: self.h,
            d1: zero_where(&self.d1, &mask.d1),
            d2: zero_where(&self.d2, &mask.d2),
        })
    }
}

fn check_spacing(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "grid spacing must be positive, got {h}"
        )))
    }
}

/// Per-edge boolean mask laid out like [`DriftField`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    shape: GridShape,
    d1: Vec<bool>,
    d2: Vec<bool>,
}

impl EdgeMask {
    pub fn empty(shape: GridShape) -> Self {
        Self {
            shape,
            d1: vec![false; (shape.nx + 1) * shape.ny],
            d2: vec![false; shape.nx * (shape.ny + 1)],
        }
    }

    pub fn full(shape: GridShape) -> Self {
        Self {
            shape,
            d1: vec![true; (shape.nx + 1) * shape.ny],
            d2: vec![true; shape.nx * (shape.ny + 1)],
        }
    }

    pub fn from_parts(shape: GridShape, d1: Vec<bool>, d2: Vec<bool>) -> Result<Self> {
        if d1.len() != (shape.nx + 1) * shape.ny || d2.len() != shape.nx * (shape.ny + 1) {
            return Err(Error::DimensionMismatch(format!(
                "edge mask arrays {}/{} for grid {shape}",
                d1.len(),
                d2.len()
            )));
        }
        Ok(Self { shape, d1, d2 })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn set_d1(&mut self, e: usize, j: usize, masked: bool) {
        self.d1[j * (self.shape.nx + 1) + e] = masked;
    }

    pub fn set_d2(&mut self, i: usize, e: usize, masked: bool) {
        self.d2[e * self.shape.nx + i] = masked;
    }

    pub fn d1(&self, e: usize, j: usize) -> bool {
        self.d1[j * (self.shape.nx + 1) + e]
    }

    pub fn d2(&self, i: usize, e: usize) -> bool {
        self.d2[e * self.shape.nx + i]
    }

    pub fn count(&self) -> usize {
        self.d1.iter().chain(&self.d2).filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X,
    Y,
}

/// One directional part of the split operator, stored as independent
/// tridiagonal blocks.
///
/// Diagonals are kept in *block order*: for [`Direction::X`] that is the
/// natural x-fastest order (one block per row); for [`Direction::Y`] it is the
/// y-fastest order produced by [`GridPermutation`] (one block per column).
/// `lower[k]` couples row `k` to `k−1` and is zero at block starts; `upper[k]`
/// couples `k` to `k+1` and is zero at block ends.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalOperator {
    direction: Direction,
    shape: GridShape,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Y only: `[lower, diag, upper]` in natural order, so the strided
    /// product walks memory contiguously.
    natural: Option<[Vec<f64>; 3]>,
}

impl DirectionalOperator {
    pub fn assemble(drift: &DriftField, direction: Direction) -> Self {
        let shape = drift.shape;
        let h = drift.h;
        let (block_len, n_blocks) = match direction {
            Direction::X => (shape.nx, shape.ny),
            Direction::Y => (shape.ny, shape.nx),
        };
        let inv_h2 = 1.0 / (h * h);
        let n = shape.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for b in 0..n_blocks {
            let base = b * block_len;
            for k in 1..block_len {
                // Interior edge between block positions k−1 and k.
                let d = match direction {
                    Direction::X => drift.d1(k, b),
                    Direction::Y => drift.d2(b, k),
                };
                upper[base + k - 1] = inv_h2 - d / (2.0 * h);
                lower[base + k] = inv_h2 + d / (2.0 * h);
            }
            // Diagonal as negated column-partner sum, so columns sum to zero.
            for k in 0..block_len {
                let above = if k > 0 { upper[base + k - 1] } else { 0.0 };
                let below = if k + 1 < block_len {
                    lower[base + k + 1]
                } else {
                    0.0
                };
                diag[base + k] = -(above + below);
            }
        }
        let natural = match direction {
            Direction::X => None,
            Direction::Y => {
                let perm = GridPermutation::transpose(shape);
                Some([&lower, &diag, &upper].map(|b| {
                    let mut out = vec![0.0; n];
                    perm.unpermute(b, &mut out);
                    out
                }))
            }
        };
        Self {
            direction,
            shape,
            lower,
            diag,
            upper,
            natural,
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn block_len(&self) -> usize {
        match self.direction {
            Direction::X => self.shape.nx,
            Direction::Y => self.shape.ny,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.shape.len() / self.block_len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Natural linear index of block position `k`.
    #[inline]
    pub fn natural_index(&self, k: usize) -> usize {
        match self.direction {
            Direction::X => k,
            Direction::Y => {
                let (i, j) = (k / self.shape.ny, k % self.shape.ny);
                self.shape.index(i, j)
            }
        }
    }

    /// `out = alpha·u + beta·(A·u)` with both vectors in block order.
    pub fn affine_blocks(&self, alpha: f64, beta: f64, u: &[f64], out: &mut [f64]) {
        let n = self.diag.len();
        debug_assert!(u.len() == n && out.len() == n);
        for k in 0..n {
            let mut au = self.diag[k] * u[k];
            if k > 0 {
                au += self.lower[k] * u[k - 1];
            }
            if k + 1 < n {
                au += self.upper[k] * u[k + 1];
            }
            out[k] = alpha * u[k] + beta * au;
        }
    }

    /// `out = A·u` with `u` and `out` in natural (x-fastest) order.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.shape.len(), u.len())?;
        check_len(self.shape.len(), out.len())?;
        match self.direction {
            Direction::X => self.affine_blocks(0.0, 1.0, u, out),
            Direction::Y => self.apply_y_natural::<false>(u, out),
        }
        Ok(())
    }

    /// Y-direction product evaluated directly on the x-fastest layout
    /// (stride `nx`), with no permutation. `ADD` accumulates into `out`.
    fn apply_y_natural<const ADD: bool>(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.shape.nx;
        let [lower, diag, upper] = self
            .natural
            .as_ref()
            .expect("y operator keeps natural copies");
        let n = u.len();
        for l in 0..n {
            let mut au = diag[l] * u[l];
            if l >= nx {
                au += lower[l] * u[l - nx];
            }
            if l + nx < n {
                au += upper[l] * u[l + nx];
            }
            if ADD {
                out[l] += au;
            } else {
                out[l] = au;
            }
        }
    }

    /// Nonzero entries `(row, col, value)` in natural ordering, diagonal
    /// included even when zero.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.diag.len();
        let bl = self.block_len();
        let mut out = Vec::with_capacity(3 * n);
        for k in 0..n {
            let row = self.natural_index(k);
            if k % bl != 0 {
                out.push((row, self.natural_index(k - 1), self.lower[k]));
            }
            out.push((row, row, self.diag[k]));
            if (k + 1) % bl != 0 {
                out.push((row, self.natural_index(k + 1), self.upper[k]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.shape.len();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// The full split operator `A = A1 + A2` plus the permutation that makes `A2`
/// tridiagonal.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    pub a1: DirectionalOperator,
    pub a2: DirectionalOperator,
    pub perm: GridPermutation,
}

impl SplitOperator {
    pub fn assemble(drift: &DriftField) -> Self {
        Self {
            a1: DirectionalOperator::assemble(drift, Direction::X),
            a2: DirectionalOperator::assemble(drift, Direction::Y),
            perm: GridPermutation::transpose(drift.shape),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.a1.shape
    }

    pub fn len(&self) -> usize {
        self.a1.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = A1·u + A2·u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.len(), u.len())?;
        check_len(self.len(), out.len())?;
        self.a1.affine_blocks(0.0, 1.0, u, out);
        self.a2.apply_y_natural::<true>(u, out);
        Ok(())
    }

    /// Diagonal of the unsplit operator, natural order.
    pub fn full_diagonal(&self) -> Vec<f64> {
        let mut d = self.a1.diag.clone();
        for (k, v) in self.a2.diag.iter().enumerate() {
            d[self.a2.natural_index(k)] += v;
        }
        d
    }

    /// `max |a_ii|` over the unsplit operator.
    pub fn max_abs_diag(&self) -> f64 {
        self.full_diagonal().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.a1.to_dense() + self.a2.to_dense()
    }

    /// Write `A` in coordinate format, one `row col value` line per entry,
    /// 1-based indices.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        let mut entries = self.a1.triplets();
        entries.extend(self.a2.triplets());
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        for (r, c, v) in merged {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}
