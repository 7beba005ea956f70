//! Shadow removal: evolve the shadowed image under its own canonical drift
//! with the drift switched off along a user-supplied shadow boundary. The
//! illumination jump across the boundary then diffuses away while the
//! texture elsewhere is held in place by the drift.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GridShape, Image};
use crate::operator::{DriftField, EdgeMask};
use crate::pnm;
use crate::stepper::{evolve, EvolutionReport, SchemeConfig};

/// Pixels marking the shadow boundary, optionally dilated by a square
/// (Chebyshev) radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowMask {
    shape: GridShape,
    dilation: usize,
    marked: Vec<bool>,
}

impl ShadowMask {
    pub fn from_pixels(shape: GridShape, pixels: &[bool], dilation: usize) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                found: pixels.len(),
            });
        }
        let marked = if dilation == 0 {
            pixels.to_vec()
        } else {
            dilate(shape, pixels, dilation)
        };
        Ok(Self {
            shape,
            dilation,
            marked,
        })
    }

    /// Read a PGM mask; samples above 127/255 of maxval mark the boundary.
    pub fn load(path: impl AsRef<Path>, dilation: usize) -> Result<Self> {
        let r = pnm::read(path)?;
        if r.channels != 1 {
            return Err(Error::InvalidImage(
                "mask must be a gray (PGM) image".into(),
            ));
        }
        let maxval = u64::from(r.maxval);
        let pixels: Vec<bool> = r
            .samples
            .iter()
            .map(|&s| u64::from(s) * 255 > 127 * maxval)
            .collect();
        Self::from_pixels(GridShape::new(r.width, r.height), &pixels, dilation)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Whether pixel `(i, j)` is marked after dilation.
    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.marked[self.shape.index(i, j)]
    }

    pub fn marked_count(&self) -> usize {
        self.marked.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.marked_count() == 0
    }

    /// An interior edge is masked iff either adjacent pixel is marked.
    pub fn edge_mask(&self) -> EdgeMask {
        let GridShape { nx, ny } = self.shape;
        let mut m = EdgeMask::empty(self.shape);
        for j in 0..ny {
            for e in 1..nx {
                m.set_d1(e, j, self.is_marked(e - 1, j) || self.is_marked(e, j));
            }
        }
        for e in 1..ny {
            for i in 0..nx {
                m.set_d2(i, e, self.is_marked(i, e - 1) || self.is_marked(i, e));
            }
        }
        m
    }
}

fn dilate(shape: GridShape, pixels: &[bool], r: usize) -> Vec<bool> {
    let GridShape { nx, ny } = shape;
    let mut out = vec![false; pixels.len()];
    for j in 0..ny {
        for i in 0..nx {
            if !pixels[shape.index(i, j)] {
                continue;
            }
            for jj in j.saturating_sub(r)..=(j + r).min(ny - 1) {
                for ii in i.saturating_sub(r)..=(i + r).min(nx - 1) {
                    out[shape.index(ii, jj)] = true;
                }
            }
        }
    }
    out
}

/// Load a mask and check it matches the image it will be applied to.
pub fn load_mask(
    path: impl AsRef<Path>,
    dilation: usize,
    expected: GridShape,
) -> Result<ShadowMask> {
    let mask = ShadowMask::load(path, dilation)?;
    if mask.shape != expected {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}, image is {expected}",
            mask.shape
        )));
    }
    Ok(mask)
}

#[derive(Debug, Clone)]
pub struct ShadowResult {
    /// Osmosis result, before any inpainting; carries the input's offset.
    pub image: Image,
    pub report: EvolutionReport,
    pub masked_edges: usize,
}

/// Remove the shadow outlined by `mask` from the strictly positive image `f`.
pub fn remove_shadow(
    f: &Image,
    mask: &ShadowMask,
    config: &SchemeConfig,
    h: f64,
) -> Result<ShadowResult> {
    if mask.shape != f.shape() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}, image is {}",
            mask.shape,
            f.shape()
        )));
    }
    let edges = mask.edge_mask();
    let drifts = f
        .channels()
        .map(|c| DriftField::canonical(f.shape(), c, h)?.masked(&edges))
        .collect::<Result<Vec<_>>>()?;
    let report = evolve(f, &drifts, config)?;
    Ok(ShadowResult {
        image: report.output.clone(),
        masked_edges: edges.count(),
        report,
    })
}
