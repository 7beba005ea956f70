use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pnm;
use crate::sum::{compensated_sum, compensated_sum_sq};

/// Default additive offset used to make images strictly positive: one 8-bit
/// quantum.
pub const DEFAULT_POSITIVITY_OFFSET: f64 = 1.0 / 255.0;

/// Pixel grid dimensions. `nx` counts columns (x), `ny` rows (y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0, "grid dimensions must be positive");
        Self { nx, ny }
    }

    /// Number of pixels, `N = nx·ny`.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of pixel `(i, j)`, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

/// A 1- or 3-channel image with real-valued samples, nominally in `[0, 1]`.
///
/// `offset` records any shift applied by [`Image::ensure_positive`] so it can
/// be removed again before output.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: GridShape,
    channels: Vec<Vec<f64>>,
    offset: f64,
}

impl Image {
    pub fn new(shape: GridShape, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::InvalidImage(format!(
                "expected 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != shape.len()) {
            return Err(Error::InvalidImage(format!(
                "channel {c} has {} values, grid {shape} needs {}",
                channels[c].len(),
                shape.len()
            )));
        }
        Ok(Self {
            shape,
            channels,
            offset: 0.0,
        })
    }

    pub fn gray(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, vec![data])
    }

    pub fn constant(shape: GridShape, num_channels: usize, value: f64) -> Result<Self> {
        Self::new(shape, vec![vec![value; shape.len()]; num_channels])
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.nx
    }

    pub fn height(&self) -> usize {
        self.shape.ny
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> Result<&[f64]> {
        self.channels
            .get(c)
            .map(Vec::as_slice)
            .ok_or(Error::ChannelOutOfRange {
                channel: c,
                channels: self.channels.len(),
            })
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.channels.iter().map(Vec::as_slice)
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Offset added by [`Image::ensure_positive`] (0 if never applied).
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub(crate) fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Shift every value by `eps > 0`, accumulating the shift in the offset
    /// metadata.
    pub fn ensure_positive(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidOffset(eps));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| c.iter().map(|v| v + eps).collect())
            .collect();
        Ok(Self {
            shape: self.shape,
            channels,
            offset: self.offset + eps,
        })
    }

    /// Subtract the recorded positivity offset.
    pub fn without_offset(&self) -> Self {
        let off = self.offset;
        Self {
            shape: self.shape,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|v| v - off).collect())
                .collect(),
            offset: 0.0,
        }
    }

    /// Average gray value of one channel.
    pub fn mean_value(&self, channel: usize) -> Result<f64> {
        Ok(mean(self.channel(channel)?))
    }

    pub fn min_value(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn from_raster(r: &pnm::Raster) -> Self {
        let shape = GridShape::new(r.width, r.height);
        let scale = 1.0 / f64::from(r.maxval);
        let channels = (0..r.channels)
            .map(|c| {
                r.samples[c..]
                    .iter()
                    .step_by(r.channels)
                    .map(|&s| f64::from(s) * scale)
                    .collect()
            })
            .collect();
        Self {
            shape,
            channels,
            offset: 0.0,
        }
    }

    /// Clamp to `[0, 1]` and quantize to 8 bits, interleaved.
    pub fn to_u8_samples(&self) -> Vec<u8> {
        let nc = self.channels.len();
        let mut out = vec![0u8; self.shape.len() * nc];
        for (c, data) in self.channels.iter().enumerate() {
            for (k, &v) in data.iter().enumerate() {
                out[k * nc + c] = quantize(v);
            }
        }
        out
    }

    /// Read a PGM/PPM file, scaling samples by `1/maxval`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_raster(&pnm::read(path)?))
    }

    /// Write as binary 8-bit PGM/PPM. Values are clamped to `[0, 1]`; the
    /// positivity offset is NOT removed here.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = pnm::encode_u8(
            self.shape.nx,
            self.shape.ny,
            self.channels.len(),
            &self.to_u8_samples(),
        );
        fs::write(path, bytes).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn mean(data: &[f64]) -> f64 {
    compensated_sum(data) / data.len() as f64
}

pub(crate) fn rms(data: impl Iterator<Item = f64>, n: usize) -> f64 {
    (compensated_sum_sq(data) / n as f64).sqrt()
}

/// Relative RMS error `rms(u − ū) / rms(ū)`, pooled over all channels.
pub fn rrmse(u: &Image, reference: &Image) -> Result<f64> {
    if u.shape != reference.shape || u.num_channels() != reference.num_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} ({} ch) vs reference {} ({} ch)",
            u.shape,
            u.num_channels(),
            reference.shape,
            reference.num_channels()
        )));
    }
    let a: Vec<f64> = u.channels.iter().flatten().copied().collect();
    let b: Vec<f64> = reference.channels.iter().flatten().copied().collect();
    rrmse_slices(&a, &b)
}

/// [`rrmse`] on raw vectors.
pub fn rrmse_slices(u: &[f64], reference: &[f64]) -> Result<f64> {
    if u.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            found: u.len(),
        });
    }
    let n = u.len();
    let denom = rms(reference.iter().copied(), n);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = rms(u.iter().zip(reference).map(|(a, b)| a - b), n);
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(nx: usize, ny: usize, data: Vec<f64>) -> Image {
        Image::gray(GridShape::new(nx, ny), data).unwrap()
    }

    #[test]
    fn loads_ascii_pgm_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, "P2\n2 2\n255\n0 128 255 64\n").unwrap();
        let img = Image::load(&p).unwrap();
        assert_eq!(img.shape(), GridShape::new(2, 2));
        assert_eq!(
            img.channel(0).unwrap(),
            &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]
        );
    }

    #[test]
    fn loads_binary_ppm_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        fs::write(&p, b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        let img = Image::load(&p).unwrap();
        assert_eq!(img.num_channels(), 3);
        assert_eq!(img.channel(0).unwrap(), &[1.0]);
        assert_eq!(img.channel(1).unwrap(), &[0.0]);
        assert_eq!(img.channel(2).unwrap(), &[0.0]);
    }

    #[test]
    fn unsupported_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pam");
        fs::write(&p, "P7\n").unwrap();
        assert!(matches!(
            Image::load(&p),
            Err(Error::Pnm(pnm::PnmError::UnsupportedMagic(_)))
        ));
    }

    #[test]
    fn save_clamps() {
        let img = gray(3, 1, vec![1.5, -0.1, 0.5]);
        assert_eq!(img.to_u8_samples(), vec![255, 0, 128]);
    }

    #[test]
    fn save_to_missing_dir_fails() {
        let img = gray(1, 1, vec![0.5]);
        assert!(matches!(
            img.save("/nonexistent-dir/x/y.pgm"),
            Err(Error::Write { .. })
        ));
    }

    #[test]
    fn ensure_positive_shifts() {
        let img = gray(2, 1, vec![0.0, 0.5]);
        let eps = 1.0 / 255.0;
        let p = img.ensure_positive(eps).unwrap();
        assert_eq!(p.channel(0).unwrap(), &[eps, 0.5 + eps]);
        assert_eq!(p.offset(), eps);
        assert_eq!(p.without_offset().channel(0).unwrap(), &[0.0, 0.5]);
        assert!(matches!(
            img.ensure_positive(0.0),
            Err(Error::InvalidOffset(_))
        ));
        assert!(img.ensure_positive(-1.0).is_err());
    }

    #[test]
    fn mean_values() {
        assert_eq!(gray(3, 1, vec![0.25; 3]).mean_value(0).unwrap(), 0.25);
        assert_eq!(gray(2, 1, vec![1.0, 3.0]).mean_value(0).unwrap(), 2.0);
        assert!(matches!(
            gray(1, 1, vec![1.0]).mean_value(1),
            Err(Error::ChannelOutOfRange { .. })
        ));
    }

    #[test]
    fn rrmse_cases() {
        let r = gray(2, 1, vec![1.0, 3.0]);
        assert_eq!(rrmse(&r, &r).unwrap(), 0.0);
        let twice = gray(2, 1, vec![2.0, 6.0]);
        assert!((rrmse(&twice, &r).unwrap() - 1.0).abs() < 1e-15);
        let u = gray(2, 1, vec![1.0, 1.0]);
        let expected = 2f64.sqrt() / 5f64.sqrt();
        assert!((rrmse(&u, &r).unwrap() - expected).abs() < 1e-15);

        assert!(matches!(
            rrmse(&u, &gray(1, 2, vec![1.0, 3.0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            rrmse(&u, &gray(2, 1, vec![0.0, 0.0])),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn rejects_bad_channel_counts() {
        let s = GridShape::new(2, 2);
        assert!(Image::new(s, vec![vec![0.0; 4]; 2]).is_err());
        assert!(Image::new(s, vec![vec![0.0; 3]]).is_err());
    }

    proptest! {
        #[test]
        fn ensure_positive_min_is_positive(
            data in proptest::collection::vec(0.0f64..1.0, 1..64),
            eps in 1e-6f64..0.1,
        ) {
            let img = gray(data.len(), 1, data);
            let p = img.ensure_positive(eps).unwrap();
            prop_assert!(p.min_value() > 0.0);
        }

        #[test]
        fn rrmse_is_scale_covariant(
            pairs in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..50),
            alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            let n = pairs.len();
            let u: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let base = rrmse_slices(&u, &r).unwrap();
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let sr: Vec<f64> = r.iter().map(|x| x * alpha).collect();
            let scaled = rrmse_slices(&su, &sr).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-14 * base.max(f64::MIN_POSITIVE), "{n}: {base} vs {scaled}");
        }

        #[test]
        fn eight_bit_round_trip_is_bit_exact(
            (w, h, samples) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h * 3))
            }),
            color in any::<bool>(),
        ) {
            let nc = if color { 3 } else { 1 };
            let samples = &samples[..w * h * nc];
            let bytes = pnm::encode_u8(w, h, nc, samples);
            let img = Image::from_raster(&pnm::decode(&bytes).unwrap());
            prop_assert_eq!(img.to_u8_samples(), samples.to_vec());
        }
    }
}
