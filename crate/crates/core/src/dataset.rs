//! Images, datasets, rotations and unsupervised triplet construction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Error, Result};

/// Image dimensions: height × width × channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub const MNIST: Dims = Dims { height: 28, width: 28, channels: 1 };
    pub const CIFAR10: Dims = Dims { height: 32, width: 32, channels: 3 };

    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image with pixels in `[0, 1]`, stored row-major as `H × W × C`
/// (channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub pixels: Vec<f64>,
    pub dims: Dims,
    /// Class id; only the evaluation code looks at it.
    pub label: Option<u32>,
    pub index: usize,
}

impl ImageSample {
    pub fn new(pixels: Vec<f64>, dims: Dims, label: Option<u32>, index: usize) -> Result<Self> {
        if pixels.len() != dims.len() {
            return Err(shape_err!(
                "{} pixels do not fill a {}x{}x{} image",
                pixels.len(),
                dims.height,
                dims.width,
                dims.channels
            ));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(config_err!("pixel value {p} outside [0, 1]"));
        }
        Ok(Self { pixels, dims, label, index })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.dims.width + x) * self.dims.channels + c]
    }
}

/// An ordered, immutable collection of same-sized images indexed `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dims: Dims,
    samples: Vec<ImageSample>,
}

impl Dataset {
    /// Validates that every sample has `dims` and that indices run `0..len`.
    pub fn new(name: impl Into<String>, dims: Dims, samples: Vec<ImageSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.dims != dims || s.pixels.len() != dims.len() {
                return Err(shape_err!("sample {i} does not match dataset dims {dims:?}"));
            }
            if s.index != i {
                return Err(config_err!("sample at position {i} carries index {}", s.index));
            }
        }
        Ok(Self { name: name.into(), dims, samples })
    }

    /// Builds a dataset from raw pixel vectors, assigning indices in order.
    pub fn from_pixels(
        name: impl Into<String>,
        dims: Dims,
        images: Vec<Vec<f64>>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(shape_err!("{} labels for {} images", l.len(), images.len()));
            }
        }
        let samples = images
            .into_iter()
            .enumerate()
            .map(|(i, px)| ImageSample::new(px, dims, labels.as_ref().map(|l| l[i]), i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, dims, samples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn get(&self, index: usize) -> Option<&ImageSample> {
        self.samples.get(index)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.label.is_some())
    }

    /// The first `n` samples (or all of them) as a new dataset.
    pub fn take(&self, n: usize) -> Dataset {
        Dataset { name: self.name.clone(), dims: self.dims, samples: self.samples.iter().take(n).cloned().collect() }
    }

    /// Samples at the given positions, re-indexed `0..positions.len()`.
    pub fn select(&self, positions: &[usize]) -> Result<Dataset> {
        let mut samples = Vec::with_capacity(positions.len());
        for (i, &p) in positions.iter().enumerate() {
            let s = self
                .samples
                .get(p)
                .ok_or_else(|| config_err!("position {p} out of range for {} samples", self.len()))?;
            samples.push(ImageSample { index: i, ..s.clone() });
        }
        Ok(Dataset { name: self.name.clone(), dims: self.dims, samples })
    }
}

/// Rotation angles (degrees) used to build positives.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct RotationConfig {
    degrees: Vec<f64>,
}

impl RotationConfig {
    pub fn new(degrees: Vec<f64>) -> Result<Self> {
        let cfg = Self { degrees };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(config_err!("rotation set is empty"));
        }
        for &d in &self.degrees {
            // a 0° positive is the anchor itself
            if d == 0.0 || !d.is_finite() || libm::fabs(d) >= 360.0 {
                return Err(config_err!("invalid rotation angle {d}"));
            }
        }
        Ok(())
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self { degrees: vec![-10.0, -5.0, 5.0, 10.0] }
    }
}

/// Rotates an image about its center using bilinear interpolation.
///
/// Positive angles turn the content counter-clockwise as displayed (y axis
/// pointing down). Source coordinates outside the image read as 0, and the
/// result is clamped to `[0, 1]`.
pub fn rotate_image(image: &ImageSample, degrees: f64) -> ImageSample {
    if degrees == 0.0 {
        return image.clone();
    }
    let Dims { height, width, channels } = image.dims;
    let theta = degrees.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;

    let fetch = |y: isize, x: isize, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            0.0
        } else {
            image.at(y as usize, x as usize, c)
        }
    };

    let mut out = vec![0.0; image.pixels.len()];
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: rotate the destination offset by -theta
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = libm::floor(sx);
            let y0 = libm::floor(sy);
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..channels {
                let top = fetch(y0, x0, c) * (1.0 - fx) + fetch(y0, x0 + 1, c) * fx;
                let bottom = fetch(y0 + 1, x0, c) * (1.0 - fx) + fetch(y0 + 1, x0 + 1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(y * width + x) * channels + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    ImageSample { pixels: out, dims: image.dims, label: image.label, index: image.index }
}

/// An (anchor, rotated anchor, random other image) training unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor_index: usize,
    pub positive: ImageSample,
    pub negative_index: usize,
    pub rotation_degrees: f64,
}

/// Draws `count` triplets without looking at labels.
///
/// Anchors walk through successive random permutations of the dataset so every
/// image anchors once per pass. Each positive is the anchor rotated by an angle
/// drawn uniformly from `config`; each negative is drawn uniformly from all
/// other indices.
pub fn sample_triplets(dataset: &Dataset, config: &RotationConfig, seed: u64, count: usize) -> Result<Vec<Triplet>> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientData(alloc::format!("triplets need at least 2 images, dataset has {n}")));
    }
    if count == 0 {
        return Err(config_err!("triplet count must be at least 1"));
    }
    config.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        if cursor == n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let anchor = order[cursor];
        cursor += 1;
        let degrees = config.degrees[rng.random_range(0..config.degrees.len())];
        let mut negative = rng.random_range(0..n - 1);
        if negative >= anchor {
            negative += 1;
        }
        triplets.push(Triplet {
            anchor_index: anchor,
            positive: rotate_image(&dataset.samples[anchor], degrees),
            negative_index: negative,
            rotation_degrees: degrees,
        });
    }
    Ok(triplets)
}
