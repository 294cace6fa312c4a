//! Packed hash codes, exact Hamming search, and the random-projection LSH
//! baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{config_err, shape_err, Result};
use crate::matrix::FeatureMatrix;
use crate::network::NetworkParams;

/// An `M`-bit code packed little-endian into 64-bit words. Bits at positions
/// `>= M` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashCode {
    words: Vec<u64>,
    bit_width: usize,
}

fn word_count(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl HashCode {
    pub fn zeros(bit_width: usize) -> Self {
        Self { words: vec![0; word_count(bit_width)], bit_width }
    }

    /// Packs a bit vector; bit `i` lands in word `i / 64`, position `i % 64`.
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut code = Self::zeros(bits.len());
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            code.words[i / 64] |= 1 << (i % 64);
        }
        code
    }

    /// Rebuilds a code from packed words, rejecting set padding bits.
    pub fn from_words(words: Vec<u64>, bit_width: usize) -> Result<Self> {
        if words.len() != word_count(bit_width) {
            return Err(shape_err!("{} words cannot hold exactly {bit_width} bits", words.len()));
        }
        let rem = bit_width % 64;
        if rem != 0 && words.last().is_some_and(|w| w >> rem != 0) {
            return Err(config_err!("padding bits beyond position {bit_width} are set"));
        }
        Ok(Self { words, bit_width })
    }

    pub fn bit_width(&self) -> usize {
        self.bit_width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        i < self.bit_width && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.bit_width).map(|i| self.bit(i)).collect()
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Bit `m` is set iff `features[m] > threshold`.
pub fn binarize(features: &[f64], threshold: f64) -> HashCode {
    let mut code = HashCode::zeros(features.len());
    for (i, &f) in features.iter().enumerate() {
        if f > threshold {
            code.words[i / 64] |= 1 << (i % 64);
        }
    }
    code
}

/// Number of differing bits.
pub fn hamming_distance(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.bit_width != b.bit_width {
        return Err(shape_err!("code widths differ: {} vs {}", a.bit_width, b.bit_width));
    }
    Ok(a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Neighbor {
    /// Hamming distance first so the derived ordering is (distance, id).
    pub distance: u32,
    pub id: u64,
}

/// Codes with parallel ids and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeDatabase {
    bit_width: usize,
    codes: Vec<HashCode>,
    ids: Vec<u64>,
    labels: Option<Vec<u32>>,
}

impl CodeDatabase {
    pub fn new(bit_width: usize, codes: Vec<HashCode>, ids: Vec<u64>, labels: Option<Vec<u32>>) -> Result<Self> {
        if codes.len() != ids.len() || labels.as_ref().is_some_and(|l| l.len() != codes.len()) {
            return Err(shape_err!("codes, ids and labels must have equal lengths"));
        }
        if let Some(c) = codes.iter().find(|c| c.bit_width != bit_width) {
            return Err(shape_err!("code of width {} in a {bit_width}-bit database", c.bit_width));
        }
        Ok(Self { bit_width, codes, ids, labels })
    }

    pub fn bit_width(&self) -> usize {
        self.bit_width
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[HashCode] {
        &self.codes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Entries at `positions`, in that order.
    pub fn subset(&self, positions: &[usize]) -> CodeDatabase {
        CodeDatabase {
            bit_width: self.bit_width,
            codes: positions.iter().map(|&p| self.codes[p].clone()).collect(),
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            labels: self.labels.as_ref().map(|l| positions.iter().map(|&p| l[p]).collect()),
        }
    }

    fn check_query(&self, query: &HashCode) -> Result<()> {
        if query.bit_width != self.bit_width {
            return Err(shape_err!("query has {} bits, database has {}", query.bit_width, self.bit_width));
        }
        Ok(())
    }

    /// Distance from `query` to every entry, in database order.
    pub(crate) fn distances(&self, query: &HashCode) -> Result<Vec<u32>> {
        self.check_query(query)?;
        Ok(self
            .codes
            .iter()
            .map(|c| c.words.iter().zip(&query.words).map(|(x, y)| (x ^ y).count_ones()).sum())
            .collect())
    }

    /// Database positions of the `k` nearest entries, ordered by
    /// (distance, id).
    pub(crate) fn ranked_positions(&self, query: &HashCode, k: usize) -> Result<Vec<(usize, u32)>> {
        let dist = self.distances(query)?;
        let key = |p: usize| (dist[p], self.ids[p]);
        let mut order: Vec<usize> = (0..self.len()).collect();
        let k = k.min(order.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < order.len() {
            order.select_nth_unstable_by_key(k - 1, |&p| key(p));
            order.truncate(k);
        }
        order.sort_unstable_by_key(|&p| key(p));
        Ok(order.into_iter().map(|p| (p, dist[p])).collect())
    }
}

/// The `k` entries closest to `query`, ties broken by ascending id.
pub fn knn_search(db: &CodeDatabase, query: &HashCode, k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(config_err!("k must be at least 1"));
    }
    Ok(db.ranked_positions(query, k)?.into_iter().map(|(p, distance)| Neighbor { distance, id: db.ids[p] }).collect())
}

/// Every entry within Hamming distance `radius`, ordered by (distance, id).
pub fn radius_search(db: &CodeDatabase, query: &HashCode, radius: u32) -> Result<Vec<Neighbor>> {
    if radius as usize > db.bit_width {
        return Err(config_err!("radius {radius} exceeds code width {}", db.bit_width));
    }
    let dist = db.distances(query)?;
    let mut out: Vec<Neighbor> = dist
        .iter()
        .zip(&db.ids)
        .filter(|(d, _)| **d <= radius)
        .map(|(&distance, &id)| Neighbor { distance, id })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Random hyperplane hash: `M` standard-normal directions through the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LshProjector {
    input_dim: usize,
    bit_width: usize,
    /// Row-major `M × D`.
    planes: Vec<f64>,
}

impl LshProjector {
    pub fn new(input_dim: usize, bit_width: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || bit_width == 0 {
            return Err(config_err!("LSH needs positive input dimension and bit width"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = (0..input_dim * bit_width).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { input_dim, bit_width, planes })
    }

    pub fn projections(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(shape_err!("LSH input has {} dims, expected {}", x.len(), self.input_dim));
        }
        Ok(self.planes.chunks_exact(self.input_dim).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect())
    }

    pub fn encode(&self, x: &[f64]) -> Result<HashCode> {
        Ok(binarize(&self.projections(x)?, 0.0))
    }
}

/// LSH codes for each row of `features`.
pub fn lsh_encode(features: &FeatureMatrix, bit_width: usize, seed: u64) -> Result<Vec<HashCode>> {
    let proj = LshProjector::new(features.cols(), bit_width, seed)?;
    features.iter_rows().map(|r| proj.encode(r)).collect()
}

/// Flattened raw pixels of every image, one row per sample.
pub fn pixel_matrix(dataset: &Dataset) -> FeatureMatrix {
    let cols = dataset.dims().len();
    let mut data = Vec::with_capacity(dataset.len() * cols);
    for s in dataset.samples() {
        data.extend_from_slice(&s.pixels);
    }
    FeatureMatrix::from_vec(dataset.len(), cols, data).expect("uniform sample dims")
}

/// Hashing-layer outputs for every image in the dataset.
pub fn dataset_features(params: &NetworkParams, dataset: &Dataset) -> Result<FeatureMatrix> {
    params.infer(dataset.samples())
}

/// Binarized network outputs for every sample, carrying ids and labels.
pub fn encode_dataset(params: &NetworkParams, dataset: &Dataset, threshold: f64) -> Result<CodeDatabase> {
    if dataset.dims() != params.input_dims() {
        return Err(shape_err!(
            "dataset dims {:?} do not match network input {:?}",
            dataset.dims(),
            params.input_dims()
        ));
    }
    let mut codes = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        codes.push(binarize(&params.features_of(s)?, threshold));
    }
    let ids = dataset.samples().iter().map(|s| s.index as u64).collect();
    let labels = dataset.has_labels().then(|| dataset.samples().iter().map(|s| s.label.unwrap_or_default()).collect());
    CodeDatabase::new(params.bit_width(), codes, ids, labels)
}

/// Database of LSH codes over flattened pixels.
pub fn lsh_encode_dataset(dataset: &Dataset, bit_width: usize, seed: u64) -> Result<CodeDatabase> {
    let codes = lsh_encode(&pixel_matrix(dataset), bit_width, seed)?;
    let ids = dataset.samples().iter().map(|s| s.index as u64).collect();
    let labels = dataset.has_labels().then(|| dataset.samples().iter().map(|s| s.label.unwrap_or_default()).collect());
    CodeDatabase::new(bit_width, codes, ids, labels)
}
