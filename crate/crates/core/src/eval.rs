//! Retrieval evaluation: query/gallery split, mAP@k and radius-based
//! precision–recall curves.
//!
//! Relevance is label equality. Labels are read here and nowhere in training.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Result};
use crate::retrieval::CodeDatabase;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub query_count: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { query_count: 1000, top_k: 1000, seed: 0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.query_count == 0 || self.top_k == 0 {
            return Err(config_err!("query_count and top_k must be at least 1"));
        }
        Ok(())
    }
}

/// One point of the precision–recall curve at Hamming radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrPoint {
    pub radius: u32,
    pub precision: f64,
    pub recall: f64,
    /// Nothing was retrieved at this radius; `precision` is then 1 by
    /// convention.
    pub retrieved_empty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub per_query_ap: Vec<f64>,
    pub pr_curve: Vec<PrPoint>,
    pub config: EvalConfig,
    pub bit_width: usize,
}

/// Splits `db` into `query_count` random queries and the remaining gallery.
/// Both halves keep the database's original order.
pub fn split_query_gallery(db: &CodeDatabase, config: &EvalConfig) -> Result<(CodeDatabase, CodeDatabase)> {
    config.validate()?;
    if db.labels().is_none() {
        return Err(config_err!("evaluation needs labels in the code database"));
    }
    if db.len() <= config.query_count {
        return Err(config_err!(
            "database of {} entries cannot provide {} queries and a gallery",
            db.len(),
            config.query_count
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut is_query = vec![false; db.len()];
    for p in rand::seq::index::sample(&mut rng, db.len(), config.query_count) {
        is_query[p] = true;
    }
    let (q, g): (Vec<usize>, Vec<usize>) = (0..db.len()).partition(|&p| is_query[p]);
    Ok((db.subset(&q), db.subset(&g)))
}

/// Average precision over the first `k` entries of a ranked relevance list,
/// normalized by the number of relevant entries within those `k`.
pub fn average_precision(relevance: &[bool], k: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, _) in relevance.iter().take(k).enumerate().filter(|(_, r)| **r) {
        hits += 1;
        sum += hits as f64 / (i + 1) as f64;
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn labels_of(db: &CodeDatabase) -> Result<&[u32]> {
    db.labels().ok_or_else(|| config_err!("evaluation needs labels in the code database"))
}

fn check_widths(queries: &CodeDatabase, gallery: &CodeDatabase) -> Result<()> {
    if queries.bit_width() != gallery.bit_width() {
        return Err(shape_err!("query codes have {} bits, gallery codes {}", queries.bit_width(), gallery.bit_width()));
    }
    Ok(())
}

/// mAP of Hamming ranking at `top_k`; returns `(map, per_query_ap)`.
pub fn mean_ap(queries: &CodeDatabase, gallery: &CodeDatabase, top_k: usize) -> Result<(f64, Vec<f64>)> {
    check_widths(queries, gallery)?;
    if top_k == 0 {
        return Err(config_err!("top_k must be at least 1"));
    }
    let (q_labels, g_labels) = (labels_of(queries)?, labels_of(gallery)?);
    let mut aps = Vec::with_capacity(queries.len());
    for (code, &label) in queries.codes().iter().zip(q_labels) {
        let relevance: Vec<bool> =
            gallery.ranked_positions(code, top_k)?.into_iter().map(|(p, _)| g_labels[p] == label).collect();
        aps.push(average_precision(&relevance, top_k));
    }
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok((map, aps))
}

/// Micro-averaged precision and recall of Hamming-ball retrieval for every
/// radius `0..=M`.
pub fn pr_curve(queries: &CodeDatabase, gallery: &CodeDatabase) -> Result<Vec<PrPoint>> {
    check_widths(queries, gallery)?;
    let (q_labels, g_labels) = (labels_of(queries)?, labels_of(gallery)?);
    let m = gallery.bit_width();
    // per-distance counts summed over queries
    let mut retrieved = vec![0u64; m + 1];
    let mut relevant = vec![0u64; m + 1];
    let mut total_relevant = 0u64;
    for (code, &label) in queries.codes().iter().zip(q_labels) {
        for (d, &gl) in gallery.distances(code)?.into_iter().zip(g_labels) {
            retrieved[d as usize] += 1;
            if gl == label {
                relevant[d as usize] += 1;
                total_relevant += 1;
            }
        }
    }
    let mut curve = Vec::with_capacity(m + 1);
    let (mut cum_ret, mut cum_rel) = (0u64, 0u64);
    for r in 0..=m {
        cum_ret += retrieved[r];
        cum_rel += relevant[r];
        let empty = cum_ret == 0;
        curve.push(PrPoint {
            radius: r as u32,
            precision: if empty { 1.0 } else { cum_rel as f64 / cum_ret as f64 },
            recall: if total_relevant == 0 { 0.0 } else { cum_rel as f64 / total_relevant as f64 },
            retrieved_empty: empty,
        });
    }
    Ok(curve)
}

/// Split, rank and score a labeled code database.
pub fn evaluate(db: &CodeDatabase, config: &EvalConfig) -> Result<EvalReport> {
    let (queries, gallery) = split_query_gallery(db, config)?;
    let (map, per_query_ap) = mean_ap(&queries, &gallery, config.top_k)?;
    let pr = pr_curve(&queries, &gallery)?;
    Ok(EvalReport { map, per_query_ap, pr_curve: pr, config: *config, bit_width: db.bit_width() })
}
