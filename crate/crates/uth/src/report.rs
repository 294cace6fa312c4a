//! CSV and JSON reports.
//!
//! Floats are written in shortest round-trip form, so reading a report back
//! yields the exact values that were written.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uth_core::training::EpochLog;
use uth_core::{EvalReport, Neighbor, Phase, PrPoint, TrainLog};

use crate::error::{Error, Result};

pub const PR_HEADER: &str = "radius,precision,recall,retrieved_empty";
pub const TRAINLOG_HEADER: &str = "epoch,phase,l_total,l_triplet,l_quant,l_entropy,l_entropy_binary,seconds";
pub const SEARCH_HEADER: &str = "rank,neighbor_id,distance";
pub const QUERY_RESULTS_HEADER: &str = "query_id,rank,neighbor_id,distance";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub map: f64,
    pub top_k: usize,
    pub query_count: usize,
    pub bit_width: usize,
    pub seed: u64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            map: r.map,
            top_k: r.config.top_k,
            query_count: r.config.query_count,
            bit_width: r.bit_width,
            seed: r.config.seed,
        }
    }
}

pub fn summary_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(&EvalSummary::from(report)).expect("summary serializes");
    s.push('\n');
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainRow {
    epoch: usize,
    phase: u8,
    l_total: f64,
    l_triplet: f64,
    l_quant: f64,
    l_entropy: f64,
    l_entropy_binary: f64,
    seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SearchRow {
    rank: usize,
    neighbor_id: u64,
    distance: u32,
}

#[derive(Debug, Serialize)]
struct QueryRow {
    query_id: u64,
    rank: usize,
    neighbor_id: u64,
    distance: u32,
}

fn to_csv<R: Serialize>(header: &str, rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8");
    format!("{header}\n{body}")
}

fn from_csv<R: for<'de> Deserialize<'de>>(text: &str, header: &str) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found = r.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::format(format!("expected header {header:?}, found {found:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::format(format!("csv: {e}"))
}

pub fn pr_csv(curve: &[PrPoint]) -> String {
    to_csv(PR_HEADER, curve)
}

pub fn trainlog_csv(log: &TrainLog) -> String {
    to_csv(
        TRAINLOG_HEADER,
        log.entries.iter().map(|e| TrainRow {
            epoch: e.epoch,
            phase: e.phase.number(),
            l_total: e.report.l_total,
            l_triplet: e.report.l_triplet,
            l_quant: e.report.l_quant,
            l_entropy: e.report.l_entropy,
            l_entropy_binary: e.report.l_entropy_binary,
            seconds: e.seconds,
        }),
    )
}

pub fn search_csv(neighbors: &[Neighbor]) -> String {
    to_csv(
        SEARCH_HEADER,
        neighbors.iter().enumerate().map(|(i, n)| SearchRow { rank: i + 1, neighbor_id: n.id, distance: n.distance }),
    )
}

pub fn query_results_csv(results: &[(u64, Vec<Neighbor>)]) -> String {
    to_csv(
        QUERY_RESULTS_HEADER,
        results.iter().flat_map(|(qid, ns)| {
            ns.iter().enumerate().map(move |(i, n)| QueryRow {
                query_id: *qid,
                rank: i + 1,
                neighbor_id: n.id,
                distance: n.distance,
            })
        }),
    )
}

pub fn parse_pr_csv(text: &str) -> Result<Vec<PrPoint>> {
    from_csv(text, PR_HEADER)
}

pub fn parse_trainlog_csv(text: &str) -> Result<TrainLog> {
    let rows: Vec<TrainRow> = from_csv(text, TRAINLOG_HEADER)?;
    let entries = rows
        .into_iter()
        .map(|r| {
            let phase = match r.phase {
                1 => Phase::Regularize,
                2 => Phase::Pairwise,
                p => return Err(Error::format(format!("unknown phase {p}"))),
            };
            Ok(EpochLog {
                epoch: r.epoch,
                phase,
                report: uth_core::LossReport {
                    l_total: r.l_total,
                    l_triplet: r.l_triplet,
                    l_quant: r.l_quant,
                    l_entropy: r.l_entropy,
                    l_entropy_binary: r.l_entropy_binary,
                },
                seconds: r.seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainLog { entries })
}

/// Parses `search` output; ranks must run 1, 2, 3, ...
pub fn parse_search_csv(text: &str) -> Result<Vec<Neighbor>> {
    let rows: Vec<SearchRow> = from_csv(text, SEARCH_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.rank != i + 1 {
                return Err(Error::format(format!("row {} has rank {}", i + 1, r.rank)));
            }
            Ok(Neighbor { id: r.neighbor_id, distance: r.distance })
        })
        .collect()
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use uth_core::LossReport;

    #[test]
    fn trainlog_round_trip() {
        let log = TrainLog {
            entries: vec![
                EpochLog {
                    epoch: 0,
                    phase: Phase::Regularize,
                    report: LossReport { l_total: 0.1 + 0.2, l_quant: 1e-300, l_entropy: 3.0, ..Default::default() },
                    seconds: 0.0,
                },
                EpochLog {
                    epoch: 1,
                    phase: Phase::Pairwise,
                    report: LossReport { l_triplet: f64::MIN_POSITIVE, l_entropy_binary: 0.25, ..Default::default() },
                    seconds: 1.5,
                },
            ],
        };
        let text = trainlog_csv(&log);
        assert_eq!(parse_trainlog_csv(&text).unwrap(), log);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn pr_round_trip() {
        let curve = vec![
            PrPoint { radius: 0, precision: 1.0, recall: 0.0, retrieved_empty: true },
            PrPoint { radius: 1, precision: 1.0 / 3.0, recall: 0.7, retrieved_empty: false },
        ];
        assert_eq!(parse_pr_csv(&pr_csv(&curve)).unwrap(), curve);
    }

    #[test]
    fn search_ranks_start_at_one() {
        let n = vec![Neighbor { distance: 0, id: 7 }, Neighbor { distance: 2, id: 3 }];
        let text = search_csv(&n);
        assert_eq!(text, "rank,neighbor_id,distance\n1,7,0\n2,3,2\n");
        assert_eq!(parse_search_csv(&text).unwrap(), n);
        let q = query_results_csv(&[(5, n)]);
        assert_eq!(q.lines().nth(2), Some("5,2,3,2"));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_pr_csv("radius,precision\n0,1\n").is_err());
    }
}
