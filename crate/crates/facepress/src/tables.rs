//! Tabular artifacts: score, comparison, stats and distance tables.
//!
//! All tables are comma-separated UTF-8 with a header line. Reals are
//! written in shortest round-trip form, so a table read back compares equal.

use std::path::Path;

use facepress_core::analysis::{DistanceTable, SizePointStats};
use facepress_core::budget::{CodecId, UnknownCodec};
use facepress_core::fiqa::QualityScore;
use facepress_core::trials::{ComparisonScore, TrialKind, TrialPair};

use crate::io::{csv_err, io_err, write_file, IoError};

/// A quality score attached to a compressed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub codec: CodecId,
    pub target_bytes: u64,
    pub score: QualityScore,
}

fn to_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let got = rd.headers().map_err(csv_err(path))?.clone();
    for h in header {
        if !got.iter().any(|g| g == *h) {
            return Err(IoError::MissingColumn {
                path: path.to_path_buf(),
                column: (*h).to_string(),
            });
        }
    }
    let order: Vec<usize> = header.iter().map(|h| got.iter().position(|g| g == *h).unwrap()).collect();
    rd.records()
        .map(|r| {
            let r = r.map_err(csv_err(path))?;
            Ok(order.iter().map(|&i| r.get(i).unwrap_or_default()).collect())
        })
        .collect()
}

fn row_err(path: &Path, row: usize, message: impl Into<String>) -> IoError {
    IoError::Row {
        path: path.to_path_buf(),
        row: row + 2,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(path: &Path, row: usize, s: &str, what: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| row_err(path, row, format!("bad {what} {s:?}")))
}

fn codec(path: &Path, row: usize, s: &str) -> Result<CodecId, IoError> {
    s.parse().map_err(|e: UnknownCodec| row_err(path, row, e.to_string()))
}

const SCORE_HEADER: [&str; 5] = ["image_id", "codec", "target_bytes", "method", "value"];

pub fn score_table(scores: &[CellScore]) -> String {
    to_text(
        &SCORE_HEADER,
        scores.iter().map(|s| {
            vec![
                s.score.image_id.clone(),
                s.codec.name().into(),
                s.target_bytes.to_string(),
                s.score.method.clone(),
                format!("{}", s.score.value),
            ]
        }),
    )
}

pub fn load_score_table(path: &Path) -> Result<Vec<CellScore>, IoError> {
    read_rows(path, &SCORE_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(CellScore {
                codec: codec(path, i, &r[1])?,
                target_bytes: num(path, i, &r[2], "target_bytes")?,
                score: QualityScore {
                    image_id: r[0].to_string(),
                    method: r[3].to_string(),
                    value: num(path, i, &r[4], "value")?,
                },
            })
        })
        .collect()
}

const COMPARISON_HEADER: [&str; 6] = ["kind", "codec", "target_bytes", "probe_id", "reference_id", "value"];

pub fn comparison_table(scores: &[ComparisonScore]) -> String {
    to_text(
        &COMPARISON_HEADER,
        scores.iter().map(|s| {
            vec![
                s.pair.kind.name().into(),
                s.codec.name().into(),
                s.target_bytes.to_string(),
                s.pair.probe_id.clone(),
                s.pair.reference_id.clone(),
                format!("{}", s.value),
            ]
        }),
    )
}

pub fn load_comparison_table(path: &Path) -> Result<Vec<ComparisonScore>, IoError> {
    read_rows(path, &COMPARISON_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = TrialKind::parse(&r[0]).ok_or_else(|| row_err(path, i, format!("unknown kind {:?}", &r[0])))?;
            Ok(ComparisonScore {
                pair: TrialPair {
                    probe_id: r[3].to_string(),
                    reference_id: r[4].to_string(),
                    kind,
                },
                codec: codec(path, i, &r[1])?,
                target_bytes: num(path, i, &r[2], "target_bytes")?,
                value: num(path, i, &r[5], "value")?,
            })
        })
        .collect()
}

pub fn stats_table(stats: &[SizePointStats]) -> String {
    to_text(
        &["method", "codec", "target_bytes", "mean", "min", "max", "n"],
        stats.iter().map(|s| {
            vec![
                s.method.clone(),
                s.codec.name().into(),
                s.target_bytes.to_string(),
                format!("{}", s.mean),
                format!("{}", s.min),
                format!("{}", s.max),
                s.n.to_string(),
            ]
        }),
    )
}

/// Rows are trial kind x (codecs + combined), columns are quality methods;
/// cells hold rounded percentages.
pub fn distance_table_text(table: &DistanceTable) -> String {
    let mut header = vec!["trial_kind", "codec"];
    header.extend(table.methods.iter().map(String::as_str));
    to_text(
        &header,
        table.rows().into_iter().map(|(kind, slot)| {
            let mut row = vec![kind.name().to_string(), slot.to_string()];
            for m in &table.methods {
                row.push(table.get(kind, slot, m).map(|c| c.value.to_string()).unwrap_or_default());
            }
            row
        }),
    )
}

pub fn write_table(path: &Path, text: &str) -> Result<(), IoError> {
    write_file(path, text.as_bytes())
}
