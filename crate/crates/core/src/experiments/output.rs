//! Run records and the CSV files derived from them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Tagger,
    Parser,
    /// Parser without UPOS input, the reference line of a grid.
    Baseline,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Tagger => "tagger",
            RecordKind::Parser => "parser",
            RecordKind::Baseline => "baseline",
        }
    }
}

/// Outcome of one trained model evaluated on test data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub treebank: String,
    pub kind: RecordKind,
    /// Size or augmentation level of the parser's training data.
    pub parser_n: Option<usize>,
    /// Size or augmentation level of the tagger's training data.
    pub tagger_n: Option<usize>,
    pub repetition: usize,
    pub bin_target: Option<f64>,
    /// Dev accuracy of the captured tagger.
    pub bin_achieved: Option<f64>,
    pub mode: String,
    pub uas: Option<f64>,
    pub las: Option<f64>,
    pub upos: Option<f64>,
    pub tokens: Option<usize>,
    /// Seed of the model behind this record.
    pub seed: u64,
    /// `ok`, `bin_not_captured` or `failed: <reason>`.
    pub status: String,
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_NO_BIN: &str = "bin_not_captured";

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    fn mode_rank(&self) -> usize {
        ["", "none", "pred", "gold", "multi"]
            .iter()
            .position(|m| *m == self.mode)
            .unwrap_or(usize::MAX)
    }

    /// Canonical output order.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.treebank
            .cmp(&other.treebank)
            .then(self.parser_n.cmp(&other.parser_n))
            .then(self.kind.cmp(&other.kind))
            .then(self.tagger_n.cmp(&other.tagger_n))
            .then(opt(self.bin_target, other.bin_target))
            .then(self.mode_rank().cmp(&other.mode_rank()))
            .then(self.mode.cmp(&other.mode))
            .then(self.repetition.cmp(&other.repetition))
    }
}

/// Wall-clock time of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub cell: String,
    pub seconds: f64,
}

fn num<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, places: usize) -> String {
    v.map(|v| format!("{:.*}", places, v)).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub const RECORD_HEADER: [&str; 15] = [
    "experiment",
    "treebank",
    "kind",
    "parser_n",
    "tagger_n",
    "rep",
    "bin_target",
    "bin_achieved",
    "mode",
    "uas",
    "las",
    "upos",
    "tokens",
    "seed",
    "status",
];

/// `records.csv`: one row per record, canonical order, no timings.
pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    sorted.sort_by(RunRecord::canonical_cmp);
    write_rows(
        path,
        &RECORD_HEADER,
        sorted.iter().map(|r| {
            vec![
                r.experiment.clone(),
                r.treebank.clone(),
                r.kind.as_str().to_owned(),
                num(r.parser_n),
                num(r.tagger_n),
                r.repetition.to_string(),
                num(r.bin_target),
                fixed(r.bin_achieved, 4),
                r.mode.clone(),
                fixed(r.uas, 2),
                fixed(r.las, 2),
                fixed(r.upos, 2),
                num(r.tokens),
                r.seed.to_string(),
                r.status.clone(),
            ]
        }),
    )
}

pub fn write_timings(path: &Path, timings: &[Timing]) -> Result<()> {
    let mut sorted = timings.to_vec();
    sorted.sort_by(|a, b| a.cell.cmp(&b.cell));
    write_rows(
        path,
        &["cell", "seconds"],
        sorted.into_iter().map(|t| vec![t.cell, format!("{:.3}", t.seconds)]),
    )
}

/// Mean and standard error of the mean (`None` below two values).
pub fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// `summary.csv`: means and standard errors over repetitions of every
/// successful configuration.
pub fn write_summary(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut sorted: Vec<&RunRecord> = records.iter().filter(|r| r.is_ok()).collect();
    sorted.sort_by(|a, b| a.canonical_cmp(b));
    let mut groups: Vec<(&RunRecord, Vec<&RunRecord>)> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some((head, members)) if same_group(head, r) => members.push(r),
            _ => groups.push((r, vec![r])),
        }
    }
    let stat = |members: &[&RunRecord], f: fn(&RunRecord) -> Option<f64>| {
        let v: Vec<f64> = members.iter().filter_map(|r| f(r)).collect();
        mean_se(&v)
    };
    write_rows(
        path,
        &[
            "treebank", "kind", "mode", "parser_n", "tagger_n", "bin_target", "n", "las_mean", "las_se", "uas_mean",
            "uas_se", "upos_mean", "upos_se",
        ],
        groups.iter().map(|(head, members)| {
            let (las, las_se) = stat(members, |r| r.las);
            let (uas, uas_se) = stat(members, |r| r.uas);
            let (upos, upos_se) = stat(members, |r| r.upos);
            vec![
                head.treebank.clone(),
                head.kind.as_str().to_owned(),
                head.mode.clone(),
                num(head.parser_n),
                num(head.tagger_n),
                num(head.bin_target),
                members.len().to_string(),
                fixed(las, 2),
                fixed(las_se, 2),
                fixed(uas, 2),
                fixed(uas_se, 2),
                fixed(upos, 2),
                fixed(upos_se, 2),
            ]
        }),
    )
}

fn same_group(a: &RunRecord, b: &RunRecord) -> bool {
    a.treebank == b.treebank
        && a.kind == b.kind
        && a.mode == b.mode
        && a.parser_n == b.parser_n
        && a.tagger_n == b.tagger_n
        && a.bin_target.map(f64::to_bits) == b.bin_target.map(f64::to_bits)
}

pub const TABLE_HEADER: [&str; 7] = ["treebank", "upos_single", "upos_multi", "las_none", "las_pred", "las_gold", "las_multi"];

/// Column-wise unweighted mean of rounded per-treebank values; a column is
/// averaged only when every row has a value.
pub fn average_row(rows: &[[Option<f64>; 6]]) -> [Option<f64>; 6] {
    let mut out = [None; 6];
    for (c, slot) in out.iter_mut().enumerate() {
        let col: Option<Vec<f64>> = rows.iter().map(|r| r[c].map(round2)).collect();
        *slot = col.filter(|v| !v.is_empty()).map(|v| round2(v.iter().sum::<f64>() / v.len() as f64));
    }
    out
}

/// Round half away from zero to two decimals, via the decimal string so that
/// values like 30.385 round as written.
pub fn round2(v: f64) -> f64 {
    let s = format!("{:.6}", v);
    let x: f64 = s.parse().unwrap_or(v);
    (x * 100.0 + 1e-7f64.copysign(x)).round() / 100.0
}

/// Table rows (per treebank, mean over repetitions) plus the average row.
pub fn table_rows(records: &[RunRecord]) -> Vec<(String, [Option<f64>; 6])> {
    let mut by_tb: BTreeMap<&str, [Vec<f64>; 6]> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let cols = by_tb.entry(&r.treebank).or_default();
        match (r.kind, r.mode.as_str()) {
            (RecordKind::Tagger, _) => cols[0].extend(r.upos),
            (RecordKind::Parser, "multi") => {
                cols[1].extend(r.upos);
                cols[5].extend(r.las);
            }
            (RecordKind::Parser, "none") => cols[2].extend(r.las),
            (RecordKind::Parser, "pred") => cols[3].extend(r.las),
            (RecordKind::Parser, "gold") => cols[4].extend(r.las),
            _ => {}
        }
    }
    let mut rows: Vec<(String, [Option<f64>; 6])> = by_tb
        .into_iter()
        .map(|(tb, cols)| (tb.to_owned(), cols.map(|c| mean_se(&c).0.map(round2))))
        .collect();
    let values: Vec<[Option<f64>; 6]> = rows.iter().map(|r| r.1).collect();
    rows.push(("avg".to_owned(), average_row(&values)));
    rows
}

/// `table.csv` for the real low-resource experiment.
pub fn write_table(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_rows(
        path,
        &TABLE_HEADER,
        table_rows(records).into_iter().map(|(tb, cols)| {
            std::iter::once(tb)
                .chain(cols.iter().map(|v| fixed(*v, 2)))
                .collect()
        }),
    )
}

/// `grid.csv`: one row per parser of an artificial or augmented grid, each
/// carrying the baseline LAS of its (parser size, repetition) group.
pub fn write_grid(path: &Path, records: &[RunRecord], level_name: &str) -> Result<()> {
    let mut baselines = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::Baseline) {
        baselines.insert((r.treebank.clone(), r.parser_n, r.repetition), r.las);
    }
    let mut rows: Vec<&RunRecord> = records.iter().filter(|r| r.kind != RecordKind::Tagger).collect();
    rows.sort_by(|a, b| a.canonical_cmp(b));
    let p = format!("parser_{}", level_name);
    let t = format!("tagger_{}", level_name);
    write_rows(
        path,
        &["treebank", &p, &t, "bin_target", "bin_achieved", "rep", "las", "baseline_las", "status"],
        rows.into_iter().map(|r| {
            let base = baselines.get(&(r.treebank.clone(), r.parser_n, r.repetition)).copied().flatten();
            vec![
                r.treebank.clone(),
                num(r.parser_n),
                num(r.tagger_n),
                num(r.bin_target),
                fixed(r.bin_achieved, 4),
                r.repetition.to_string(),
                fixed(r.las, 2),
                fixed(base, 2),
                r.status.clone(),
            ]
        }),
    )
}
