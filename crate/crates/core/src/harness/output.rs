//! CSV and JSON emission.
//!
//! Column orders are fixed. Floats are written in shortest round-trip form,
//! so CSV and JSON parse back to identical values and re-running a config
//! reproduces the files byte for byte.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::equilibrium::BrTrial;
use crate::error::{Error, Result};
use crate::game::PayoffBreakdown;
use crate::harness::config::Format;
use crate::harness::verify::OpgReport;
use crate::harness::{ExperimentResult, RunRecord, Summary};
use crate::learning::{MixedStrategyTable, SlotRecord};

pub const RECORD_COLUMNS: [&str; 9] = [
    "method",
    "sweep_value",
    "topology",
    "trial",
    "seed",
    "expected_throughput_bps",
    "normalized_throughput",
    "rounds_or_slots",
    "converged",
];

/// Summary columns after the leading sweep-key column.
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "optimal",
    "best_ne",
    "worst_ne",
    "learning_mean",
    "learning_std",
    "learning_normalized",
    "best_ne_interference_free",
    "learning_interference_free",
    "learning_converged_fraction",
];

pub const EVAL_COLUMNS: [&str; 5] = ["user", "channel", "sinr", "throughput_bps", "v_n"];

pub const EQUILIBRIUM_COLUMNS: [&str; 5] = [
    "trial",
    "seed",
    "rounds",
    "converged",
    "expected_throughput_bps",
];

pub const EQUILIBRIUM_SUMMARY_COLUMNS: [&str; 3] = ["best_ne", "worst_ne", "optimal"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.method.as_str().to_string(),
            fmt_f64(r.sweep_value),
            r.topology.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.expected_throughput_bps),
            fmt_opt(r.normalized_throughput),
            r.rounds_or_slots.to_string(),
            r.converged.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_summary_csv(sweep_key: &str, summary: &[Summary], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(std::iter::once(sweep_key).chain(SUMMARY_COLUMNS))?;
    for s in summary {
        w.write_record([
            fmt_f64(s.sweep_value),
            fmt_opt(s.optimal),
            fmt_opt(s.best_ne),
            fmt_opt(s.worst_ne),
            fmt_opt(s.learning_mean),
            fmt_opt(s.learning_std),
            fmt_opt(s.learning_normalized),
            fmt_opt(s.best_ne_interference_free),
            fmt_opt(s.learning_interference_free),
            fmt_opt(s.learning_converged_fraction),
        ])?;
    }
    finish(w, path)
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Writes `records.csv`, `summary.csv` and/or `results.json` into `dir`.
/// Returns the paths written.
pub fn emit_outputs(
    result: &ExperimentResult,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        let records = dir.join("records.csv");
        write_records_csv(&result.records, &records)?;
        let summary = dir.join("summary.csv");
        write_summary_csv(&result.sweep_key, &result.summary, &summary)?;
        written.extend([records, summary]);
    }
    if formats.contains(&Format::Json) {
        let json = dir.join("results.json");
        write_json(result, &json)?;
        written.push(json);
    }
    Ok(written)
}

pub fn write_eval_csv(rows: &[PayoffBreakdown], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(EVAL_COLUMNS)?;
    for r in rows {
        w.write_record([
            (r.user + 1).to_string(),
            r.channel.to_string(),
            fmt_f64(r.sinr),
            fmt_f64(r.throughput_bps),
            fmt_f64(r.weighted_interference),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<eval output>", e))
}

pub fn write_equilibrium_csv(trials: &[BrTrial], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(EQUILIBRIUM_COLUMNS)?;
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            t.rounds.to_string(),
            t.converged.to_string(),
            fmt_f64(t.expected_throughput_bps),
        ])?;
    }
    finish(w, path)
}

pub fn write_equilibrium_summary_csv(
    best: Option<f64>,
    worst: Option<f64>,
    optimal: Option<f64>,
    path: &Path,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(EQUILIBRIUM_SUMMARY_COLUMNS)?;
    w.write_record([fmt_opt(best), fmt_opt(worst), fmt_opt(optimal)])?;
    finish(w, path)
}

pub fn write_verify_report(report: &OpgReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join("verify.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record([
        "kind",
        "sample",
        "user",
        "from_channel",
        "to_channel",
        "payoff_delta",
        "potential_delta",
    ])?;
    for v in &report.violations {
        let kind = serde_json::to_value(v.kind)?;
        w.write_record([
            kind.as_str().unwrap_or_default().to_string(),
            v.sample.to_string(),
            (v.user + 1).to_string(),
            v.from_channel.to_string(),
            v.to_channel.to_string(),
            fmt_f64(v.payoff_delta),
            fmt_f64(v.potential_delta),
        ])?;
    }
    finish(w, &csv_path)?;
    let json_path = dir.join("verify.json");
    write_json(report, &json_path)?;
    Ok(vec![csv_path, json_path])
}

/// Streams a learning trace: one row per user per slot with the strategy row
/// after that slot's update. `q_k` is the probability of the user's `k`-th
/// available channel; rows of users with fewer channels are padded.
pub struct TraceWriter {
    w: csv::Writer<File>,
    path: PathBuf,
    width: usize,
}

impl TraceWriter {
    pub fn create(path: &Path, table: &MixedStrategyTable) -> Result<Self> {
        let width = table.rows().iter().map(Vec::len).max().unwrap_or(0);
        let mut w = csv_writer(path)?;
        let mut header: Vec<String> = ["slot", "user", "active", "chosen_channel", "r"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=width).map(|k| format!("q_{k}")));
        w.write_record(&header)?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
            width,
        })
    }

    pub fn write_slot(&mut self, record: &SlotRecord, table: &MixedStrategyTable) -> Result<()> {
        let mut choice = record.choices.iter().zip(&record.normalized).peekable();
        for n in 0..table.len() {
            let mut row = vec![record.slot.to_string(), (n + 1).to_string()];
            match choice.next_if(|((u, _), _)| *u == n) {
                Some(((_, c), r)) => row.extend(["true".into(), c.to_string(), fmt_f64(*r)]),
                None => row.extend(["false".into(), String::new(), String::new()]),
            }
            let q = table.row(n);
            row.extend((0..self.width).map(|k| q.get(k).map(|&x| fmt_f64(x)).unwrap_or_default()));
            self.w.write_record(&row)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        finish(self.w, &self.path)
    }
}
