//! Benchmark records with lossless CSV round-trips and markdown emission.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const CSV_HEADER: &str = "task,dataset,method,knob,seed_count,acc_mean,acc_std,train_s,\
                              infer_mean,infer_std,payload_bytes,total_bytes,peak_rss,status";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One measured sweep cell, aggregated over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub task: String,
    pub dataset: String,
    pub method: String,
    /// sweep knob: sparsity, λ, or quantization config label
    pub knob: String,
    pub seed_count: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub train_s: f64,
    pub infer_mean: f64,
    pub infer_std: f64,
    pub payload_bytes: u64,
    pub total_bytes: u64,
    pub peak_rss: Option<u64>,
    pub status: String,
}

impl BenchRecord {
    pub fn cell_key(&self) -> (String, String, String, String) {
        (
            self.task.clone(),
            self.dataset.clone(),
            self.method.clone(),
            self.knob.clone(),
        )
    }
}

/// Sample mean and (n-1)-normalized standard deviation; std is 0 for a
/// single sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.task,
            r.dataset,
            r.method,
            r.knob,
            r.seed_count,
            r.acc_mean,
            r.acc_std,
            r.train_s,
            r.infer_mean,
            r.infer_std,
            r.payload_bytes,
            r.total_bytes,
            fmt_opt(r.peak_rss),
            r.status
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRecord>, RecordError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(RecordError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if header.trim() != CSV_HEADER {
        return Err(RecordError::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(RecordError::Parse {
                line: i + 1,
                msg: format!("expected 14 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, RecordError> {
            s.parse().map_err(|e| RecordError::Parse {
                line: i + 1,
                msg: format!("bad {what} `{s}`: {e}"),
            })
        };
        let parse_u = |s: &str, what: &str| -> Result<u64, RecordError> {
            s.parse().map_err(|e| RecordError::Parse {
                line: i + 1,
                msg: format!("bad {what} `{s}`: {e}"),
            })
        };
        records.push(BenchRecord {
            task: fields[0].to_string(),
            dataset: fields[1].to_string(),
            method: fields[2].to_string(),
            knob: fields[3].to_string(),
            seed_count: parse_u(fields[4], "seed_count")? as usize,
            acc_mean: parse_f(fields[5], "acc_mean")?,
            acc_std: parse_f(fields[6], "acc_std")?,
            train_s: parse_f(fields[7], "train_s")?,
            infer_mean: parse_f(fields[8], "infer_mean")?,
            infer_std: parse_f(fields[9], "infer_std")?,
            payload_bytes: parse_u(fields[10], "payload_bytes")?,
            total_bytes: parse_u(fields[11], "total_bytes")?,
            peak_rss: if fields[12].is_empty() {
                None
            } else {
                Some(parse_u(fields[12], "peak_rss")?)
            },
            status: fields[13].to_string(),
        });
    }
    Ok(records)
}

/// Markdown table mirroring the CSV columns.
pub fn to_markdown(records: &[BenchRecord]) -> String {
    let cols: Vec<&str> = CSV_HEADER.split(',').map(|c| c.trim()).collect();
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", cols.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(cols.len())));
    for r in records {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.4} | {:.4} | {:.3} | {:.6} | {:.6} | {} | {} | {} | {} |\n",
            r.task,
            r.dataset,
            r.method,
            r.knob,
            r.seed_count,
            r.acc_mean,
            r.acc_std,
            r.train_s,
            r.infer_mean,
            r.infer_std,
            r.payload_bytes,
            r.total_bytes,
            fmt_opt(r.peak_rss),
            r.status
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Markdown,
}

pub fn emit(records: &[BenchRecord], format: EmitFormat, path: &Path) -> Result<(), RecordError> {
    let text = match format {
        EmitFormat::Csv => to_csv(records),
        EmitFormat::Markdown => to_markdown(records),
    };
    fs::write(path, text).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads previously computed cells from an existing CSV, enabling resumable
/// sweeps. Missing or unreadable files mean nothing is reusable.
pub fn load_existing(path: &Path) -> Vec<BenchRecord> {
    match fs::read_to_string(path) {
        Ok(text) => parse_csv(&text).unwrap_or_default(),
        Err(_) => Vec::new(),
    }
}

/// Splits wanted cell keys into (reused records, keys still to compute).
pub fn plan_resume(
    existing: Vec<BenchRecord>,
    wanted: &[(String, String, String, String)],
) -> (Vec<BenchRecord>, Vec<usize>) {
    let have: BTreeSet<_> = existing.iter().map(|r| r.cell_key()).collect();
    let wanted_set: BTreeSet<_> = wanted.iter().cloned().collect();
    let reused: Vec<BenchRecord> = existing
        .into_iter()
        .filter(|r| wanted_set.contains(&r.cell_key()))
        .collect();
    let todo: Vec<usize> = wanted
        .iter()
        .enumerate()
        .filter(|(_, k)| !have.contains(*k))
        .map(|(i, _)| i)
        .collect();
    (reused, todo)
}

/// Stable output order: knobs numerically when possible, then lexicographic.
pub fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(|a, b| {
        let ka = (a.task.clone(), a.dataset.clone(), a.method.clone());
        let kb = (b.task.clone(), b.dataset.clone(), b.method.clone());
        ka.cmp(&kb).then_with(|| match (a.knob.parse::<f64>(), b.knob.parse::<f64>()) {
            (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
            _ => a.knob.cmp(&b.knob),
        })
    });
}
