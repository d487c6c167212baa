//! Text formats for trained models, training curves and metric records.
//!
//! Every real number is written with 17 significant digits so files parse back
//! to the identical bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::{Matrix, ParamStore};
use crate::config::ModelConfig;
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::train::{MetricSummary, Metrics, SweepAxis, SweepRow, TrainHistory};

pub const MODEL_MAGIC: &str = "DYGCL-MODEL 1";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A trained model: its configuration, the seed it was trained with, the
/// snapshot count it was built for and every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub seed: u64,
    pub steps: usize,
    pub params: ParamStore,
}

pub fn format_model(m: &ModelFile) -> String {
    let mut out = String::new();
    let config = serde_json::to_string(&m.config).expect("config always serializes");
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "config {config}").unwrap();
    writeln!(out, "seed {}", m.seed).unwrap();
    writeln!(out, "steps {}", m.steps).unwrap();
    for (name, value) in m.params.iter() {
        writeln!(out, "tensor {name} {} {}", value.rows(), value.cols()).unwrap();
        for r in 0..value.rows() {
            let row: Vec<String> = value.row(r).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of model file, expected {what}"),
        })
    };
    let perr = |line: usize, message: String| Error::Parse { line, message };

    let (ln, magic) = next("header")?;
    if magic != MODEL_MAGIC {
        return Err(perr(ln, format!("expected header {MODEL_MAGIC:?}")));
    }
    let (ln, l) = next("config")?;
    let config: ModelConfig = l
        .strip_prefix("config ")
        .ok_or_else(|| perr(ln, "expected config line".into()))
        .and_then(|j| serde_json::from_str(j).map_err(|e| perr(ln, format!("config: {e}"))))?;
    let mut keyed = |key: &str| -> Result<u64> {
        let (ln, l) = next(key)?;
        l.strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(ln, format!("expected `{key} <integer>`")))
    };
    let seed = keyed("seed")?;
    let steps = keyed("steps")? as usize;

    let mut params = ParamStore::new();
    loop {
        let (ln, l) = next("tensor or end")?;
        if l == "end" {
            break;
        }
        let parts: Vec<&str> = l.split(' ').collect();
        let [kw, name, rows, cols] = parts[..] else {
            return Err(perr(ln, "expected `tensor <name> <rows> <cols>`".into()));
        };
        let (rows, cols) = match (kw, rows.parse::<usize>(), cols.parse::<usize>()) {
            ("tensor", Ok(r), Ok(c)) => (r, c),
            _ => return Err(perr(ln, "expected `tensor <name> <rows> <cols>`".into())),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = next("tensor row")?;
            let vals = row
                .split(' ')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| perr(ln, format!("invalid number {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != cols {
                return Err(perr(
                    ln,
                    format!("expected {cols} values, found {}", vals.len()),
                ));
            }
            data.extend(vals);
        }
        params
            .insert(name, Matrix::from_vec(rows, cols, data)?)
            .map_err(|e| perr(ln, e.to_string()))?;
    }
    Ok(ModelFile {
        config,
        seed,
        steps,
        params,
    })
}

pub fn write_model(m: &ModelFile, path: &Path) -> Result<()> {
    write_atomic(path, format_model(m).as_bytes())
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_acc";

pub fn format_history(h: &TrainHistory) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for e in &h.epochs {
        writeln!(
            out,
            "{},{},{},{}",
            e.epoch,
            fmt_f64(e.train_loss),
            fmt_f64(e.val_loss),
            fmt_f64(e.val_acc)
        )
        .unwrap();
    }
    out
}

/// `key=value` lines for one evaluation.
pub fn format_metrics(m: &Metrics) -> String {
    let mut out = String::new();
    for (k, v) in m.values() {
        writeln!(out, "{k}={}", fmt_f64(v)).unwrap();
    }
    writeln!(out, "precision_defined={}", m.precision_defined).unwrap();
    writeln!(out, "recall_defined={}", m.recall_defined).unwrap();
    writeln!(out, "f1_defined={}", m.f1_defined).unwrap();
    let c = m.confusion;
    writeln!(out, "tp={}\nfp={}\nfn={}\ntn={}", c.tp, c.fp, c.fn_, c.tn).unwrap();
    out
}

/// `key=value` lines with the mean and sample deviation of each metric over
/// `seeds`, followed by every seed's own record prefixed with `seed<k>.`.
pub fn format_summary(summary: &MetricSummary, runs: &[(u64, Metrics)]) -> String {
    let mut out = String::new();
    let seeds: Vec<String> = runs.iter().map(|r| r.0.to_string()).collect();
    writeln!(out, "seeds={}", seeds.join(",")).unwrap();
    for (k, name) in MetricSummary::NAMES.iter().enumerate() {
        writeln!(out, "{name}_mean={}", fmt_f64(summary.mean[k])).unwrap();
        writeln!(out, "{name}_std={}", fmt_f64(summary.std[k])).unwrap();
    }
    for (seed, m) in runs {
        for line in format_metrics(m).lines() {
            writeln!(out, "seed{seed}.{line}").unwrap();
        }
    }
    out
}

pub fn parse_record(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "expected key=value".into(),
                })
        })
        .collect()
}

pub fn format_sweep(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = format!("{axis}");
    for name in ["precision", "recall", "f1", "accuracy"] {
        write!(out, ",{name}_mean,{name}_std").unwrap();
    }
    out.push('\n');
    for row in rows {
        write!(out, "{}", row.value).unwrap();
        for name in ["precision", "recall", "f1", "accuracy"] {
            let mean = row.summary.mean_of(name).unwrap_or(f64::NAN);
            let std = row.summary.std_of(name).unwrap_or(f64::NAN);
            write!(out, ",{},{}", fmt_f64(mean), fmt_f64(std)).unwrap();
        }
        out.push('\n');
    }
    out
}
