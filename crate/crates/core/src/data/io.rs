//! Line-delimited JSON dataset files, one sample per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{DynamicGraphSample, SparseAdjacency};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: u8,
    num_nodes: usize,
    node_ids: Vec<usize>,
    snapshots: Vec<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Option<Vec<f64>>>>,
}

fn to_record(s: &DynamicGraphSample) -> Record {
    let weighted = s.snapshots.iter().any(|g| g.weights().is_some());
    Record {
        id: s.sample_id.clone(),
        label: s.label,
        num_nodes: s.num_nodes,
        node_ids: s.node_vocab_ids.clone(),
        snapshots: s
            .snapshots
            .iter()
            .map(|g| g.edges().iter().map(|&(u, v)| [u, v]).collect())
            .collect(),
        weights: weighted.then(|| {
            s.snapshots
                .iter()
                .map(|g| g.weights().map(<[f64]>::to_vec))
                .collect()
        }),
    }
}

fn from_record(r: Record, line: usize) -> Result<DynamicGraphSample> {
    let err = |message: String| Error::Parse { line, message };
    if r.label > 1 {
        return Err(err(format!("field label: {} is not 0 or 1", r.label)));
    }
    if r.node_ids.len() != r.num_nodes {
        return Err(err(format!(
            "field node_ids: length {} != num_nodes {}",
            r.node_ids.len(),
            r.num_nodes
        )));
    }
    if r.snapshots.is_empty() {
        return Err(err("field snapshots: empty".into()));
    }
    if let Some(w) = &r.weights {
        let mismatch = w
            .iter()
            .zip(&r.snapshots)
            .any(|(a, b)| a.as_ref().is_some_and(|a| a.len() != b.len()));
        if w.len() != r.snapshots.len() || mismatch {
            return Err(err("field weights: shape does not match snapshots".into()));
        }
    }
    let snapshots = r
        .snapshots
        .iter()
        .enumerate()
        .map(|(t, edges)| {
            let built = match r.weights.as_ref().and_then(|w| w[t].as_ref()) {
                Some(w) => SparseAdjacency::with_weights(
                    r.num_nodes,
                    edges.iter().zip(w).map(|(&[u, v], &x)| (u, v, x)),
                ),
                None => SparseAdjacency::new(r.num_nodes, edges.iter().map(|&[u, v]| (u, v))),
            };
            built.map_err(|e| err(format!("field snapshots[{t}]: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicGraphSample {
        sample_id: r.id,
        num_nodes: r.num_nodes,
        snapshots,
        node_vocab_ids: r.node_ids,
        label: r.label,
    })
}

pub fn format_dataset(samples: &[DynamicGraphSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&to_record(s)).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Vec<DynamicGraphSample>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let record: Record = serde_json::from_str(l).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            from_record(record, line)
        })
        .collect()
}

pub fn write_dataset(samples: &[DynamicGraphSample], path: &Path) -> Result<()> {
    write_atomic(path, format_dataset(samples).as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DynamicGraphSample>> {
    parse_dataset(&std::fs::read_to_string(path)?)
}
