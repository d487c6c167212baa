//! Score-gated top-K pooling over one snapshot graph.

use std::sync::Arc;

use crate::autodiff::{Tape, Tensor};
use crate::config::ScoreActivation;
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, SparseAdjacency};
use crate::local::gcn_layer;

/// Number of nodes a block keeps: `max(1, ceil(ratio * n))`.
pub fn keep_count(n: usize, ratio: f64) -> usize {
    // The small slack keeps products like 0.7 * 10 from rounding up to 8.
    let k = (ratio * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n.max(1))
}

/// `act(Â · H · θ_att)`, one score per node.
pub fn attention_scores(
    tape: &mut Tape,
    h: Tensor,
    adj: &Arc<NormalizedAdjacency>,
    theta_att: Tensor,
    activation: ScoreActivation,
) -> Result<Tensor> {
    let hw = tape.matmul(h, theta_att)?;
    if tape.shape(hw).1 != 1 {
        return Err(Error::dim(
            "attention_scores",
            tape.shape(h),
            tape.shape(theta_att),
        ));
    }
    let agg = tape.spmm(adj, hw)?;
    match activation {
        ScoreActivation::Tanh => tape.tanh(agg),
        ScoreActivation::Sigmoid => tape.sigmoid(agg),
    }
}

/// Indices of the `keep_count(n, ratio)` highest scores, ties to the lower index,
/// returned in ascending index order.
pub fn topk_select(scores: &[f64], ratio: f64) -> Vec<usize> {
    let k = keep_count(scores.len(), ratio).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut idx = order[..k].to_vec();
    idx.sort_unstable();
    idx
}

pub struct PoolOutput {
    /// `k × g` gated features of the kept nodes.
    pub h: Tensor,
    pub graph: SparseAdjacency,
    pub norm: Arc<NormalizedAdjacency>,
    /// Kept node indices, relative to the block input.
    pub idx: Vec<usize>,
    /// Scores of all block input nodes.
    pub scores: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn pool_block(
    tape: &mut Tape,
    graph: &SparseAdjacency,
    norm: &Arc<NormalizedAdjacency>,
    h: Tensor,
    theta: Tensor,
    theta_att: Tensor,
    ratio: f64,
    activation: ScoreActivation,
    dropout: &mut Dropout,
) -> Result<PoolOutput> {
    let h_t = gcn_layer(tape, norm, h, theta)?;
    let h_t = dropout.apply(tape, h_t)?;
    let s = attention_scores(tape, h_t, norm, theta_att, activation)?;
    let scores = tape.value(s).data().to_vec();
    let idx = topk_select(&scores, ratio);

    let kept = tape.gather_rows(h_t, &idx)?;
    let gate = tape.gather_rows(s, &idx)?;
    let gated = tape.scale_rows(kept, gate)?;

    let coarse = graph.induced_subgraph(&idx)?;
    let coarse_norm = Arc::new(normalize_adjacency(&coarse));
    Ok(PoolOutput {
        h: gated,
        graph: coarse,
        norm: coarse_norm,
        idx,
        scores,
    })
}

/// `[mean_i h_i ‖ max_i h_i]`
pub fn readout(tape: &mut Tape, h: Tensor) -> Result<Tensor> {
    if tape.shape(h).0 == 0 {
        return Err(Error::Structure("readout over an empty node set".into()));
    }
    let mean = tape.row_mean(h)?;
    let max = tape.col_max(h)?;
    tape.concat_cols(mean, max)
}
