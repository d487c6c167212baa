//! Global view encoder.
//!
//! Every snapshot is coarsened by `L` score-gated top-K pooling blocks starting
//! from the local encoder's final node matrix `H_L`; the surviving nodes are
//! read out into a `1 × 2g` vector, and a recurrent cell folds the `T`
//! snapshot vectors into `Z_global` (`1 × 2h`).
//!
//! Block weights are shared across snapshots; block 1 maps `2h → g`, later
//! blocks `g → g`, and each block's score vector is `g × 1`.

mod pool;
mod recurrent;

use std::sync::Arc;

pub use pool::{attention_scores, keep_count, pool_block, readout, topk_select, PoolOutput};
pub use recurrent::{
    cell_param_specs, gate_names, gru_step, lstm_step, recurrent_aggregate, Cell, Gate,
};

use crate::autodiff::{ParamSpec, ParamStore, Tape, Tensor};
use crate::config::{RnnKind, ScoreActivation};
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, SparseAdjacency};

/// What one pooling block kept, in terms of the snapshot's original node indices.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrace {
    /// Strictly increasing original node indices of the kept nodes.
    pub nodes: Vec<usize>,
    /// Scores of the kept nodes, aligned with `nodes`.
    pub scores: Vec<f64>,
    /// Scores of every node entering the block, kept or not, in input order.
    pub candidate_scores: Vec<f64>,
    /// Coarse graph over the kept nodes (local indices `0..nodes.len()`).
    pub graph: SparseAdjacency,
}

impl BlockTrace {
    /// Gap between the lowest kept score and the highest dropped one; infinite
    /// when every node is kept. A tiny margin means the selection hinges on ties.
    pub fn selection_margin(&self) -> f64 {
        let mut s = self.candidate_scores.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        let k = self.nodes.len();
        if k >= s.len() {
            f64::INFINITY
        } else {
            s[k - 1] - s[k]
        }
    }
}

/// Pooling record of a single snapshot.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PooledTrace {
    pub blocks: Vec<BlockTrace>,
}

#[derive(Clone, Debug)]
pub struct GlobalEncoder {
    /// Width of the incoming node matrix (`2h`).
    pub input_dim: usize,
    /// Pooling width `g`.
    pub hidden: usize,
    /// Recurrent hidden size; must equal the local embedding width.
    pub output_dim: usize,
    pub blocks: usize,
    pub ratio: f64,
    pub rnn: RnnKind,
    pub activation: ScoreActivation,
}

pub struct GlobalOutput {
    pub z_global: Tensor,
    pub traces: Vec<PooledTrace>,
}

pub const RNN_PREFIX: &str = "global.rnn";

impl GlobalEncoder {
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for l in 1..=self.blocks {
            let in_dim = if l == 1 { self.input_dim } else { self.hidden };
            specs.push(ParamSpec::glorot(
                format!("global.block{l}.theta"),
                in_dim,
                self.hidden,
            ));
            specs.push(ParamSpec::glorot(
                format!("global.block{l}.att"),
                self.hidden,
                1,
            ));
        }
        specs.extend(cell_param_specs(
            RNN_PREFIX,
            self.rnn,
            2 * self.hidden,
            self.output_dim,
        ));
        specs
    }

    /// `graphs[t]` and `norms[t]` are snapshot `t`'s raw and normalized adjacency.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        graphs: &[SparseAdjacency],
        norms: &[Arc<NormalizedAdjacency>],
        h_l: Tensor,
        dropout: &mut Dropout,
    ) -> Result<GlobalOutput> {
        if graphs.is_empty() || graphs.len() != norms.len() {
            return Err(Error::Structure(format!(
                "global encoder needs matching non-empty snapshot lists, got {} and {}",
                graphs.len(),
                norms.len()
            )));
        }
        let n = tape.shape(h_l).0;
        if let Some(g) = graphs.iter().find(|g| g.num_nodes() != n) {
            return Err(Error::dim(
                "global_forward",
                (g.num_nodes(), g.num_nodes()),
                tape.shape(h_l),
            ));
        }
        let block_params = (1..=self.blocks)
            .map(|l| {
                Ok((
                    tape.param(params, &format!("global.block{l}.theta"))?,
                    tape.param(params, &format!("global.block{l}.att"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut summaries = Vec::with_capacity(graphs.len());
        let mut traces = Vec::with_capacity(graphs.len());
        for (graph, norm) in graphs.iter().zip(norms) {
            let mut h = h_l;
            let mut graph = graph.clone();
            let mut norm = Arc::clone(norm);
            let mut original: Vec<usize> = (0..n).collect();
            let mut trace = PooledTrace::default();
            for &(theta, att) in &block_params {
                let out = pool_block(
                    tape,
                    &graph,
                    &norm,
                    h,
                    theta,
                    att,
                    self.ratio,
                    self.activation,
                    dropout,
                )?;
                original = out.idx.iter().map(|&i| original[i]).collect();
                trace.blocks.push(BlockTrace {
                    nodes: original.clone(),
                    scores: out.idx.iter().map(|&i| out.scores[i]).collect(),
                    candidate_scores: out.scores.clone(),
                    graph: out.graph.clone(),
                });
                h = out.h;
                graph = out.graph;
                norm = out.norm;
            }
            summaries.push(readout(tape, h)?);
            traces.push(trace);
        }

        let cell = Cell::load(tape, params, RNN_PREFIX, self.rnn)?;
        let z_global = recurrent_aggregate(tape, &summaries, &cell)?;
        Ok(GlobalOutput { z_global, traces })
    }
}
