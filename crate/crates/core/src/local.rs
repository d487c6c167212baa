//! Local view encoder.
//!
//! Each time step runs a GCN layer over that day's snapshot, then a temporal
//! attention layer that re-injects the projected semantic features:
//!
//! ```text
//! H  <- relu(Â_t · H · θ_t)
//! H  <- tanh([H·W_s + b_s  ‖  H_sem·W_0 + b_0])      (N × 2h)
//! ```
//!
//! `H` starts as `H_sem`. The first step's `θ` is `d × h`; later steps take the
//! `2h`-wide concatenation, so their `θ` is `2h × h`. The graph embedding is
//! the node mean of the final `H`.

use std::sync::Arc;

use crate::autodiff::{ParamSpec, ParamStore, Tape, Tensor};
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// `relu(Â · H · θ)`
pub fn gcn_layer(
    tape: &mut Tape,
    adj: &Arc<NormalizedAdjacency>,
    h: Tensor,
    theta: Tensor,
) -> Result<Tensor> {
    let xw = tape.matmul(h, theta)?;
    let agg = tape.spmm(adj, xw)?;
    tape.relu(agg)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub w_s: Tensor,
    pub b_s: Tensor,
    pub w_0: Tensor,
    pub b_0: Tensor,
}

/// `tanh([H_t·W_s + b_s ‖ H_sem·W_0 + b_0])`
pub fn temporal_attention(
    tape: &mut Tape,
    h_t: Tensor,
    h_sem: Tensor,
    w: &AttentionWeights,
) -> Result<Tensor> {
    if tape.shape(h_t).0 != tape.shape(h_sem).0 {
        return Err(Error::dim(
            "temporal_attention",
            tape.shape(h_t),
            tape.shape(h_sem),
        ));
    }
    let a = tape.matmul(h_t, w.w_s)?;
    let a = tape.add_bias(a, w.b_s)?;
    let s = tape.matmul(h_sem, w.w_0)?;
    let s = tape.add_bias(s, w.b_0)?;
    let cat = tape.concat_cols(a, s)?;
    tape.tanh(cat)
}

#[derive(Clone, Debug)]
pub struct LocalEncoder {
    pub embed_dim: usize,
    pub hidden: usize,
    pub steps: usize,
    pub shared: bool,
}

struct StepNames {
    theta: String,
    w_s: String,
    b_s: String,
    w_0: String,
    b_0: String,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalOutput {
    /// `1 × 2h`
    pub z_local: Tensor,
    /// `N × 2h`, the node matrix after the last step.
    pub h_l: Tensor,
}

impl LocalEncoder {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    fn names(&self, t: usize) -> StepNames {
        let theta = if self.shared && t > 1 {
            "local.shared.theta".to_string()
        } else {
            format!("local.t{t}.theta")
        };
        let att = if self.shared {
            "local.shared".to_string()
        } else {
            format!("local.t{t}")
        };
        StepNames {
            theta,
            w_s: format!("{att}.w_s"),
            b_s: format!("{att}.b_s"),
            w_0: format!("{att}.w_0"),
            b_0: format!("{att}.b_0"),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (d, h) = (self.embed_dim, self.hidden);
        let mut specs: Vec<ParamSpec> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for t in 1..=self.steps {
            let n = self.names(t);
            let in_dim = if t == 1 { d } else { 2 * h };
            for spec in [
                ParamSpec::glorot(n.theta, in_dim, h),
                ParamSpec::glorot(n.w_s, h, h),
                ParamSpec::zeros(n.b_s, 1, h),
                ParamSpec::glorot(n.w_0, d, h),
                ParamSpec::zeros(n.b_0, 1, h),
            ] {
                if seen.insert(spec.name.clone()) {
                    specs.push(spec);
                }
            }
        }
        specs
    }

    /// Runs all time steps over `snapshots` starting from `h_sem` (`N × d`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        snapshots: &[Arc<NormalizedAdjacency>],
        h_sem: Tensor,
        dropout: &mut Dropout,
    ) -> Result<LocalOutput> {
        if snapshots.len() != self.steps {
            return Err(Error::Config(format!(
                "local encoder built for {} steps, sample has {}",
                self.steps,
                snapshots.len()
            )));
        }
        let mut h = h_sem;
        for (i, adj) in snapshots.iter().enumerate() {
            let n = self.names(i + 1);
            let theta = tape.param(params, &n.theta)?;
            let g = gcn_layer(tape, adj, h, theta)?;
            let g = dropout.apply(tape, g)?;
            let w = AttentionWeights {
                w_s: tape.param(params, &n.w_s)?,
                b_s: tape.param(params, &n.b_s)?,
                w_0: tape.param(params, &n.w_0)?,
                b_0: tape.param(params, &n.b_0)?,
            };
            let att = temporal_attention(tape, g, h_sem, &w)?;
            h = dropout.apply(tape, att)?;
        }
        let z_local = tape.row_mean(h)?;
        Ok(LocalOutput { z_local, h_l: h })
    }
}
