//! Static reference model: all snapshots collapsed into one graph, two GCN
//! layers, mean pooling and a logistic output.

use crate::autodiff::{ParamSpec, ParamStore, Tape, Tensor};
use crate::config::ModelConfig;
use crate::dropout::Dropout;
use crate::error::Result;
use crate::head::{supervised_loss, PROB_EPS};
use crate::local::gcn_layer;
use crate::model::{Classifier, PreparedSample};

#[derive(Clone, Debug)]
pub struct StaticGcn {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl StaticGcn {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            embed_dim: config.embed_dim,
            hidden: config.local_hidden,
        })
    }
}

impl Classifier for StaticGcn {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let (d, h) = (self.embed_dim, self.hidden);
        vec![
            ParamSpec::glorot("static.gcn1", d, h),
            ParamSpec::glorot("static.gcn2", h, h),
            ParamSpec::glorot("static.out.w", h, 1),
            ParamSpec::zeros("static.out.b", 1, 1),
        ]
    }

    fn loss_and_prob(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<(Tensor, Tensor)> {
        let adj = &sample.union_norm;
        let x = tape.constant(sample.features.clone())?;
        let w1 = tape.param(params, "static.gcn1")?;
        let h = gcn_layer(tape, adj, x, w1)?;
        let h = dropout.apply(tape, h)?;
        let w2 = tape.param(params, "static.gcn2")?;
        let h = gcn_layer(tape, adj, h, w2)?;
        let h = dropout.apply(tape, h)?;
        let pooled = tape.row_mean(h)?;
        let w = tape.param(params, "static.out.w")?;
        let b = tape.param(params, "static.out.b")?;
        let logit = tape.matmul(pooled, w)?;
        let logit = tape.add_bias(logit, b)?;
        let p = tape.sigmoid(logit)?;
        let p = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
        let loss = supervised_loss(tape, p, sample.label)?;
        Ok((loss, p))
    }
}
