//! The full DyGCL forward pass: local view, global view, head and joint loss.

use std::sync::Arc;

use crate::autodiff::{Matrix, ParamSpec, ParamStore, Tape, Tensor};
use crate::config::ModelConfig;
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::global::{GlobalEncoder, PooledTrace};
use crate::graph::{
    normalize_adjacency, validate_sample, DynamicGraphSample, NormalizedAdjacency,
    SemanticFeatures, SparseAdjacency,
};
use crate::head::{contrastive_loss, supervised_loss, total_loss, Head};
use crate::local::LocalEncoder;

/// A validated sample with its normalized snapshots and feature matrix, ready
/// to be run through a model many times.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub sample_id: String,
    pub label: u8,
    pub graphs: Vec<SparseAdjacency>,
    pub norms: Vec<Arc<NormalizedAdjacency>>,
    /// Normalized union of all snapshots, used by the static baseline.
    pub union_norm: Arc<NormalizedAdjacency>,
    pub features: Matrix,
}

impl PreparedSample {
    pub fn new(sample: &DynamicGraphSample, features: SemanticFeatures) -> Result<Self> {
        let violations = validate_sample(sample, &features);
        if let Some(v) = violations.first() {
            return Err(Error::Structure(format!(
                "sample {}: {v}",
                sample.sample_id
            )));
        }
        let union = SparseAdjacency::union(&sample.snapshots)?;
        Ok(Self {
            sample_id: sample.sample_id.clone(),
            label: sample.label,
            norms: sample
                .snapshots
                .iter()
                .map(|g| Arc::new(normalize_adjacency(g)))
                .collect(),
            graphs: sample.snapshots.clone(),
            union_norm: Arc::new(normalize_adjacency(&union)),
            features: features.0,
        })
    }

    /// Features gathered from a `V × d` embedding table by the sample's vocabulary ids.
    pub fn from_table(sample: &DynamicGraphSample, table: &Matrix) -> Result<Self> {
        if let Some(&bad) = sample.node_vocab_ids.iter().find(|&&i| i >= table.rows()) {
            return Err(Error::Structure(format!(
                "sample {}: vocabulary id {bad} outside embedding table of {} rows",
                sample.sample_id,
                table.rows()
            )));
        }
        Self::new(
            sample,
            SemanticFeatures(table.select_rows(&sample.node_vocab_ids)),
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.graphs.len()
    }
}

/// Anything the trainer can fit: a parameter layout and a per-sample loss.
pub trait Classifier: Sync {
    fn param_specs(&self) -> Vec<ParamSpec>;

    /// Records one sample's forward pass and returns `(loss, probability)`.
    fn loss_and_prob(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<(Tensor, Tensor)>;
}

#[derive(Clone, Debug)]
pub struct DyGcl {
    pub local: LocalEncoder,
    pub global: GlobalEncoder,
    pub head: Head,
    pub loss_weight: f64,
    pub contrastive: bool,
}

pub struct ForwardOutput {
    pub loss: Tensor,
    pub prob: Tensor,
    pub z_local: Tensor,
    pub z_global: Tensor,
    pub supervised: Tensor,
    /// `None` when the contrastive term is switched off.
    pub contrastive: Option<Tensor>,
    pub traces: Vec<PooledTrace>,
}

impl DyGcl {
    /// Builds the architecture for samples with `steps` snapshots.
    pub fn new(config: &ModelConfig, steps: usize) -> Result<Self> {
        config.validate()?;
        if steps == 0 {
            return Err(Error::Config("model needs at least one snapshot".into()));
        }
        let local = LocalEncoder {
            embed_dim: config.embed_dim,
            hidden: config.local_hidden,
            steps,
            shared: config.share_local_weights,
        };
        let global = GlobalEncoder {
            input_dim: local.output_dim(),
            hidden: config.global_hidden,
            output_dim: local.output_dim(),
            blocks: config.pool_blocks,
            ratio: config.pool_ratio,
            rnn: config.rnn,
            activation: config.score_activation,
        };
        assert_eq!(global.output_dim, local.output_dim());
        let head = Head {
            view_dim: local.output_dim(),
            mlp_hidden: config.mlp_hidden,
        };
        Ok(Self {
            local,
            global,
            head,
            loss_weight: config.loss_weight,
            contrastive: config.contrastive,
        })
    }

    pub fn steps(&self) -> usize {
        self.local.steps
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<ForwardOutput> {
        if sample.features.cols() != self.local.embed_dim {
            return Err(Error::Config(format!(
                "feature width {} does not match embed_dim {}",
                sample.features.cols(),
                self.local.embed_dim
            )));
        }
        let h_sem = tape.constant(sample.features.clone())?;
        let local = self
            .local
            .forward(tape, params, &sample.norms, h_sem, dropout)?;
        let global = self.global.forward(
            tape,
            params,
            &sample.graphs,
            &sample.norms,
            local.h_l,
            dropout,
        )?;
        let (_, prob) = self
            .head
            .forward(tape, params, local.z_local, global.z_global)?;
        let supervised = supervised_loss(tape, prob, sample.label)?;
        let (loss, contrastive) = if self.contrastive {
            let c = contrastive_loss(tape, local.z_local, global.z_global)?;
            (total_loss(tape, supervised, c, self.loss_weight)?, Some(c))
        } else {
            (supervised, None)
        };
        Ok(ForwardOutput {
            loss,
            prob,
            z_local: local.z_local,
            z_global: global.z_global,
            supervised,
            contrastive,
            traces: global.traces,
        })
    }
}

impl Classifier for DyGcl {
    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = self.local.param_specs();
        specs.extend(self.global.param_specs());
        specs.extend(self.head.param_specs());
        specs
    }

    fn loss_and_prob(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<(Tensor, Tensor)> {
        let out = self.forward(tape, params, sample, dropout)?;
        Ok((out.loss, out.prob))
    }
}
