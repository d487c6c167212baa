//! Hyperparameters and architectural switches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    Lstm,
    Gru,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreActivation {
    Tanh,
    Sigmoid,
}

/// Values the grid search may enumerate. Not swept by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub pool_ratios: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-2, 5e-2, 1e-3, 5e-3, 1e-4, 5e-4],
            weight_decays: vec![1e-2, 1e-3, 1e-4, 1e-5],
            pool_ratios: vec![0.5, 0.25],
            hidden_sizes: vec![16, 32, 64, 128],
        }
    }
}

impl HyperGrid {
    /// Cartesian product applied on top of `base`, in a fixed nesting order
    /// (learning rate, weight decay, pool ratio, hidden size).
    pub fn enumerate(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &wd in &self.weight_decays {
                for &ratio in &self.pool_ratios {
                    for &hidden in &self.hidden_sizes {
                        out.push(ModelConfig {
                            learning_rate: lr,
                            weight_decay: wd,
                            pool_ratio: ratio,
                            local_hidden: hidden,
                            global_hidden: hidden,
                            mlp_hidden: hidden,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Semantic feature width `d`; must match the embedding table.
    pub embed_dim: usize,
    /// Local hidden width `h`. Both view embeddings have width `2h`.
    pub local_hidden: usize,
    /// Width `g` of the pooling blocks.
    pub global_hidden: usize,
    pub pool_blocks: usize,
    /// Pooling ratio: each block keeps `max(1, ceil(ratio * N))` nodes.
    pub pool_ratio: f64,
    pub rnn: RnnKind,
    pub score_activation: ScoreActivation,
    /// Weight of the supervised term; the contrastive term gets `1 - loss_weight`.
    pub loss_weight: f64,
    /// When false the contrastive term is never computed (supervised-only variant).
    pub contrastive: bool,
    /// Share local GCN/attention weights across time steps after the first.
    pub share_local_weights: bool,
    pub mlp_hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub historic_days: Option<usize>,
    pub lead_days: usize,
    pub grid: HyperGrid,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            local_hidden: 16,
            global_hidden: 16,
            pool_blocks: 2,
            pool_ratio: 0.5,
            rnn: RnnKind::Lstm,
            score_activation: ScoreActivation::Tanh,
            loss_weight: 0.5,
            contrastive: true,
            share_local_weights: false,
            mlp_hidden: 16,
            learning_rate: 5e-3,
            weight_decay: 1e-4,
            dropout: 0.2,
            batch_size: 32,
            max_epochs: 300,
            patience: 50,
            seeds: (0..10).collect(),
            historic_days: None,
            lead_days: 1,
            grid: HyperGrid::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("local_hidden", self.local_hidden),
            ("global_hidden", self.global_hidden),
            ("pool_blocks", self.pool_blocks),
            ("mlp_hidden", self.mlp_hidden),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("lead_days", self.lead_days),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "pool_ratio {} outside (0, 1]",
                self.pool_ratio
            )));
        }
        check_loss_weight(self.loss_weight)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.historic_days == Some(0) {
            return Err(Error::Config("historic_days must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_loss_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::Config(format!("loss weight {w} outside [0, 1]")))
    }
}
