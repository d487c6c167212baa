//! Training loop, evaluation and the multi-seed experiment protocol.

mod metrics;
mod optim;

pub use metrics::{Confusion, MetricSummary, Metrics, THRESHOLD};
pub use optim::Adam;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Gradients, Matrix, ParamStore, Tape};
use crate::baseline::StaticGcn;
use crate::config::ModelConfig;
use crate::dropout::Dropout;
use crate::error::{Error, Result};
use crate::graph::DynamicGraphSample;
use crate::model::{Classifier, DyGcl, PreparedSample};

/// Fraction of samples held out for validation and for test.
pub const HOLDOUT_FRACTION: f64 = 0.15;
pub const MIN_SPLIT_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then `floor(0.15 n)` each for validation and test; the
/// remainder trains.
pub fn split_dataset(n: usize, seed: u64) -> Result<Split> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::Usage(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (n as f64 * HOLDOUT_FRACTION).floor() as usize;
    let test = order.split_off(n - held);
    let val = order.split_off(n - 2 * held);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }
}

/// Raised when a loss or gradient stops being finite.
#[derive(Clone, Debug)]
pub struct Diverged {
    pub epoch: usize,
    pub reason: String,
    /// Parameters of the best epoch so far (the initial ones if none finished).
    pub last_good: ParamStore,
    pub history: TrainHistory,
}

pub struct Trained {
    pub params: ParamStore,
    pub history: TrainHistory,
}

/// Stops once `max(patience, 1)` consecutive epochs fail to lower the
/// validation loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Records an epoch's validation loss; returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Dropout stream for one sample: keyed by epoch and position in the epoch.
fn dropout_for(config: &ModelConfig, seed: u64, epoch: usize, position: usize) -> Dropout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | position as u64);
    Dropout::new(config.dropout, rng)
}

fn sample_gradients<C: Classifier>(
    model: &C,
    params: &ParamStore,
    sample: &PreparedSample,
    dropout: &mut Dropout,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let (loss, _) = model.loss_and_prob(&mut tape, params, sample, dropout)?;
    let value = tape.scalar(loss)?;
    Ok((value, tape.backward(loss)?.into_params()))
}

fn diverged(err: Error, epoch: usize, last_good: &ParamStore, history: &TrainHistory) -> Error {
    match err {
        Error::NonFinite { .. } | Error::Numeric(_) => Error::Diverged(Box::new(Diverged {
            epoch,
            reason: err.to_string(),
            last_good: last_good.clone(),
            history: history.clone(),
        })),
        other => other,
    }
}

/// Fits `model` on `train`, selecting the epoch with the lowest validation loss.
pub fn train<C: Classifier>(
    model: &C,
    train: &[PreparedSample],
    val: &[PreparedSample],
    config: &ModelConfig,
    seed: u64,
) -> Result<Trained> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut params = ParamStore::init(&model.param_specs(), seed)?;
    let mut best_params = params.clone();
    let mut opt = Adam::new(&params, config.learning_rate, config.weight_decay);
    let mut history = TrainHistory::default();
    let mut stopper = EarlyStopping::new(config.patience);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(u64::MAX);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let mut dropout = dropout_for(config, seed, epoch, b * config.batch_size + j);
                    sample_gradients(model, &params, &train[i], &mut dropout)
                })
                .collect();
            params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, grads) = r.map_err(|e| diverged(e, epoch, &best_params, &history))?;
                loss_sum += loss;
                params.accumulate(&grads, scale)?;
            }
            opt.step(&mut params);
        }
        let eval = evaluate(model, &params, val)
            .map_err(|e| diverged(e, epoch, &best_params, &history))?;
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(diverged(
                Error::NonFinite { op: "train_loss" },
                epoch,
                &best_params,
                &history,
            ));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: eval.loss,
            val_acc: eval.metrics.accuracy,
        });
        if stopper.observe(epoch, eval.loss) {
            best_params = params.clone();
        }
        history.best_epoch = stopper.best_epoch();
        if stopper.should_stop() {
            break;
        }
    }
    Ok(Trained {
        params: best_params,
        history,
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Mean per-sample loss.
    pub loss: f64,
    pub probs: Vec<f64>,
}

/// Inference-mode pass (no dropout) over `samples`.
pub fn evaluate<C: Classifier>(
    model: &C,
    params: &ParamStore,
    samples: &[PreparedSample],
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot evaluate an empty split".into()));
    }
    let outputs: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (loss, prob) =
                model.loss_and_prob(&mut tape, params, s, &mut Dropout::disabled())?;
            Ok((tape.scalar(loss)?, tape.scalar(prob)?))
        })
        .collect::<Result<_>>()?;
    let loss = outputs.iter().map(|o| o.0).sum::<f64>() / samples.len() as f64;
    let probs: Vec<f64> = outputs.iter().map(|o| o.1).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok(Evaluation {
        metrics: Metrics::from_confusion(Confusion::from_predictions(&probs, &labels)),
        loss,
        probs,
    })
}

/// Applies the configured window and gathers features from `table`.
pub fn prepare_dataset(
    samples: &[DynamicGraphSample],
    table: &Matrix,
    config: &ModelConfig,
) -> Result<Vec<PreparedSample>> {
    let prepared: Vec<PreparedSample> = samples
        .par_iter()
        .map(|s| {
            let w = s.windowed(config.historic_days, config.lead_days)?;
            PreparedSample::from_table(&w, table)
        })
        .collect::<Result<_>>()?;
    if let Some(first) = prepared.first() {
        let t = first.num_snapshots();
        if let Some(bad) = prepared.iter().find(|p| p.num_snapshots() != t) {
            return Err(Error::Structure(format!(
                "sample {} has {} snapshots, expected {t}",
                bad.sample_id,
                bad.num_snapshots()
            )));
        }
    }
    Ok(prepared)
}

pub struct SeedRun {
    pub seed: u64,
    pub test: Metrics,
    pub history: TrainHistory,
    pub params: ParamStore,
}

pub struct ExperimentReport {
    pub runs: Vec<SeedRun>,
    pub summary: MetricSummary,
}

fn run_seeds<C: Classifier>(
    prepared: &[PreparedSample],
    config: &ModelConfig,
    model: &C,
) -> Result<ExperimentReport> {
    config.validate()?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>();
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let split = split_dataset(prepared.len(), seed)?;
        let (tr, va, te) = (pick(&split.train), pick(&split.val), pick(&split.test));
        let trained = train(model, &tr, &va, config, seed)?;
        let test = evaluate(model, &trained.params, &te)?.metrics;
        runs.push(SeedRun {
            seed,
            test,
            history: trained.history,
            params: trained.params,
        });
    }
    let metrics: Vec<Metrics> = runs.iter().map(|r| r.test).collect();
    Ok(ExperimentReport {
        summary: MetricSummary::from_runs(&metrics),
        runs,
    })
}

fn snapshot_count(prepared: &[PreparedSample]) -> Result<usize> {
    prepared
        .first()
        .map(PreparedSample::num_snapshots)
        .ok_or_else(|| Error::Usage("dataset is empty".into()))
}

/// Trains and tests DyGCL once per configured seed.
pub fn run_experiment(
    samples: &[DynamicGraphSample],
    table: &Matrix,
    config: &ModelConfig,
) -> Result<ExperimentReport> {
    let prepared = prepare_dataset(samples, table, config)?;
    let model = DyGcl::new(config, snapshot_count(&prepared)?)?;
    run_seeds(&prepared, config, &model)
}

/// Same protocol with the static union-graph GCN.
pub fn baseline_static_gcn(
    samples: &[DynamicGraphSample],
    table: &Matrix,
    config: &ModelConfig,
) -> Result<ExperimentReport> {
    let prepared = prepare_dataset(samples, table, config)?;
    snapshot_count(&prepared)?;
    run_seeds(&prepared, config, &StaticGcn::new(config)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    HistoricDays,
    LeadDays,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "historic_days" | "historic-days" => Ok(Self::HistoricDays),
            "lead_days" | "lead-days" => Ok(Self::LeadDays),
            other => Err(Error::Usage(format!("unknown sweep axis {other}"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::HistoricDays => "historic_days",
            Self::LeadDays => "lead_days",
        })
    }
}

pub struct SweepRow {
    pub value: usize,
    pub summary: MetricSummary,
}

/// Re-runs the experiment once per value of the chosen window axis.
pub fn sensitivity_sweep(
    samples: &[DynamicGraphSample],
    table: &Matrix,
    config: &ModelConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let cfg = match axis {
                SweepAxis::HistoricDays => ModelConfig {
                    historic_days: Some(value),
                    ..config.clone()
                },
                SweepAxis::LeadDays => ModelConfig {
                    lead_days: value,
                    ..config.clone()
                },
            };
            let report = run_experiment(samples, table, &cfg)?;
            Ok(SweepRow {
                value,
                summary: report.summary,
            })
        })
        .collect()
}
