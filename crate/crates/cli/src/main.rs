use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dygcl::artifacts::{
    fmt_f64, format_history, format_metrics, format_summary, format_sweep, read_model, write_model,
    ModelFile,
};
use dygcl::autodiff::{generic_point, grad_check, Matrix, ParamStore, Tape, DEFAULT_EPS};
use dygcl::config::{ModelConfig, RnnKind, ScoreActivation};
use dygcl::data::corpus::{
    build_vocabulary, ingest_corpus, CorpusDay, IngestOptions, UnknownTokens,
};
use dygcl::data::embeddings::{
    embeddings_for_vocabulary, load_embeddings, write_embeddings, EmbeddingTable,
};
use dygcl::data::io::{read_dataset, write_dataset};
use dygcl::data::synthetic::{generate_synthetic, SyntheticSpec};
use dygcl::data::{corpus::Vocabulary, write_atomic};
use dygcl::dropout::Dropout;
use dygcl::graph::DynamicGraphSample;
use dygcl::model::{Classifier, DyGcl, PreparedSample};
use dygcl::train::{
    baseline_static_gcn, evaluate, prepare_dataset, run_experiment, sensitivity_sweep,
    split_dataset, train, MetricSummary, Metrics, SweepAxis,
};
use dygcl::Error;

const SEED_ENV: &str = "DYGCL_SEED";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "dygcl", version, about = "Dynamic graph contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-precursor synthetic dataset.
    Generate(GenerateArgs),
    /// Build a dataset from daily documents.
    Ingest(IngestArgs),
    /// Train one model and report test metrics.
    Train(TrainArgs),
    /// Evaluate a saved model on a split of a dataset.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on a seeded sample.
    Gradcheck(GradcheckArgs),
    /// Re-run the experiment over historic-day or lead-day values.
    Sweep(SweepArgs),
    /// Write the nodes and edges kept by each pooling block for one sample.
    ExportPooled(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    global_hidden: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    pool_blocks: Option<usize>,
    #[arg(long)]
    pool_ratio: Option<f64>,
    #[arg(long, value_parser = parse_rnn)]
    rnn: Option<RnnKind>,
    #[arg(long, value_parser = parse_activation)]
    score_activation: Option<ScoreActivation>,
    /// Weight of the supervised term in the joint loss.
    #[arg(long)]
    loss_alpha: Option<f64>,
    /// Train on the supervised loss alone.
    #[arg(long)]
    no_contrastive: bool,
    #[arg(long)]
    share_local_weights: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    historic_days: Option<usize>,
    #[arg(long)]
    lead_days: Option<usize>,
    /// Comma-separated seed list for multi-seed runs.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    positive_fraction: Option<f64>,
    /// Motif edges added per snapshot, comma separated.
    #[arg(long, value_delimiter = ',')]
    growth: Option<Vec<usize>>,
    #[arg(long)]
    offset: Option<f64>,
    /// Give negatives the motif in reverse time order.
    #[arg(long)]
    decoy: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// JSON lines: {"id", "label", "days": [{"date", "documents": [text, ...]}]}
    #[arg(long)]
    corpus: PathBuf,
    /// Optional pre-trained vectors; missing words get seeded random rows.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = dygcl::data::corpus::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long)]
    weighted: bool,
    /// File with one stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Fail on tokens missing from the vocabulary instead of skipping them.
    #[arg(long)]
    strict_vocab: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelFlags,
    /// Train and test once per configured seed and write an aggregate summary.
    #[arg(long)]
    all_seeds: bool,
    /// Use the static union-graph GCN instead of DyGCL (implies --all-seeds).
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    t: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    global_hidden: usize,
    #[arg(long, default_value_t = 2)]
    pool_blocks: usize,
    #[arg(long, default_value_t = 0.5)]
    pool_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    loss_alpha: f64,
    #[arg(long, value_parser = parse_rnn, default_value = "lstm")]
    rnn: RnnKind,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelFlags,
    /// historic_days or lead_days.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    sample: String,
}

fn parse_rnn(s: &str) -> Result<RnnKind, String> {
    match s {
        "lstm" => Ok(RnnKind::Lstm),
        "gru" => Ok(RnnKind::Gru),
        _ => Err(format!("unknown recurrent cell {s:?} (lstm or gru)")),
    }
}

fn parse_activation(s: &str) -> Result<ScoreActivation, String> {
    match s {
        "tanh" => Ok(ScoreActivation::Tanh),
        "sigmoid" => Ok(ScoreActivation::Sigmoid),
        _ => Err(format!("unknown score activation {s:?} (tanh or sigmoid)")),
    }
}

/// The on-disk configuration file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    model: ModelConfig,
    synthetic: SyntheticSpec,
}

/// Exit code 2 for bad invocations, 1 for everything that fails at run time.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Usage(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

struct Resolved {
    file: FileConfig,
    seed: u64,
    out_dir: PathBuf,
}

fn load_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: FileConfig = toml::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
    // Relative paths in the file are relative to the file.
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.dataset, &mut cfg.embeddings, &mut cfg.out_dir]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve(common: &Common) -> CliResult<Resolved> {
    let file = load_file_config(common.config.as_deref())?;
    let seed = match (common.seed, file.seed, env_seed()?) {
        (Some(s), _, _) | (None, Some(s), _) | (None, None, Some(s)) => s,
        (None, None, None) => 0,
    };
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    Ok(Resolved {
        file,
        seed,
        out_dir,
    })
}

fn apply_model_flags(mut c: ModelConfig, f: &ModelFlags) -> ModelConfig {
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = f.$flag.clone() { c.$field = v; })*
        };
    }
    set!(
        embed_dim => embed_dim,
        hidden => local_hidden,
        global_hidden => global_hidden,
        mlp_hidden => mlp_hidden,
        pool_blocks => pool_blocks,
        pool_ratio => pool_ratio,
        rnn => rnn,
        score_activation => score_activation,
        loss_alpha => loss_weight,
        lr => learning_rate,
        weight_decay => weight_decay,
        dropout => dropout,
        batch_size => batch_size,
        epochs => max_epochs,
        patience => patience,
        lead_days => lead_days,
        seeds => seeds,
    );
    if f.historic_days.is_some() {
        c.historic_days = f.historic_days;
    }
    if f.no_contrastive {
        c.contrastive = false;
    }
    if f.share_local_weights {
        c.share_local_weights = true;
    }
    c
}

fn data_paths(data: &DataArgs, file: &FileConfig) -> CliResult<(PathBuf, PathBuf)> {
    let dataset = data.dataset.clone().or_else(|| file.dataset.clone());
    let embeddings = data.embeddings.clone().or_else(|| file.embeddings.clone());
    match (dataset, embeddings) {
        (Some(d), Some(e)) => Ok((d, e)),
        (None, _) => usage("no dataset given (--dataset or `dataset` in the config file)"),
        (_, None) => usage("no embeddings given (--embeddings or `embeddings` in the config file)"),
    }
}

fn load_inputs(
    dataset: &Path,
    embeddings: &Path,
    dim: usize,
) -> CliResult<(Vec<DynamicGraphSample>, Matrix)> {
    let samples = read_dataset(dataset)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dataset.display())))?;
    let table = load_embeddings(embeddings, dim)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", embeddings.display())))?;
    Ok((samples, table.matrix))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes())
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_generate(a: GenerateArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let mut spec = r.file.synthetic;
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = a.$flag.clone() { spec.$field = v; })*
        };
    }
    set!(
        n => num_nodes,
        t => steps,
        d => embed_dim,
        p => edge_prob,
        m => motif_size,
        samples => samples,
        positive_fraction => positive_fraction,
        offset => feature_offset,
    );
    if a.growth.is_some() {
        spec.growth = a.growth.clone();
    }
    if a.decoy {
        spec.decoy_negatives = true;
    }
    spec.seed = r.seed;
    let data = generate_synthetic(&spec)?;
    let table = EmbeddingTable {
        vocab: Vocabulary::from_tokens((0..spec.num_nodes).map(|i| format!("w{i}")))?,
        matrix: data.table,
    };
    write_dataset(&data.samples, &r.out_dir.join("dataset.jsonl"))?;
    write_embeddings(&table, &r.out_dir.join("embeddings.txt"))?;
    let manifest = serde_json::json!({
        "seed": spec.seed,
        "growth_schedule": spec.growth_schedule(),
        "spec": spec,
    });
    write_text(
        &r.out_dir.join("manifest.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest).expect("manifest serializes")
        ),
    )?;
    println!(
        "wrote {} samples to {}",
        data.samples.len(),
        r.out_dir.join("dataset.jsonl").display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    id: String,
    label: u8,
    days: Vec<CorpusDayRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDayRecord {
    date: String,
    documents: Vec<String>,
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let text = std::fs::read_to_string(&a.corpus)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.corpus.display())))?;
    let mut records = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let rec: CorpusRecord = serde_json::from_str(line)
            .map_err(|e| Failure::Runtime(format!("{} line {}: {e}", a.corpus.display(), i + 1)))?;
        let days: Vec<CorpusDay> = rec
            .days
            .iter()
            .map(|d| CorpusDay::from_texts(d.date.clone(), &d.documents))
            .collect();
        records.push((rec.id, rec.label, days));
    }
    let stopwords: HashSet<String> = match &a.stopwords {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect(),
        None => HashSet::new(),
    };
    let options = IngestOptions {
        window: a.window,
        weighted: a.weighted,
        stopwords,
        min_count: a.min_count,
        unknown: if a.strict_vocab {
            UnknownTokens::Error
        } else {
            UnknownTokens::Skip
        },
    };
    let source = a
        .embeddings
        .as_deref()
        .map(|p| load_embeddings(p, a.d))
        .transpose()?;
    let vocab = match (&source, a.strict_vocab) {
        (Some(src), true) => src.vocab.clone(),
        _ => build_vocabulary(records.iter().map(|r| r.2.as_slice()), &options),
    };
    let samples = records
        .into_iter()
        .map(|(id, label, days)| Ok(ingest_corpus(&days, &vocab, &options)?.labeled(id, label)))
        .collect::<Result<Vec<_>, Error>>()?;
    let table = embeddings_for_vocabulary(&vocab, source.as_ref(), a.d, r.seed)?;
    write_dataset(&samples, &r.out_dir.join("dataset.jsonl"))?;
    write_embeddings(&table, &r.out_dir.join("embeddings.txt"))?;
    println!(
        "wrote {} samples over a {}-word vocabulary",
        samples.len(),
        vocab.len()
    );
    Ok(())
}

fn run_all_seeds(
    samples: &[DynamicGraphSample],
    table: &Matrix,
    config: &ModelConfig,
    baseline: bool,
    out_dir: &Path,
) -> CliResult<()> {
    let report = if baseline {
        baseline_static_gcn(samples, table, config)?
    } else {
        run_experiment(samples, table, config)?
    };
    for run in &report.runs {
        write_text(
            &out_dir.join(format!("history_seed{}.csv", run.seed)),
            &format_history(&run.history),
        )?;
    }
    let per_seed: Vec<(u64, Metrics)> = report.runs.iter().map(|r| (r.seed, r.test)).collect();
    let text = format_summary(&report.summary, &per_seed);
    write_text(&out_dir.join("summary.txt"), &text)?;
    for (k, name) in MetricSummary::NAMES.iter().enumerate() {
        println!(
            "{name}_mean={} {name}_std={}",
            fmt_f64(report.summary.mean[k]),
            fmt_f64(report.summary.std[k])
        );
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let mut config = apply_model_flags(r.file.model.clone(), &a.model);
    config.validate()?;
    let (dataset, embeddings) = data_paths(&a.data, &r.file)?;
    let (samples, table) = load_inputs(&dataset, &embeddings, config.embed_dim)?;
    if a.all_seeds || a.baseline {
        if a.common.seed.is_some() && a.model.seeds.is_none() {
            config.seeds = vec![r.seed];
        }
        return run_all_seeds(&samples, &table, &config, a.baseline, &r.out_dir);
    }
    let prepared = prepare_dataset(&samples, &table, &config)?;
    let steps = prepared
        .first()
        .map(PreparedSample::num_snapshots)
        .ok_or_else(|| Failure::Runtime("dataset is empty".into()))?;
    let split = split_dataset(prepared.len(), r.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>();
    let model = DyGcl::new(&config, steps)?;
    let save = |params: &ParamStore| {
        write_model(
            &ModelFile {
                config: config.clone(),
                seed: r.seed,
                steps,
                params: params.clone(),
            },
            &r.out_dir.join("model.txt"),
        )
    };
    let trained = match train(
        &model,
        &pick(&split.train),
        &pick(&split.val),
        &config,
        r.seed,
    ) {
        Ok(t) => t,
        Err(Error::Diverged(d)) => {
            save(&d.last_good)?;
            write_text(&r.out_dir.join("history.csv"), &format_history(&d.history))?;
            return Err(Failure::Runtime(format!(
                "training diverged at epoch {}: {}; last good parameters kept in {}",
                d.epoch,
                d.reason,
                r.out_dir.join("model.txt").display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    save(&trained.params)?;
    write_text(
        &r.out_dir.join("history.csv"),
        &format_history(&trained.history),
    )?;
    let test = evaluate(&model, &trained.params, &pick(&split.test))?;
    write_text(
        &r.out_dir.join("metrics.txt"),
        &format_metrics(&test.metrics),
    )?;
    println!(
        "epochs={} best_epoch={} test_accuracy={} test_f1={}",
        trained.history.epochs.len(),
        trained.history.best_epoch,
        fmt_f64(test.metrics.accuracy),
        fmt_f64(test.metrics.f1)
    );
    Ok(())
}

fn load_model_for(
    model_path: &Path,
    data: &DataArgs,
    file: &FileConfig,
) -> CliResult<(ModelFile, DyGcl, Vec<PreparedSample>)> {
    let mf = read_model(model_path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", model_path.display())))?;
    let (dataset, embeddings) = data_paths(data, file)?;
    let (samples, table) = load_inputs(&dataset, &embeddings, mf.config.embed_dim)?;
    let prepared = prepare_dataset(&samples, &table, &mf.config)?;
    let model = DyGcl::new(&mf.config, mf.steps)?;
    Ok((mf, model, prepared))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let (mf, model, prepared) = load_model_for(&a.model, &a.data, &r.file)?;
    let chosen: Vec<PreparedSample> = if a.split == "all" {
        prepared
    } else {
        let split = split_dataset(prepared.len(), mf.seed)?;
        let idx = match a.split.as_str() {
            "train" => split.train,
            "val" => split.val,
            "test" => split.test,
            other => return usage(format!("unknown split {other:?} (train, val, test or all)")),
        };
        idx.iter().map(|&i| prepared[i].clone()).collect()
    };
    let eval = evaluate(&model, &mf.params, &chosen)?;
    let mut text = format_metrics(&eval.metrics);
    text.push_str(&format!("loss={}\n", fmt_f64(eval.loss)));
    write_text(&r.out_dir.join(format!("eval_{}.txt", a.split)), &text)?;
    print!("{text}");
    Ok(())
}

/// One seeded positive sample with dense random snapshots.
fn gradcheck_sample(n: usize, t: usize, d: usize, seed: u64) -> CliResult<PreparedSample> {
    let spec = SyntheticSpec {
        num_nodes: n,
        steps: t,
        embed_dim: d,
        edge_prob: 0.4,
        motif_size: n.min(3),
        samples: 1,
        positive_fraction: 1.0,
        seed,
        ..Default::default()
    };
    let data = generate_synthetic(&spec)?;
    Ok(PreparedSample::from_table(&data.samples[0], &data.table)?)
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let config = ModelConfig {
        embed_dim: a.d,
        local_hidden: a.hidden,
        global_hidden: a.global_hidden,
        mlp_hidden: a.hidden,
        pool_blocks: a.pool_blocks,
        pool_ratio: a.pool_ratio,
        loss_weight: a.loss_alpha,
        rnn: a.rnn,
        ..r.file.model.clone()
    };
    config.validate()?;
    let sample = gradcheck_sample(a.n, a.t, a.d, r.seed)?;
    let model = DyGcl::new(&config, a.t)?;
    let params = generic_point(&ParamStore::init(&model.param_specs(), r.seed)?, r.seed);
    let report = grad_check(&params, DEFAULT_EPS, |tape: &mut Tape, p: &ParamStore| {
        let (loss, _) = model.loss_and_prob(tape, p, &sample, &mut Dropout::disabled())?;
        Ok(loss)
    })?;
    for module in ["local", "global", "head"] {
        if let Some(e) = report.max_for_prefix(&format!("{module}.")) {
            println!("{module} max_rel_err={}", fmt_f64(e));
        }
    }
    let ok = report.max_rel_error < GRADCHECK_TOLERANCE;
    println!(
        "max_rel_err={} {} {GRADCHECK_TOLERANCE:e} over {} coordinates",
        fmt_f64(report.max_rel_error),
        if ok { "<" } else { ">=" },
        report.coordinates
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime("gradient check failed".into()))
    }
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let mut config = apply_model_flags(r.file.model.clone(), &a.model);
    if a.common.seed.is_some() && a.model.seeds.is_none() {
        config.seeds = vec![r.seed];
    }
    config.validate()?;
    let axis: SweepAxis = a.axis.parse()?;
    let (dataset, embeddings) = data_paths(&a.data, &r.file)?;
    let (samples, table) = load_inputs(&dataset, &embeddings, config.embed_dim)?;
    let rows = sensitivity_sweep(&samples, &table, &config, axis, &a.values)?;
    let path = r.out_dir.join(format!("sweep_{axis}.csv"));
    write_text(&path, &format_sweep(axis, &rows))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_export_pooled(a: ExportArgs) -> CliResult<()> {
    let r = resolve(&a.common)?;
    let (mf, model, prepared) = load_model_for(&a.model, &a.data, &r.file)?;
    let Some(sample) = prepared.iter().find(|s| s.sample_id == a.sample) else {
        return Err(Failure::Runtime(format!("sample {:?} not found", a.sample)));
    };
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &mf.params, sample, &mut Dropout::disabled())?;
    let mut files = 0;
    for (t, trace) in out.traces.iter().enumerate() {
        for (l, block) in trace.blocks.iter().enumerate() {
            let mut text = String::new();
            for (node, score) in block.nodes.iter().zip(&block.scores) {
                text.push_str(&format!("node {node} {}\n", fmt_f64(*score)));
            }
            for &(u, v) in block.graph.edges() {
                text.push_str(&format!("edge {} {}\n", block.nodes[u], block.nodes[v]));
            }
            let name = format!("sample_{}_t{}_block{}.edges", a.sample, t + 1, l + 1);
            write_text(&r.out_dir.join(name), &text)?;
            files += 1;
        }
    }
    println!(
        "wrote {files} pooled-graph files to {}",
        r.out_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportPooled(a) => cmd_export_pooled(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
