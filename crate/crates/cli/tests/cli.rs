use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dygcl::artifacts::{parse_record, read_model};
use dygcl::data::io::read_dataset;

fn dygcl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dygcl"))
        .args(args)
        .current_dir(dir)
        .env_remove("DYGCL_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["generate", "--out-dir", out, "--samples", "40", "--d", "8"];
    args.extend_from_slice(extra);
    let o = dygcl(&args, dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(out)
}

const TINY: &[&str] = &[
    "--embed-dim",
    "8",
    "--hidden",
    "4",
    "--global-hidden",
    "4",
    "--mlp-hidden",
    "4",
    "--epochs",
    "3",
    "--batch-size",
    "8",
];

#[test]
fn motif_larger_than_graph_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dygcl(
        &["generate", "--out-dir", "g", "--m", "40", "--n", "30"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("motif larger than graph"));
    assert!(!dir.path().join("g/dataset.jsonl").exists());
}

#[test]
fn bad_flags_and_missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        dygcl(&["train", "--no-such-flag"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(dygcl(&["train"], dir.path()).status.code(), Some(2));
    let o = dygcl(&["train", "--rnn", "tree"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_writes_dataset_embeddings_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(dir.path(), "g", &["--seed", "5"]);
    let samples = read_dataset(&g.join("dataset.jsonl")).unwrap();
    assert_eq!(samples.len(), 40);
    assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 20);
    let emb = fs::read_to_string(g.join("embeddings.txt")).unwrap();
    assert_eq!(emb.lines().count(), 30);
    assert!(emb.starts_with("w0 "));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(g.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(
        manifest["growth_schedule"],
        serde_json::json!([0, 0, 5, 5, 5])
    );
}

#[test]
fn seed_precedence_is_flag_then_file_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let read = |p: &str| fs::read(d.join(p).join("dataset.jsonl")).unwrap();
    let run_env = |out: &str, env: &str, extra: &[&str]| {
        let mut args = vec!["generate", "--out-dir", out, "--samples", "10", "--d", "2"];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_dygcl"))
            .args(&args)
            .current_dir(d)
            .env("DYGCL_SEED", env)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    };
    generate(d, "s1", &["--seed", "1"]);
    generate(d, "s2", &["--seed", "2"]);
    fs::write(d.join("seed2.toml"), "seed = 2\n").unwrap();

    run_env("env1", "1", &[]);
    run_env("flag_over_env", "2", &["--seed", "1"]);
    run_env("file_over_env", "1", &["--config", "seed2.toml"]);
    run_env(
        "flag_over_file",
        "2",
        &["--config", "seed2.toml", "--seed", "1"],
    );
    let s1 = fs::read(d.join("s1/dataset.jsonl")).unwrap();
    let s2 = fs::read(d.join("s2/dataset.jsonl")).unwrap();
    // `generate` above used 40 samples; regenerate the 10-sample references.
    run_env("ref1", "1", &[]);
    run_env("ref2", "2", &[]);
    assert_ne!(s1, s2);
    assert_eq!(read("env1"), read("ref1"));
    assert_eq!(read("flag_over_env"), read("ref1"));
    assert_eq!(read("file_over_env"), read("ref2"));
    assert_eq!(read("flag_over_file"), read("ref1"));

    let o = Command::new(env!("CARGO_BIN_EXE_dygcl"))
        .args(["generate", "--out-dir", "x"])
        .current_dir(d)
        .env("DYGCL_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_paths_resolve_and_unknown_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "g", &["--decoy"]);
    fs::create_dir(d.join("cfg")).unwrap();
    fs::write(
        d.join("cfg/run.toml"),
        "dataset = \"../g/dataset.jsonl\"\nembeddings = \"../g/embeddings.txt\"\n\
         out_dir = \"../run\"\nseed = 3\n[model]\nembed_dim = 8\nlocal_hidden = 4\n\
         global_hidden = 4\nmlp_hidden = 4\nmax_epochs = 4\n",
    )
    .unwrap();
    let o = dygcl(&["train", "--config", "cfg/run.toml", "--epochs", "2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = fs::read_to_string(d.join("run/history.csv")).unwrap();
    assert_eq!(
        history.lines().count(),
        3,
        "flag overrides max_epochs from the file"
    );
    let model = read_model(&d.join("run/model.txt")).unwrap();
    assert_eq!(model.seed, 3);
    assert_eq!(model.config.local_hidden, 4);

    fs::write(d.join("cfg/bad.toml"), "[model]\nembed_dimm = 8\n").unwrap();
    let o = dygcl(&["train", "--config", "cfg/bad.toml"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("embed_dimm"));
}

#[test]
fn train_then_eval_reproduces_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "g", &[]);
    let mut args = vec![
        "train",
        "--dataset",
        "g/dataset.jsonl",
        "--embeddings",
        "g/embeddings.txt",
        "--out-dir",
        "run",
        "--seed",
        "9",
    ];
    args.extend_from_slice(TINY);
    let o = dygcl(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = fs::read_to_string(d.join("run/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,val_acc\n"));
    let trained = parse_record(&fs::read_to_string(d.join("run/metrics.txt")).unwrap()).unwrap();

    let o = dygcl(
        &[
            "eval",
            "--model",
            "run/model.txt",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--out-dir",
            "ev",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let evaluated = parse_record(&fs::read_to_string(d.join("ev/eval_test.txt")).unwrap()).unwrap();
    for key in [
        "accuracy",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "tn",
    ] {
        assert_eq!(trained[key], evaluated[key], "{key}");
    }
    let total: usize = ["tp", "fp", "fn", "tn"]
        .iter()
        .map(|k| evaluated[*k].parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 6);

    let o = dygcl(
        &[
            "eval",
            "--model",
            "run/model.txt",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--split",
            "nope",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "g", &[]);
    let mut args = vec![
        "train",
        "--dataset",
        "g/dataset.jsonl",
        "--embeddings",
        "g/embeddings.txt",
        "--out-dir",
        "run",
        "--lr",
        "1e300",
    ];
    args.extend_from_slice(TINY);
    let o = dygcl(&args, d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("diverged"));
    let model = read_model(&d.join("run/model.txt")).unwrap();
    assert!(model.params.iter().all(|(_, m)| m.is_finite()));
    assert!(d.join("run/history.csv").exists());
}

#[test]
fn all_seeds_and_baseline_write_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "g", &[]);
    for (flag, out) in [("--all-seeds", "dy"), ("--baseline", "base")] {
        let mut args = vec![
            "train",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--out-dir",
            out,
            "--seeds",
            "0,1",
            flag,
        ];
        args.extend_from_slice(TINY);
        let o = dygcl(&args, d);
        assert!(o.status.success(), "{}", stderr(&o));
        let rec =
            parse_record(&fs::read_to_string(d.join(out).join("summary.txt")).unwrap()).unwrap();
        assert_eq!(rec["seeds"], "0,1");
        let a: f64 = rec["seed0.accuracy"].parse().unwrap();
        let b: f64 = rec["seed1.accuracy"].parse().unwrap();
        let mean: f64 = rec["accuracy_mean"].parse().unwrap();
        assert!((mean - (a + b) / 2.0).abs() < 1e-12);
        assert!(d.join(out).join("history_seed1.csv").exists());
    }
}

#[test]
fn gradcheck_passes_for_both_cells() {
    let dir = tempfile::tempdir().unwrap();
    for rnn in ["lstm", "gru"] {
        let o = dygcl(&["gradcheck", "--rnn", rnn, "--seed", "3"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let out = String::from_utf8(o.stdout).unwrap();
        for module in ["local", "global", "head"] {
            assert!(out.contains(&format!("{module} max_rel_err=")), "{out}");
        }
        assert!(out.contains("< 1e-4"));
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "g", &[]);
    let mut args = vec![
        "sweep",
        "--dataset",
        "g/dataset.jsonl",
        "--embeddings",
        "g/embeddings.txt",
        "--out-dir",
        "sw",
        "--axis",
        "lead_days",
        "--values",
        "1,2",
        "--seeds",
        "0",
    ];
    args.extend_from_slice(&TINY[..TINY.len() - 4]);
    args.extend_from_slice(&["--epochs", "1"]);
    let o = dygcl(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("sw/sweep_lead_days.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("lead_days,precision_mean,precision_std,"));
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));

    let o = dygcl(
        &[
            "sweep",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--axis",
            "sideways",
            "--values",
            "1",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_pooled_writes_kept_nodes_in_original_indices() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = dygcl(
        &[
            "generate",
            "--out-dir",
            "g",
            "--samples",
            "20",
            "--d",
            "8",
            "--n",
            "8",
            "--m",
            "4",
            "--t",
            "3",
            "--p",
            "0.4",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let args = vec![
        "train",
        "--dataset",
        "g/dataset.jsonl",
        "--embeddings",
        "g/embeddings.txt",
        "--out-dir",
        "run",
        "--pool-ratio",
        "0.5",
        "--pool-blocks",
        "2",
        "--embed-dim",
        "8",
        "--epochs",
        "2",
        "--batch-size",
        "8",
    ];
    let o = dygcl(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dygcl(
        &[
            "export-pooled",
            "--model",
            "run/model.txt",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--sample",
            "syn-00003",
            "--out-dir",
            "px",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sample = read_dataset(&d.join("g/dataset.jsonl"))
        .unwrap()
        .swap_remove(3);

    let parse = |t: usize, l: usize| {
        let text =
            fs::read_to_string(d.join(format!("px/sample_syn-00003_t{t}_block{l}.edges"))).unwrap();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for line in text.lines() {
            let f: Vec<&str> = line.split(' ').collect();
            match f[0] {
                "node" => nodes.push(f[1].parse::<usize>().unwrap()),
                "edge" => edges.push((
                    f[1].parse::<usize>().unwrap(),
                    f[2].parse::<usize>().unwrap(),
                )),
                other => panic!("unexpected line kind {other}"),
            }
        }
        (nodes, edges)
    };
    for t in 1..=3 {
        let (n1, e1) = parse(t, 1);
        let (n2, e2) = parse(t, 2);
        assert_eq!(n1.len(), 4);
        assert_eq!(n2.len(), 2);
        assert!(n2.iter().all(|v| n1.contains(v)));
        let snap = &sample.snapshots[t - 1];
        for &(u, v) in &e1 {
            assert!(n1.contains(&u) && n1.contains(&v));
            assert!(snap.has_edge(u, v));
        }
        // The first block's coarse graph is exactly the induced subgraph.
        let induced = (0..n1.len())
            .flat_map(|a| (a + 1..n1.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| snap.has_edge(n1[a], n1[b]))
            .count();
        assert_eq!(e1.len(), induced);
        assert!(e2.iter().all(|(u, v)| n2.contains(u) && n2.contains(v)));
    }
    let o = dygcl(
        &[
            "export-pooled",
            "--model",
            "run/model.txt",
            "--dataset",
            "g/dataset.jsonl",
            "--embeddings",
            "g/embeddings.txt",
            "--sample",
            "missing",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ingest_builds_graphs_from_documents() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = [
        r#"{"id":"a","label":1,"days":[{"date":"d1","documents":["Rain floods the city","the city protests"]},{"date":"d2","documents":["Protests spread"]}]}"#,
        r#"{"id":"b","label":0,"days":[{"date":"d1","documents":["quiet day"]},{"date":"d2","documents":["quiet city"]}]}"#,
    ];
    fs::write(d.join("corpus.jsonl"), corpus.join("\n")).unwrap();
    fs::write(d.join("stop.txt"), "the\n").unwrap();
    let o = dygcl(
        &[
            "ingest",
            "--corpus",
            "corpus.jsonl",
            "--out-dir",
            "ing",
            "--d",
            "3",
            "--stopwords",
            "stop.txt",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let samples = read_dataset(&d.join("ing/dataset.jsonl")).unwrap();
    let emb = fs::read_to_string(d.join("ing/embeddings.txt")).unwrap();
    let vocab: Vec<&str> = emb.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(
        vocab,
        ["city", "day", "floods", "protests", "quiet", "rain", "spread"]
    );
    let a = &samples[0];
    assert_eq!((a.sample_id.as_str(), a.label), ("a", 1));
    assert_eq!(a.node_vocab_ids, vec![0, 2, 3, 5, 6]);
    assert_eq!(a.snapshots.len(), 2);
    // "rain floods city" is one window once "the" is dropped.
    let local = |w: usize| a.node_vocab_ids.iter().position(|&v| v == w).unwrap();
    assert!(a.snapshots[0].has_edge(local(5), local(0)));
    assert!(a.snapshots[1].has_edge(local(3), local(6)));
    assert_eq!(a.snapshots[1].num_edges(), 1);

    fs::write(d.join("broken.jsonl"), "{\"id\":\"x\"}\n").unwrap();
    let o = dygcl(
        &["ingest", "--corpus", "broken.jsonl", "--out-dir", "bad"],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"));
}
