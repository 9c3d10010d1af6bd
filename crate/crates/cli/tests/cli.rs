use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use layermix::analysis::sequence_tree;
use layermix::io::{load_model, save_model, ModelFile, VocabularySet};
use layermix::synthetic::{separated_model, SeparatedSpec};
use layermix::DataRates;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layermix"))
}

fn run<A: AsRef<OsStr>>(args: &[A]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok<A: AsRef<OsStr> + std::fmt::Debug>(args: &[A]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// A generator model file, a 300-episode corpus sampled from it, and a
    /// vocabulary built from that corpus.
    fn new(top: &[f64]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SeparatedSpec {
            top_weights: top.to_vec(),
            n_sub: 2,
            n_hmm: 2,
            block: 2,
            mixing_peak: 0.8,
            rates: DataRates {
                beds: 3.0,
                diagnoses: 2.0,
                labs: (3.0, 2.0),
                neuro: (2.0, 1.0),
                meds: (2.0, 1.5),
            },
        };
        let model = separated_model(&spec).unwrap();
        let vocab = VocabularySet::synthetic(&spec.vocab_sizes());
        let f = Fixture { dir };
        save_model(&f.path("gen.json"), &ModelFile::new(model, vocab).unwrap()).unwrap();
        ok(&[
            "sample", "--model", s(&f.path("gen.json")), "--n", "300", "--seed", "5",
            "--out", s(&f.path("corpus.jsonl")), "--sidecar", s(&f.path("latent.jsonl")),
        ]);
        ok(&["build-vocab", "--corpus", s(&f.path("corpus.jsonl")), "--out", s(&f.path("vocab.json"))]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, threads: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = ["--threads", threads, "train", "--corpus"]
            .map(String::from)
            .to_vec();
        args.push(s(&self.path("corpus.jsonl")).into());
        args.push("--vocab".into());
        args.push(s(&self.path("vocab.json")).into());
        args.push("--out".into());
        args.push(s(&self.path(out)).into());
        let hp = "--top 2 --diagnoses 2 --beds 2 --labs 2 --neuro 1 --meds 1 \
                  --hmm-labs 2 --hmm-neuro 1 --hmm-meds 2 --seed 11 --max-iters 30";
        args.extend(hp.split_whitespace().map(String::from));
        args.extend(extra.iter().map(|a| a.to_string()));
        run(&args)
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn training_is_byte_identical_across_runs_and_threads() {
    let f = Fixture::new(&[0.6, 0.4]);
    let a = f.train("a.json", "1", &["--report", s(&f.path("a.report.json"))]);
    let b = f.train("b.json", "4", &[]);
    for out in [&a, &b] {
        let code = out.status.code().unwrap();
        assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(read(&f.path("a.json")), read(&f.path("b.json")));
    let report: serde_json::Value = serde_json::from_str(&read(&f.path("a.report.json"))).unwrap();
    assert!(report["log_lik_trace"].as_array().unwrap().len() >= 2);
}

#[test]
fn iteration_limit_exits_with_two() {
    let f = Fixture::new(&[0.6, 0.4]);
    let out = f.train("m.json", "2", &["--max-iters", "1", "--rel-tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(f.path("m.json").exists());
}

#[test]
fn missing_vocab_fails_without_writing() {
    let f = Fixture::new(&[1.0]);
    let missing = f.path("nope.json");
    let out = run(&[
        "train", "--corpus", s(&f.path("corpus.jsonl")), "--vocab", s(&missing),
        "--out", s(&f.path("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
    assert!(!f.path("m.json").exists());
}

#[test]
fn unknown_token_names_line() {
    let f = Fixture::new(&[1.0]);
    let mut text = read(&f.path("corpus.jsonl"));
    text.push_str("{\"age\":40,\"beds\":[\"NOT_A_BED\"]}\n");
    fs::write(f.path("bad.jsonl"), &text).unwrap();
    let lines = text.lines().count();
    let out = run(&[
        "summarize", "--corpus", s(&f.path("bad.jsonl")), "--vocab", s(&f.path("vocab.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("NOT_A_BED") && err.contains(&lines.to_string()), "{err}");

    let out = ok(&[
        "summarize", "--corpus", s(&f.path("bad.jsonl")), "--vocab", s(&f.path("vocab.json")),
        "--skip-invalid",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("300"));
}

#[test]
fn singleton_select_matches_train() {
    let f = Fixture::new(&[0.6, 0.4]);
    f.train("train.json", "2", &[]);
    let paths = ["corpus.jsonl", "vocab.json", "sel.json", "sel.txt"].map(|n| f.path(n));
    let mut args = vec![
        "select", "--corpus", s(&paths[0]), "--vocab", s(&paths[1]),
        "--out", s(&paths[2]), "--report", s(&paths[3]),
        "--top", "2", "--seed", "11", "--max-iters", "30",
    ];
    let pairs = [
        ("--grid-diagnoses", "2"), ("--grid-beds", "2"), ("--grid-labs", "2"),
        ("--grid-neuro", "1"), ("--grid-meds", "1"), ("--grid-hmm-labs", "2"),
        ("--grid-hmm-neuro", "1"), ("--grid-hmm-meds", "2"),
    ];
    for (k, v) in pairs {
        args.extend([k, v]);
    }
    let out = run(&args);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&f.path("train.json")), read(&f.path("sel.json")));
    let report = read(&f.path("sel.txt"));
    assert!(report.contains("# fits 9"), "{report}");
}

#[test]
fn score_is_finite_and_totals() {
    let f = Fixture::new(&[0.6, 0.4]);
    let out = ok(&["score", "--model", s(&f.path("gen.json")), "--corpus", s(&f.path("corpus.jsonl"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut sum = 0.0;
    let mut rows = 0;
    let mut total = None;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        match cols[0] {
            "# total" => total = Some(cols[1].parse::<f64>().unwrap()),
            "# episodes" => assert_eq!(cols[1], "300"),
            _ => {
                let v: f64 = cols[1].parse().unwrap();
                assert!(v.is_finite() && v < 0.0);
                sum += v;
                rows += 1;
            }
        }
    }
    assert_eq!(rows, 300);
    assert!((total.unwrap() - sum).abs() < 1e-9 * sum.abs());
}

#[test]
fn enrichment_with_one_top_state_is_constant() {
    let f = Fixture::new(&[1.0]);
    let out = ok(&["analyze", "enrichment", "--model", s(&f.path("gen.json")), "--target", "death"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let p = load_model(&f.path("gen.json")).unwrap().model.scalars(0).death.p();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("rank"))
        .map(|l| l.split('\t').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(!values.is_empty());
    for v in values {
        assert!((v - p).abs() < 1e-12);
    }
}

#[test]
fn bed_trees_match_enumeration() {
    let f = Fixture::new(&[0.6, 0.4]);
    let dir = f.path("trees");
    ok(&[
        "analyze", "bed-trees", "--model", s(&f.path("gen.json")), "--threshold", "0.005",
        "--out-dir", s(&dir),
    ]);
    let model = load_model(&f.path("gen.json")).unwrap();
    for (k, state) in model.model.beds().states().iter().enumerate() {
        let dot = read(&dir.join(format!("beds_state_{k}.dot")));
        let tree = sequence_tree(state, 0.005, None).unwrap();
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!(edges, tree.nodes.len());
        // Every sequence above the threshold appears as a node.
        for (path, p) in tree.sequences() {
            let direct = state.length.pmf(path.len())
                * state.chain.initial().prob(path[0])
                * path.windows(2).map(|w| state.chain.transition(w[0]).prob(w[1])).product::<f64>();
            assert!((direct - p).abs() < 1e-12);
            assert!(dot.contains(&format!("[label=\"{p}\"]")));
        }
    }
}

#[test]
fn analysis_commands_run() {
    let f = Fixture::new(&[0.6, 0.4]);
    let m = s(&f.path("gen.json")).to_owned();
    let out = ok(&["analyze", "state-dist", "--model", &m, "--stream", "labs"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("# stream labs"));
    let out = ok(&["analyze", "trajectories", "--model", &m, "--stream", "labs", "--top-k", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("# state 1"));
    for stream in ["beds", "admission_dx", "meds"] {
        let out = ok(&["analyze", "top-items", "--model", &m, "--stream", stream, "--top-k", "2"]);
        assert!(String::from_utf8_lossy(&out.stdout).lines().count() > 1);
    }
    let out = ok(&[
        "analyze", "infer", "--model", &m, "--corpus", s(&f.path("corpus.jsonl")),
        "--target", "death", "--hide-target", "--unobserved", "meds,neuro",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 301);
    for line in text.lines().skip(1) {
        let p: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    fs::write(f.path("part.tsv"), "# groups\nfirst\tL0\tL1,L2\n").unwrap();
    let out = ok(&[
        "analyze", "likelihood-ratios", "--model", &m, "--stream", "labs",
        "--partition", s(&f.path("part.tsv")),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("state\tfirst\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_arguments_are_rejected_before_work() {
    let f = Fixture::new(&[1.0]);
    let m = s(&f.path("gen.json")).to_owned();
    let out = run(&["analyze", "top-items", "--model", &m, "--stream", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = run(&[
        "sample", "--model", &m, "--n", "0", "--out", s(&f.path("x")), "--sidecar", s(&f.path("y")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!f.path("x").exists());
    let out = run(&["analyze", "trajectories", "--model", &m, "--stream", "beds"]);
    assert_eq!(out.status.code(), Some(1));
}
