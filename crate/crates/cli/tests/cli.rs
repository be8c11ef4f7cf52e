use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qbe_core::corpus::{
    read_scores, write_features, write_ground_truth, write_scores, FeatureMatrix, GroundTruth, QueryDef, ScoreEntry,
    ScoreTable, Trial,
};
use qbe_core::corpus::{write_lexicon, write_queries, Lexicon};
use qbe_core::encoder::{save_checkpoint, Architecture, EmbeddingModel, Pooling, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy")
}

fn qbe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qbe(args);
    assert!(
        out.status.success(),
        "qbe {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_toy_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["validate", "--corpus", s(&toy()), "--out-dir", s(dir.path())]);
    assert!(stdout.trim().is_empty(), "unexpected violations: {stdout}");
    let report = std::fs::read_to_string(dir.path().join("violations.txt")).unwrap();
    assert!(report.is_empty());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn validate_reports_broken_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    copy_dir(&toy(), &corpus);
    let ali = corpus.join("train/align.txt");
    let text = std::fs::read_to_string(&ali).unwrap();
    std::fs::write(&ali, format!("{text}train_0000 0 3 nosuchword\n")).unwrap();
    let out = qbe(&["validate", "--corpus", s(&corpus), "--out-dir", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("nosuchword"));
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nlearning_rat = 0.1\n").unwrap();
    let out = qbe(&["synth", "--config", s(&cfg), "--out-dir", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    let out = qbe(&["synth", "--set", "synth.nope=1", "--out-dir", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
}

#[test]
fn effective_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 4\n[eval]\nbeta = 3.0\n").unwrap();
    let out = dir.path().join("o");
    let scores = write_constant_scores(dir.path());
    ok(&[
        "evaluate",
        "--scores",
        s(&scores),
        "--truth",
        s(&toy().join("ground_truth.txt")),
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--out-dir",
        s(&out),
    ]);
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 9"));
    assert!(echoed.contains("beta = 3.0"));
    assert!(echoed.contains("[synth]"));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.lines().nth(1).unwrap().ends_with("\t3"));
}

fn write_constant_scores(dir: &Path) -> PathBuf {
    let truth = std::fs::read_to_string(toy().join("ground_truth.txt")).unwrap();
    let entries = truth
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            ScoreEntry {
                query_id: f[0].into(),
                utterance_id: f[1].into(),
                score: 0.5,
            }
        })
        .collect();
    let p = dir.join("const.tsv");
    write_scores(&ScoreTable::new(entries).unwrap(), &p).unwrap();
    p
}

#[test]
fn constant_scores_evaluate_to_uninformative() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write_constant_scores(dir.path());
    let stdout = ok(&[
        "evaluate",
        "--scores",
        s(&scores),
        "--truth",
        s(&toy().join("ground_truth.txt")),
        "--out-dir",
        s(dir.path()),
    ]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("min_cnxe\tmax_twv\tbeta"));
    let values: Vec<f64> = lines.next().unwrap().split('\t').map(|v| v.parse().unwrap()).collect();
    assert!((values[0] - 1.0).abs() < 1e-3);
    assert_eq!(values[1], 0.0);
    assert!(lines.all(|l| l.starts_with("tag=")));
}

#[test]
fn fuse_sums_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    std::fs::write(&a, "q1\tu1\t0.5\nq1\tu2\t-1.25\nq2\tu1\t2\n").unwrap();
    std::fs::write(&b, "q2\tu1\t1\nq1\tu1\t0.25\nq1\tu2\t0.5\n").unwrap();
    ok(&["fuse", s(&a), s(&b), "--out-dir", s(dir.path())]);
    let fused = read_scores(dir.path().join("fused.tsv")).unwrap();
    let look = fused.lookup();
    assert_eq!(look[&("q1", "u1")], 0.75);
    assert_eq!(look[&("q1", "u2")], -0.75);
    assert_eq!(look[&("q2", "u1")], 3.0);
    assert_eq!(fused.len(), 3);

    std::fs::write(&b, "q1\tu1\t0.25\n").unwrap();
    let out = qbe(&["fuse", s(&a), s(&b), "--out-dir", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn malformed_scores_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    std::fs::write(&a, "q1\tu1\t0.5\nq1\tu2\n").unwrap();
    let out = qbe(&["fuse", s(&a), "--out-dir", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("a.tsv:2"), "{err}");
}

/// Queries planted verbatim as whole utterances: every relevant trial scores
/// exactly the query's self-similarity, every other trial scores lower.
#[test]
fn search_then_evaluate_on_planted_data() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let dim = 4;
    let lexicon = Lexicon::new([("w".to_string(), vec!["p".to_string()])].into_iter().collect()).unwrap();
    let arch = Architecture {
        stage: Stage::Word,
        input_dim: dim,
        hidden: 6,
        word_layers: 2,
        span_layers: 0,
        pooling: Pooling::Mean,
        dropout: 0.0,
        phone_dim: 2,
        phones: lexicon.phones().to_vec(),
    };
    let model = EmbeddingModel::init(arch, 5).unwrap();
    save_checkpoint(&model, root.join("m.ckpt")).unwrap();
    write_lexicon(&lexicon, root.join("lexicon.txt")).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random = |id: &str| {
        let data = (0..12 * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        FeatureMatrix::new(id, 12, dim, data).unwrap()
    };
    let qa = random("qa");
    let qb = random("qb");
    let collection = [
        qa.excise("u1", 0, 11).unwrap(),
        qa.excise("u2", 0, 11).unwrap(),
        qb.excise("u3", 0, 11).unwrap(),
        random("u4"),
        random("u5"),
    ];
    for x in &collection {
        write_features(x, root.join(format!("coll/feats/{}.fea", x.utterance_id()))).unwrap();
    }
    let queries: Vec<QueryDef> = [qa, qb]
        .into_iter()
        .map(|features| QueryDef {
            features,
            words: vec!["w".into()],
            tag: None,
        })
        .collect();
    write_queries(&queries, root.join("queries")).unwrap();
    let relevant = [("qa", "u1"), ("qa", "u2"), ("qb", "u3")];
    let trials = ["qa", "qb"]
        .iter()
        .flat_map(|q| collection.iter().map(move |u| (*q, u.utterance_id().to_owned())))
        .map(|(q, u)| Trial {
            relevant: relevant.contains(&(q, u.as_str())),
            query_id: q.into(),
            utterance_id: u,
            tag: None,
        })
        .collect();
    write_ground_truth(&GroundTruth::new(trials).unwrap(), root.join("truth.txt")).unwrap();

    let m = root.join("m.ckpt");
    let out = root.join("out");
    ok(&["index", "--model", s(&m), "--collection", s(&root.join("coll")), "--out-dir", s(&out)]);
    ok(&[
        "search",
        "--model",
        s(&m),
        "--index",
        s(&out.join("index.idx")),
        "--queries",
        s(&root.join("queries")),
        "--min-ratio",
        "2/3",
        "--out-dir",
        s(&out),
    ]);
    let stdout = ok(&[
        "evaluate",
        "--scores",
        s(&out.join("scores.tsv")),
        "--truth",
        s(&root.join("truth.txt")),
        "--out-dir",
        s(&out),
    ]);
    let values: Vec<f64> = stdout.lines().nth(1).unwrap().split('\t').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values[1], 1.0, "{stdout}");
    assert!(values[0] <= 0.05, "{stdout}");
}

#[test]
fn synth_is_byte_reproducible_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| -> Vec<String> {
        [
            "synth",
            "--seed",
            "2",
            "--set",
            "synth.train_utterances=5",
            "--set",
            "synth.dev_utterances=2",
            "--set",
            "synth.search_utterances=4",
            "--set",
            "synth.one_word_queries=2",
            "--set",
            "synth.two_word_queries=2",
            "--out-dir",
            out.to_str().unwrap(),
        ]
        .map(String::from)
        .to_vec()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let args = args(out);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }
    assert_eq!(tree(&a), tree(&b));
    let stdout = ok(&["validate", "--corpus", s(&a), "--out-dir", s(&dir.path().join("v"))]);
    assert!(stdout.trim().is_empty());
}

/// Relative path and contents of every file under `root`, sorted.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_owned(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn train_index_search_and_bench_on_toy_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let common = [
        "--set",
        "augment.f_max=2",
        "--set",
        "model.hidden=6",
        "--set",
        "model.phone_dim=3",
        "--set",
        "train.frame_budget=200",
        "--out-dir",
        s(out),
    ];
    let run = |extra: &[&str]| ok(&extra.iter().chain(common.iter()).copied().collect::<Vec<_>>());
    run(&["train-awe", "--corpus", s(&toy()), "--set", "train.steps=3", "--set", "train.eval_every=2"]);
    let log = std::fs::read_to_string(out.join("train_log.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step\tloss\tk\tdev_ap");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with("\t-"));
    assert!(!lines[2].ends_with("\t-"));

    let awe = out.join("awe.ckpt");
    run(&["train-ase", "--corpus", s(&toy()), "--init", s(&awe), "--set", "train.steps=2"]);
    assert!(out.join("ase.ckpt").exists());

    run(&["index", "--model", s(&awe), "--collection", s(&toy().join("search")), "--sizes", "12,18,24", "--shift", "3"]);
    let queries = toy().join("queries");
    run(&["search", "--model", s(&awe), "--index", s(&out.join("index.idx")), "--queries", s(&queries)]);
    let scores = read_scores(out.join("scores.tsv")).unwrap();
    assert_eq!(scores.len(), 4 * 4);

    run(&["dtw-search", "--queries", s(&queries), "--collection", s(&toy().join("search")), "--dtw-window", "40"]);
    assert_eq!(read_scores(out.join("dtw_scores.tsv")).unwrap().len(), 16);

    let line = run(&["bench", "--queries", s(&queries), "--backend", "embedding", "--model", s(&awe), "--index", s(&out.join("index.idx"))]);
    let f: Vec<&str> = line.trim().split('\t').collect();
    assert_eq!(f[0], "embedding");
    assert!(f[1].parse::<f64>().unwrap() >= 0.0);

    let line = run(&["bench", "--queries", s(&queries), "--backend", "dtw-hidden", "--model", s(&awe), "--collection", s(&toy().join("search"))]);
    assert!(line.starts_with("dtw-hidden\t"));

    let table = run(&["discriminate", "--corpus", s(&toy()), "--scoring", "dtw-raw"]);
    let mut rows = table.lines();
    assert_eq!(rows.next(), Some("ap\tpairs\tpositives\tprior"));
    let ap: f64 = rows.next().unwrap().split('\t').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&ap));
}

#[test]
fn missing_input_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qbe(&["train-awe", "--corpus", s(&dir.path().join("nothing")), "--out-dir", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
