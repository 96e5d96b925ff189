mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use cmqe::{cmd_encode, cmd_evaluate, cmd_predict, cmd_split, cmd_train, Cli, CliError, Command};
use cmqe_core::corpus::{load_corpus, write_corpus, Channel, Format, LabelKind, Subtask};
use cmqe_core::metrics::evaluate;
use cmqe_core::Label;

fn parse(args: &[&str]) -> Command {
    Cli::try_parse_from(std::iter::once("cmqe").chain(args.iter().copied()))
        .unwrap()
        .command
}

fn train(args: &[&str]) -> Result<cmqe::TrainOutcome, CliError> {
    match parse(&[&["train"], args].concat()) {
        Command::Train(a) => cmd_train(&a),
        _ => unreachable!(),
    }
}

fn predict(args: &[&str]) -> Result<usize, CliError> {
    match parse(&[&["predict"], args].concat()) {
        Command::Predict(a) => cmd_predict(&a),
        _ => unreachable!(),
    }
}

fn evaluate_cmd(args: &[&str]) -> Result<cmqe_core::metrics::EvaluationReport, CliError> {
    match parse(&[&["evaluate"], args].concat()) {
        Command::Evaluate(a) => cmd_evaluate(&a),
        _ => unreachable!(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_cmqe"))
}

const FAST: [&str; 6] = ["--dim", "16", "--iterations", "20", "--subtask", "A"];

#[test]
fn split_files_partition_the_input_lines() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["c.jsonl", "c.csv"] {
        let input = common::write(dir.path(), name, &common::planted_corpus(200, 1));
        let out = dir.path().join(format!("split-{name}"));
        let Command::Split(a) = parse(&["split", "--corpus", s(&input), "--out-dir", s(&out)])
        else {
            unreachable!()
        };
        let paths = cmd_split(&a).unwrap();
        let again = cmd_split(&a).unwrap();
        assert_eq!(paths, again);

        let text = fs::read_to_string(&input).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = name.ends_with(".csv").then(|| lines.remove(0));
        let mut got: Vec<String> = Vec::new();
        let mut sizes = Vec::new();
        for p in &paths {
            let body = fs::read_to_string(p).unwrap();
            let mut ls: Vec<&str> = body.lines().collect();
            if let Some(h) = header {
                assert_eq!(ls.remove(0), h);
            }
            sizes.push(ls.len());
            got.extend(ls.into_iter().map(String::from));
        }
        assert_eq!(sizes, vec![140, 20, 40]);
        let mut want: Vec<String> = lines.into_iter().map(String::from).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}

#[test]
fn train_writes_model_manifest_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "train.jsonl", &common::planted_corpus(100, 2));
    let out = dir.path().join("run");
    let o = train(&[&["--corpus", s(&corpus), "--out-dir", s(&out)], &FAST[..]].concat()).unwrap();
    assert!(o.model_path.is_file());
    assert_eq!(o.logloss.len(), 21);
    let log = fs::read_to_string(&o.log_path).unwrap();
    assert_eq!(log.lines().count(), 22);
    assert!(log.starts_with("iteration\tlogloss\n0\t"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&o.manifest_path).unwrap()).unwrap();
    let digest = manifest["inputs"][0]["sha256"].as_str().unwrap();
    use sha2::Digest;
    assert_eq!(
        digest,
        hex::encode(sha2::Sha256::digest(fs::read(&corpus).unwrap()))
    );
    assert_eq!(manifest["run"]["seed"], 42);
    assert_eq!(manifest["run"]["train"]["seed"], 42);
    assert_eq!(manifest["run"]["train"]["iterations"], 20);
    assert_eq!(manifest["segment_dims"], serde_json::json!([16, 16, 16]));

    // one changed byte in the corpus changes its digest
    let mut bytes = fs::read(&corpus).unwrap();
    let pos = bytes.iter().position(|&b| b == b'y').unwrap();
    bytes[pos] = b'z';
    fs::write(&corpus, bytes).unwrap();
    let o2 = train(&[&["--corpus", s(&corpus), "--out-dir", s(&out)], &FAST[..]].concat()).unwrap();
    let m2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&o2.manifest_path).unwrap()).unwrap();
    assert_ne!(m2["inputs"][0]["sha256"], manifest["inputs"][0]["sha256"]);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    common::write(dir.path(), "all.jsonl", &common::planted_corpus(120, 3));
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "subtask = \"B\"\nseed = 7\noutput_dir = \"out\"\n[data]\ncorpus = \"all.jsonl\"\nsplit = [0.5, 0.25, 0.25]\n\
         [dims]\nenglish = 8\nhindi = 8\nhinglish = 24\n[train]\niterations = 5\nmax_depth = 2\n",
    )
    .unwrap();
    let o = train(&["--config", s(&cfg), "--iterations", "3"]).unwrap();
    assert_eq!(o.n_instances, 60);
    assert_eq!(o.run.subtask, Subtask::B);
    assert_eq!(
        (
            o.run.train.iterations,
            o.run.train.max_depth,
            o.run.train.seed
        ),
        (3, 2, 7)
    );
    assert_eq!(o.run.encoders.seed, 7);
    assert_eq!(o.model_path, dir.path().join("out").join("model.cmqm"));
    let model = cmqe_core::gbdt::load_model(&o.model_path).unwrap();
    assert_eq!(model.segment_dims, vec![8, 8, 24]);
}

#[test]
fn cached_channels_match_reference_channels() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "c.jsonl", &common::planted_corpus(60, 4));
    let cache = dir.path().join("hinglish.cmqe");
    let Command::Encode(a) = parse(&[
        "encode",
        "--corpus",
        s(&corpus),
        "--channel",
        "hinglish",
        "--dim",
        "16",
        "--out",
        s(&cache),
    ]) else {
        unreachable!()
    };
    assert_eq!(cmd_encode(&a).unwrap(), 60);

    // unit-norm reference tokens survive binary32 storage closely enough to
    // give the same pooled features to within rounding
    let reference = train(
        &[
            &[
                "--corpus",
                s(&corpus),
                "--out-dir",
                s(&dir.path().join("r")),
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap();
    let spec = format!("hinglish=cache:{}", s(&cache));
    let cached = train(
        &[
            &[
                "--corpus",
                s(&corpus),
                "--out-dir",
                s(&dir.path().join("c")),
                "--encoder",
                &spec,
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap();
    let a = reference.logloss.last().unwrap();
    let b = cached.logloss.last().unwrap();
    assert!((a - b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn missing_cache_ids_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let inst = common::planted_corpus(30, 5);
    let small = common::write(dir.path(), "small.jsonl", &inst[..25]);
    let full = common::write(dir.path(), "full.jsonl", &inst);
    let cache = dir.path().join("en.cmqe");
    let Command::Encode(a) = parse(&[
        "encode",
        "--corpus",
        s(&small),
        "--channel",
        "en",
        "--dim",
        "16",
        "--out",
        s(&cache),
    ]) else {
        unreachable!()
    };
    cmd_encode(&a).unwrap();
    let spec = format!("english=cache:{}", s(&cache));
    let err = train(
        &[
            &[
                "--corpus",
                s(&full),
                "--out-dir",
                s(&dir.path().join("o")),
                "--encoder",
                &spec,
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let msg = err.to_string();
    assert!(
        msg.contains("5 of 30") && msg.contains("syn-0025") && msg.contains("syn-0029"),
        "{msg}"
    );
}

#[test]
fn unlabeled_corpus_cannot_train() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(
        dir.path(),
        "u.csv",
        &common::unlabeled(&common::planted_corpus(20, 6)),
    );
    let err = train(
        &[
            &[
                "--corpus",
                s(&corpus),
                "--out-dir",
                s(&dir.path().join("o")),
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("no labels for subtask A"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn predict_recovers_separable_training_labels() {
    // the Hinglish channel alone decides the class: all-fluent vs no fluent tokens
    let dir = tempfile::tempdir().unwrap();
    let inst: Vec<_> = common::planted_corpus(400, 7)
        .into_iter()
        .filter(|i| matches!(i.rating_avg, Some(r) if r == 1.0 || r == 10.0))
        .collect();
    assert!(inst.len() > 40);
    let corpus = common::write(dir.path(), "sep.jsonl", &inst);
    let out = dir.path().join("run");
    let o = train(&[&["--corpus", s(&corpus), "--out-dir", s(&out)], &FAST[..]].concat()).unwrap();
    let preds = dir.path().join("preds.tsv");
    let n = predict(&[
        "--model",
        s(&o.model_path),
        "--corpus",
        s(&corpus),
        "--out",
        s(&preds),
    ])
    .unwrap();
    assert_eq!(n, inst.len());

    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "id\tlabel\tproba:1,10");
    for (line, want) in lines.zip(&inst) {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f[0], want.id);
        let gold = if want.rating_avg == Some(1.0) {
            "1"
        } else {
            "10"
        };
        assert_eq!(f[1], gold);
        let p: f64 = f[2].split(',').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-12);
    }

    let report = evaluate_cmd(&[
        "--golds",
        s(&corpus),
        "--preds",
        s(&preds),
        "--subtask",
        "A",
    ])
    .unwrap();
    assert_eq!(
        (report.f1_weighted, report.cohens_kappa, report.mse),
        (1.0, 1.0, 0.0)
    );
}

#[test]
fn predict_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "c.jsonl", &common::planted_corpus(40, 8));
    let o = train(
        &[
            &[
                "--corpus",
                s(&corpus),
                "--out-dir",
                s(&dir.path().join("o")),
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap();
    let out = dir.path().join("p.tsv");
    let m = s(&o.model_path);

    let err = predict(&[
        "--model",
        m,
        "--corpus",
        s(&corpus),
        "--out",
        s(&out),
        "--dim",
        "32",
    ])
    .unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("expects 48") && msg.contains("produce 96"),
        "{msg}"
    );

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let err = predict(&["--model", m, "--corpus", s(&empty), "--out", s(&out)]).unwrap_err();
    assert!(err.to_string().contains("no instances"), "{err}");

    // defaults recover the model's dims and seed, so output is reproducible
    predict(&["--model", m, "--corpus", s(&corpus), "--out", s(&out)]).unwrap();
    let first = fs::read(&out).unwrap();
    predict(&["--model", m, "--corpus", s(&corpus), "--out", s(&out)]).unwrap();
    assert_eq!(first, fs::read(&out).unwrap());
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 41);
}

fn gold_preds_file(
    dir: &Path,
    corpus: &Path,
    subtask: Subtask,
    shuffle: bool,
) -> std::path::PathBuf {
    let c = load_corpus(corpus, Format::from_path(corpus), LabelKind::Unlabeled).unwrap();
    let labels = c.labels(subtask).unwrap();
    let mut rows: Vec<String> = c
        .ids()
        .zip(&labels)
        .map(|(id, l)| format!("{id}\t{l}\t"))
        .collect();
    if shuffle {
        rows.swap(3, 7);
    }
    let path = dir.join(if shuffle { "shuffled.tsv" } else { "gold.tsv" });
    fs::write(&path, format!("id\tlabel\n{}\n", rows.join("\n"))).unwrap();
    path
}

#[test]
fn evaluate_reports_and_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "c.jsonl", &common::planted_corpus(50, 9));
    let preds = gold_preds_file(dir.path(), &corpus, Subtask::B, false);
    let out = dir.path().join("report");
    let r = evaluate_cmd(&[
        "--golds",
        s(&corpus),
        "--preds",
        s(&preds),
        "--subtask",
        "B",
        "--out-dir",
        s(&out),
    ])
    .unwrap();
    assert_eq!((r.f1_weighted, r.cohens_kappa, r.mse), (1.0, 1.0, 0.0));
    let kv = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(
        kv.contains("f1_weighted=1.00000\ncohens_kappa=1.00000\nkappa_official=false\nmse=0.00000"),
        "{kv}"
    );
    let json: cmqe_core::metrics::EvaluationReport =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json, r);

    let shuffled = gold_preds_file(dir.path(), &corpus, Subtask::B, true);
    let err = evaluate_cmd(&[
        "--golds",
        s(&corpus),
        "--preds",
        s(&shuffled),
        "--subtask",
        "B",
    ])
    .unwrap_err();
    assert!(
        err.to_string()
            .contains("row 4: gold `syn-0003`, prediction `syn-0007`"),
        "{err}"
    );

    let dir_a = dir.path().join("a");
    fs::create_dir(&dir_a).unwrap();
    let preds_a = gold_preds_file(&dir_a, &corpus, Subtask::A, false);
    let bin_out = bin()
        .args([
            "evaluate",
            "--golds",
            s(&corpus),
            "--preds",
            s(&preds_a),
            "--subtask",
            "A",
        ])
        .output()
        .unwrap();
    assert!(bin_out.status.success());
    let stdout = String::from_utf8(bin_out.stdout).unwrap();
    assert!(
        stdout.contains("FS 1.00000  CK 1.00000  MSE 0.00000"),
        "{stdout}"
    );
}

#[test]
fn evaluate_matches_metrics_module() {
    let dir = tempfile::tempdir().unwrap();
    let inst = common::planted_corpus(80, 10);
    let corpus = common::write(dir.path(), "c.csv", &inst);
    let golds: Vec<Label> = inst
        .iter()
        .map(|i| i.label(Subtask::A).unwrap().unwrap())
        .collect();
    let preds: Vec<Label> = golds
        .iter()
        .enumerate()
        .map(|(k, l)| if k % 3 == 0 { Label::from(5) } else { *l })
        .collect();
    let body: Vec<String> = inst
        .iter()
        .zip(&preds)
        .map(|(i, p)| format!("{}\t{p}", i.id))
        .collect();
    let pf = dir.path().join("p.tsv");
    fs::write(&pf, format!("id\tlabel\tproba:\n{}\n", body.join("\n"))).unwrap();
    let r = evaluate_cmd(&["--golds", s(&corpus), "--preds", s(&pf), "--subtask", "a"]).unwrap();
    assert_eq!(r, evaluate(&golds, &preds, Subtask::A).unwrap());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "c.jsonl", &common::planted_corpus(20, 11));
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();

    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(
        code(&[
            "train",
            "--corpus",
            "/nonexistent.jsonl",
            "--subtask",
            "A",
            "--out-dir",
            "x"
        ]),
        2
    );
    assert_eq!(
        code(&["train", "--corpus", s(&corpus), "--out-dir", s(dir.path())]),
        2
    );
    assert_eq!(code(&["train", "--config", "/nonexistent.toml"]), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "subtask = \"A\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&["train", "--config", s(&bad)]), 2);
    assert_eq!(
        code(&[
            "train",
            "--corpus",
            s(&corpus),
            "--subtask",
            "A",
            "--out-dir",
            s(dir.path()),
            "--learning-rate",
            "0"
        ]),
        2
    );

    let unlabeled = common::write(
        dir.path(),
        "u.jsonl",
        &common::unlabeled(&common::planted_corpus(20, 11)),
    );
    let out = bin()
        .args([
            "train",
            "--corpus",
            s(&unlabeled),
            "--subtask",
            "A",
            "--out-dir",
            s(dir.path()),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no labels for subtask A"));

    let garbage = dir.path().join("g.jsonl");
    fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(
        code(&[
            "encode",
            "--corpus",
            s(&garbage),
            "--channel",
            "hindi",
            "--out",
            s(&dir.path().join("h.cmqe"))
        ]),
        1
    );
    assert_eq!(
        code(&[
            "train",
            "--corpus",
            s(&corpus),
            "--subtask",
            "A",
            "--out-dir",
            s(&dir.path().join("ok")),
            "--dim",
            "8",
            "--iterations",
            "2"
        ]),
        0
    );
}

#[test]
fn csv_split_keeps_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst = common::planted_corpus(30, 12);
    inst[0].english = "has, comma and \"quotes\"\nand a newline".into();
    let input = dir.path().join("c.csv");
    write_corpus(&input, &inst, Format::Csv).unwrap();
    let Command::Split(a) = parse(&[
        "split",
        "--corpus",
        s(&input),
        "--out-dir",
        s(dir.path()),
        "--seed",
        "3",
    ]) else {
        unreachable!()
    };
    let paths = cmd_split(&a).unwrap();
    let mut seen = HashMap::new();
    for p in &paths {
        assert_eq!(p.extension().unwrap(), "csv");
        for i in load_corpus(p, Format::Csv, LabelKind::Rating)
            .unwrap()
            .instances
        {
            seen.insert(i.id.clone(), i);
        }
    }
    assert_eq!(seen.len(), 30);
    for i in &inst {
        assert_eq!(&seen[&i.id], i);
    }
    let _ = Channel::ALL;
}

#[test]
fn split_flag_trains_on_the_split_train_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write(dir.path(), "all.jsonl", &common::planted_corpus(90, 13));
    let Command::Split(a) = parse(&["split", "--corpus", s(&corpus), "--out-dir", s(dir.path())])
    else {
        unreachable!()
    };
    let [train_file, _, _] = cmd_split(&a).unwrap();
    let via_file = train(
        &[
            &[
                "--corpus",
                s(&train_file),
                "--out-dir",
                s(&dir.path().join("f")),
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap();
    let via_flag = train(
        &[
            &[
                "--corpus",
                s(&corpus),
                "--split",
                "0.7,0.1,0.2",
                "--out-dir",
                s(&dir.path().join("s")),
            ],
            &FAST[..],
        ]
        .concat(),
    )
    .unwrap();
    assert_eq!(via_flag.n_instances, 63);
    assert_eq!(
        fs::read(via_file.model_path).unwrap(),
        fs::read(via_flag.model_path).unwrap()
    );
}
