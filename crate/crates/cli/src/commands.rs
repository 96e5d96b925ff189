use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cmqe_core::corpus::{
    load_corpus, read_raw_records, split_corpus, split_indices, Corpus, Format, LabelKind,
    SplitSpec, Subtask,
};
use cmqe_core::embedding::{
    write_embedding_cache, ReferenceEncoder, TokenEmbeddingSequence, DEFAULT_DIM,
};
use cmqe_core::gbdt::{encode_model, fit_with_history, load_model, BoostedEnsemble};
use cmqe_core::metrics::{evaluate, EvaluationReport};
use cmqe_core::Label;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{
    parse_subtask, train_config, ConfigFile, EncoderSettings, EncoderSpec, RunConfig, DEFAULT_SEED,
};
use crate::error::{CliError, Result};
use crate::features::FeatureBuilder;
use crate::predictions::{self, Prediction};
use crate::{EncodeArgs, EvaluateArgs, PredictArgs, SplitArgs, TrainArgs};

pub const MODEL_FILE: &str = "model.cmqm";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Labels are checked per subtask by the caller.
fn open_corpus(path: &Path, format: Option<Format>) -> Result<Corpus> {
    require_file(path, "corpus")?;
    Ok(load_corpus(
        path,
        format.unwrap_or_else(|| Format::from_path(path)),
        LabelKind::Unlabeled,
    )?)
}

/// Writes `train`, `val` and `test` files next to each other, copying every
/// record verbatim from the source.
pub fn cmd_split(args: &SplitArgs) -> Result<[PathBuf; 3]> {
    let [a, b, c] = args.ratios;
    let spec = SplitSpec::new(a, b, c, args.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let format = args
        .format
        .unwrap_or_else(|| Format::from_path(&args.corpus));
    let corpus = open_corpus(&args.corpus, Some(format))?;
    let raw = read_raw_records(&args.corpus, format)?;
    assert_eq!(
        raw.records.len(),
        corpus.len(),
        "raw and parsed record counts agree"
    );
    let parts = split_indices(corpus.len(), &spec)?;

    create_dir(&args.out_dir)?;
    let names = ["train", "val", "test"];
    let mut paths: [PathBuf; 3] = Default::default();
    for (k, idx) in parts.iter().enumerate() {
        let mut out = raw.header.clone().unwrap_or_default();
        for &i in idx {
            out.push_str(&raw.records[i].text);
        }
        let path = args
            .out_dir
            .join(format!("{}.{}", names[k], format.extension()));
        write_file(&path, out)?;
        paths[k] = path;
    }
    Ok(paths)
}

/// Encodes one channel with the reference encoder. Returns the sentence count.
pub fn cmd_encode(args: &EncodeArgs) -> Result<usize> {
    let corpus = open_corpus(&args.corpus, args.format)?;
    let enc =
        ReferenceEncoder::new(args.dim, args.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let seqs: Vec<TokenEmbeddingSequence> = corpus
        .instances
        .par_iter()
        .map(|inst| enc.encode(&inst.id, inst.text(args.channel)))
        .collect::<Result<_, _>>()?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_embedding_cache(&args.out, args.dim, &seqs)?;
    Ok(seqs.len())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub manifest_path: PathBuf,
    pub log_path: PathBuf,
    pub n_instances: usize,
    /// Training logloss before the first round and after each round.
    pub logloss: Vec<f64>,
    pub run: RunConfig,
}

#[derive(Serialize)]
struct InputDigest {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    created_unix: u64,
    run: &'a RunConfig,
    inputs: Vec<InputDigest>,
    n_instances: usize,
    class_labels: &'a [Label],
    segment_dims: &'a [usize],
    model_sha256: String,
    final_logloss: Option<f64>,
}

pub fn resolve_train(args: &TrainArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let subtask = args
        .subtask
        .as_deref()
        .or(file.subtask.as_deref())
        .ok_or_else(|| CliError::Usage("no subtask given (A or B)".into()))
        .and_then(parse_subtask)?;
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let (corpus, split) = match (&args.corpus, &file.data.train, &file.data.corpus) {
        (Some(c), _, _) => (c.clone(), args.split),
        (None, Some(t), _) => (t.clone(), args.split),
        (None, None, Some(c)) => (
            c.clone(),
            args.split
                .or(file.data.split)
                .or(Some(SplitSpec::default().ratios)),
        ),
        (None, None, None) => return Err(CliError::Usage("no training corpus given".into())),
    };
    require_file(&corpus, "corpus")?;
    let output_dir = args
        .out_dir
        .clone()
        .or(file.output_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory given".into()))?;
    let mut section = file.train.unwrap_or_default();
    section.iterations = args.iterations.or(section.iterations);
    section.learning_rate = args.learning_rate.or(section.learning_rate);
    section.max_depth = args.max_depth.or(section.max_depth);
    section.min_samples_leaf = args.min_samples_leaf.or(section.min_samples_leaf);
    section.l2_leaf_reg = args.l2_leaf_reg.or(section.l2_leaf_reg);
    let train = train_config(Some(section), seed);
    train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let encoders = EncoderSettings::resolve(
        &file,
        &args.encoder.encoders,
        args.encoder.dim,
        [DEFAULT_DIM; 3],
        seed,
    )?;
    Ok(RunConfig {
        subtask,
        seed,
        corpus,
        split,
        encoders,
        train,
        output_dir,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let run = resolve_train(args)?;
    let mut corpus = open_corpus(&run.corpus, None)?;
    if let Some([a, b, c]) = run.split {
        let spec = SplitSpec::new(a, b, c, run.seed).map_err(|e| CliError::Usage(e.to_string()))?;
        corpus = split_corpus(&corpus, &spec)?.0;
    }
    let labels = corpus.labels(run.subtask)?;
    let builder = FeatureBuilder::open(&run.encoders)?;
    let x = builder.build(&corpus)?;
    let (model, history) = fit_with_history(&x, &labels, &run.train)?;

    create_dir(&run.output_dir)?;
    let model_bytes = encode_model(&model);
    let model_path = run.output_dir.join(MODEL_FILE);
    write_file(&model_path, &model_bytes)?;

    let mut log = String::from("iteration\tlogloss\n");
    for (i, l) in history.iter().enumerate() {
        log.push_str(&format!("{i}\t{l}\n"));
    }
    let log_path = run.output_dir.join(TRAIN_LOG_FILE);
    write_file(&log_path, log)?;

    let mut inputs = vec![digest("corpus", &run.corpus)?];
    if let Some(c) = &args.config {
        inputs.push(digest("config", c)?);
    }
    for ch in cmqe_core::corpus::Channel::ALL {
        if let EncoderSpec::Cache(p) = &run.encoders.get(ch).encoder {
            inputs.push(digest(&format!("{ch}_cache"), p)?);
        }
    }
    let manifest = Manifest {
        tool: "cmqe",
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        run: &run,
        inputs,
        n_instances: corpus.len(),
        class_labels: &model.class_labels,
        segment_dims: &model.segment_dims,
        model_sha256: hex::encode(Sha256::digest(&model_bytes)),
        final_logloss: history.last().copied(),
    };
    let manifest_path = run.output_dir.join(MANIFEST_FILE);
    write_file(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    Ok(TrainOutcome {
        model_path,
        manifest_path,
        log_path,
        n_instances: corpus.len(),
        logloss: history,
        run,
    })
}

fn digest(role: &str, path: &Path) -> Result<InputDigest> {
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

fn model_segments(model: &BoostedEnsemble) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(model.segment_dims.as_slice()).map_err(|_| {
        CliError::Runtime(format!(
            "model has {} input segments, expected 3",
            model.segment_dims.len()
        ))
    })
}

/// Writes predictions in corpus order. Returns the number of rows.
pub fn cmd_predict(args: &PredictArgs) -> Result<usize> {
    require_file(&args.model, "model")?;
    let model = load_model(&args.model)?;
    let model_dims = model_segments(&model)?;
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = args.seed.or(file.seed).unwrap_or(model.config.seed);
    let settings = EncoderSettings::resolve(
        &file,
        &args.encoder.encoders,
        args.encoder.dim,
        model_dims,
        seed,
    )?;
    let corpus = open_corpus(&args.corpus, None)?;
    if corpus.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} holds no instances",
            args.corpus.display()
        )));
    }
    let builder = FeatureBuilder::open(&settings)?;
    let have = builder.segment_dims();
    if have != model_dims {
        return Err(CliError::Runtime(format!(
            "feature dimension mismatch: model expects {} ({model_dims:?}), encoders produce {} ({have:?})",
            model.feature_dim,
            have.iter().sum::<usize>()
        )));
    }
    let x = builder.build(&corpus)?;
    let proba = model.predict_proba_matrix(&x)?;
    let rows: Vec<Prediction> = corpus
        .instances
        .iter()
        .zip(proba)
        .map(|(inst, p)| Prediction {
            id: inst.id.clone(),
            label: model.class_labels[cmqe_core::gbdt::argmax(&p)],
            proba: p,
        })
        .collect();
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&args.out, predictions::render(&model.class_labels, &rows))?;
    Ok(rows.len())
}

/// Predictions must list the gold ids in the same order.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let subtask: Subtask = parse_subtask(&args.subtask)?;
    require_file(&args.preds, "predictions file")?;
    let gold = open_corpus(&args.golds, None)?;
    let golds = gold.labels(subtask)?;
    let text = fs::read_to_string(&args.preds).map_err(CliError::io(&args.preds))?;
    let preds = predictions::parse(&text)?;
    if let Some((i, (g, p))) = gold
        .ids()
        .zip(&preds)
        .enumerate()
        .find(|(_, (g, p))| *g != p.id)
    {
        return Err(CliError::Runtime(format!(
            "id mismatch at row {}: gold `{g}`, prediction `{}`",
            i + 1,
            p.id
        )));
    }
    if preds.len() != gold.len() {
        return Err(CliError::Runtime(format!(
            "{} gold instances but {} predictions",
            gold.len(),
            preds.len()
        )));
    }
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let report = evaluate(&golds, &labels, subtask)?;
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("report.txt"), report.to_key_value())?;
        write_file(
            &dir.join("report.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
    }
    Ok(report)
}
