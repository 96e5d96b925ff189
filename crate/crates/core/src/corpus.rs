//! Triplet corpora: ingestion, validation, label binning and seeded splitting.
//!
//! A corpus is an ordered list of [`Instance`]s, each holding an English, a
//! Hindi and a Hinglish sentence plus optional quality labels. Text is never
//! normalised or cleaned on the way in.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::rng::SplitMix64;

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 10.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },
    #[error("line {line}: record `{id}`: {message}")]
    Invalid {
        line: u64,
        id: String,
        message: String,
    },
    #[error("line {line}: duplicate id `{id}` (first seen on line {first_line})")]
    DuplicateId {
        line: u64,
        id: String,
        first_line: u64,
    },
    #[error("invalid split ratios: {0}")]
    InvalidSplit(String),
    #[error("corpus is empty")]
    Empty,
    #[error("rating {0} outside [1, 10]")]
    RatingOutOfRange(f64),
    #[error("cannot build a class vocabulary from an empty label list")]
    EmptyLabels,
    #[error("no labels for subtask {subtask}: {missing} of {total} records lack `{field}` (first: `{first_id}`)")]
    MissingLabels {
        subtask: Subtask,
        field: &'static str,
        missing: usize,
        total: usize,
        first_id: String,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Shared-task subtask: A predicts the quality rating, B the annotator disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subtask {
    A,
    B,
}

impl Subtask {
    pub fn label_kind(self) -> LabelKind {
        match self {
            Subtask::A => LabelKind::Rating,
            Subtask::B => LabelKind::Disagreement,
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subtask::A => f.write_str("A"),
            Subtask::B => f.write_str("B"),
        }
    }
}

impl std::str::FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Subtask::A),
            "B" | "b" => Ok(Subtask::B),
            other => Err(format!("unknown subtask `{other}` (expected A or B)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Rating,
    Disagreement,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` maps to CSV, everything else to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }
}

/// The three text channels of an instance, in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    English,
    Hindi,
    Hinglish,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::English, Channel::Hindi, Channel::Hinglish];

    pub fn name(self) -> &'static str {
        match self {
            Channel::English => "english",
            Channel::Hindi => "hindi",
            Channel::Hinglish => "hinglish",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "english" | "en" => Ok(Channel::English),
            "hindi" | "hi" => Ok(Channel::Hindi),
            "hinglish" | "cm" => Ok(Channel::Hinglish),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub english: String,
    pub hindi: String,
    pub hinglish: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_avg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<f64>,
}

impl Instance {
    pub fn text(&self, channel: Channel) -> &str {
        match channel {
            Channel::English => &self.english,
            Channel::Hindi => &self.hindi,
            Channel::Hinglish => &self.hinglish,
        }
    }

    /// Class label for `subtask`, if this instance carries one.
    pub fn label(&self, subtask: Subtask) -> Result<Option<Label>> {
        match subtask {
            Subtask::A => self
                .rating_avg
                .map(|r| bin_rating(r).map(|c| Label::from(c as i64)))
                .transpose(),
            Subtask::B => Ok(self.disagreement.and_then(Label::new)),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for channel in Channel::ALL {
            if self.text(channel).trim().is_empty() {
                return Err(format!("empty {channel} text"));
            }
        }
        if let Some(r) = self.rating_avg {
            if !(RATING_MIN..=RATING_MAX).contains(&r) {
                return Err(format!("rating_avg {r} outside [1, 10]"));
            }
        }
        if let Some(d) = self.disagreement {
            if !d.is_finite() || d < 0.0 {
                return Err(format!("disagreement {d} must be a non-negative number"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub instances: Vec<Instance>,
    pub source_path: String,
    pub label_kind: LabelKind,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.id.as_str())
    }

    /// Labels for every instance, or an error naming how many are missing.
    pub fn labels(&self, subtask: Subtask) -> Result<Vec<Label>> {
        let mut labels = Vec::with_capacity(self.len());
        let mut missing = Vec::new();
        for inst in &self.instances {
            match inst.label(subtask)? {
                Some(l) => labels.push(l),
                None => missing.push(inst.id.as_str()),
            }
        }
        if let Some(first) = missing.first() {
            return Err(CorpusError::MissingLabels {
                subtask,
                field: match subtask {
                    Subtask::A => "rating_avg",
                    Subtask::B => "disagreement",
                },
                missing: missing.len(),
                total: self.len(),
                first_id: first.to_string(),
            });
        }
        Ok(labels)
    }

    fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            source_path: self.source_path.clone(),
            label_kind: self.label_kind,
        }
    }
}

/// On-disk record with every field optional so missing fields can be
/// reported by name instead of as a generic decode failure.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    english: Option<String>,
    hindi: Option<String>,
    hinglish: Option<String>,
    #[serde(default, deserialize_with = "de_opt_number")]
    rating_avg: Option<f64>,
    #[serde(default, deserialize_with = "de_opt_number")]
    disagreement: Option<f64>,
}

/// Accepts a JSON number, a numeric string, an empty string or null.
fn de_opt_number<'de, D>(de: D) -> std::result::Result<Option<f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }
    match Option::<NumOrStr>::deserialize(de)? {
        None => Ok(None),
        Some(NumOrStr::Num(v)) => Ok(Some(v)),
        Some(NumOrStr::Str(s)) if s.trim().is_empty() => Ok(None),
        Some(NumOrStr::Str(s)) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| serde::de::Error::custom(format!("`{s}` is not a number"))),
    }
}

impl RawRecord {
    fn into_instance(self, line: u64) -> Result<Instance> {
        let missing = |field: &str| CorpusError::Record {
            line,
            message: format!("missing field `{field}`"),
        };
        let id = self.id.ok_or_else(|| missing("id"))?;
        let inst = Instance {
            english: self.english.ok_or_else(|| missing("english"))?,
            hindi: self.hindi.ok_or_else(|| missing("hindi"))?,
            hinglish: self.hinglish.ok_or_else(|| missing("hinglish"))?,
            rating_avg: self.rating_avg,
            disagreement: self.disagreement,
            id,
        };
        if inst.id.trim().is_empty() {
            return Err(CorpusError::Record {
                line,
                message: "empty id".into(),
            });
        }
        inst.validate().map_err(|message| CorpusError::Invalid {
            line,
            id: inst.id.clone(),
            message,
        })?;
        Ok(inst)
    }
}

/// One source record: its 1-based starting line and the exact source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSlice {
    pub line: u64,
    pub text: String,
}

/// Source records exactly as they appear in the file, plus the CSV header
/// line (with its terminator) when there is one.
#[derive(Debug, Clone)]
pub struct RawRecords {
    pub header: Option<String>,
    pub records: Vec<RawSlice>,
}

pub fn read_raw_records(path: &Path, format: Format) -> Result<RawRecords> {
    let data = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    raw_records_from_str(&data, format)
}

fn raw_records_from_str(data: &str, format: Format) -> Result<RawRecords> {
    match format {
        Format::Jsonl => {
            let mut records = Vec::new();
            for (idx, line) in data.split_inclusive('\n').enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let mut text = line.to_string();
                if !text.ends_with('\n') {
                    text.push('\n');
                }
                records.push(RawSlice {
                    line: idx as u64 + 1,
                    text,
                });
            }
            Ok(RawRecords {
                header: None,
                records,
            })
        }
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(data.as_bytes());
            rdr.byte_headers().map_err(|e| csv_error(&e))?;
            let header_end = rdr.position().byte() as usize;
            let mut starts = Vec::new();
            let mut rec = csv::ByteRecord::new();
            while rdr.read_byte_record(&mut rec).map_err(|e| csv_error(&e))? {
                let p = rec.position().expect("record position");
                starts.push((p.byte() as usize, p.line()));
            }
            let header = Some(data[..header_end].to_string()).filter(|h| !h.is_empty());
            let mut records = Vec::with_capacity(starts.len());
            for (k, &(start, line)) in starts.iter().enumerate() {
                let end = starts.get(k + 1).map_or(data.len(), |&(s, _)| s);
                let mut text = data[start..end].to_string();
                if !text.ends_with('\n') {
                    text.push('\n');
                }
                records.push(RawSlice { line, text });
            }
            Ok(RawRecords { header, records })
        }
    }
}

fn csv_error(e: &csv::Error) -> CorpusError {
    CorpusError::Record {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Reads and validates a corpus. Texts are kept byte-for-byte as decoded.
pub fn load_corpus(path: &Path, format: Format, label_kind: LabelKind) -> Result<Corpus> {
    let data = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_corpus(&data, format, label_kind, &path.display().to_string())
}

pub fn parse_corpus(
    data: &str,
    format: Format,
    label_kind: LabelKind,
    source: &str,
) -> Result<Corpus> {
    let mut instances = Vec::new();
    let mut seen: std::collections::HashMap<String, u64> = std::collections::HashMap::new();
    let mut push = |inst: Instance, line: u64| -> Result<()> {
        let required = match label_kind {
            LabelKind::Rating => Some(("rating_avg", inst.rating_avg.is_some())),
            LabelKind::Disagreement => Some(("disagreement", inst.disagreement.is_some())),
            LabelKind::Unlabeled => None,
        };
        if let Some((field, false)) = required {
            return Err(CorpusError::Invalid {
                line,
                id: inst.id,
                message: format!("missing label `{field}`"),
            });
        }
        if let Some(&first_line) = seen.get(&inst.id) {
            return Err(CorpusError::DuplicateId {
                line,
                id: inst.id,
                first_line,
            });
        }
        seen.insert(inst.id.clone(), line);
        instances.push(inst);
        Ok(())
    };
    match format {
        Format::Jsonl => {
            for (idx, text) in data.lines().enumerate() {
                let line = idx as u64 + 1;
                if text.trim().is_empty() {
                    continue;
                }
                let raw: RawRecord =
                    serde_json::from_str(text).map_err(|e| CorpusError::Record {
                        line,
                        message: e.to_string(),
                    })?;
                push(raw.into_instance(line)?, line)?;
            }
        }
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(data.as_bytes());
            let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
            for result in rdr.records() {
                let rec = result.map_err(|e| csv_error(&e))?;
                let line = rec.position().map_or(0, |p| p.line());
                let raw: RawRecord =
                    rec.deserialize(Some(&headers))
                        .map_err(|e| CorpusError::Record {
                            line,
                            message: e.to_string(),
                        })?;
                push(raw.into_instance(line)?, line)?;
            }
        }
    }
    Ok(Corpus {
        instances,
        source_path: source.to_string(),
        label_kind,
    })
}

/// Serialises instances in the canonical JSONL or CSV layout.
pub fn write_corpus(path: &Path, instances: &[Instance], format: Format) -> std::io::Result<()> {
    let mut out = Vec::new();
    match format {
        Format::Jsonl => {
            for inst in instances {
                serde_json::to_writer(&mut out, inst)?;
                out.push(b'\n');
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "id",
                "english",
                "hindi",
                "hinglish",
                "rating_avg",
                "disagreement",
            ])?;
            for inst in instances {
                let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([
                    inst.id.as_str(),
                    &inst.english,
                    &inst.hindi,
                    &inst.hinglish,
                    &num(inst.rating_avg),
                    &num(inst.disagreement),
                ])?;
            }
            w.flush()?;
            drop(w);
        }
    }
    fs::write(path, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.7, 0.1, 0.2],
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            ratios: [train, val, test],
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(CorpusError::InvalidSplit(format!("ratio {r} must be > 0")));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!(
                "ratios sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// (train, val, test) sizes: floor, floor, remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The small offset keeps products like 100 * 0.29 = 28.999999999999996
        // from flooring one short.
        let part = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let train = part(self.ratios[0]).min(n);
        let val = part(self.ratios[1]).min(n - train);
        (train, val, n - train - val)
    }
}

/// Index permutation behind [`split_corpus`]: a Fisher-Yates shuffle driven
/// by SplitMix64 seeded with `spec.seed`, cut into floor/floor/remainder parts.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    if n == 0 {
        return Err(CorpusError::Empty);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(spec.seed);
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let (train, val, _) = spec.sizes(n);
    let test = order.split_off(train + val);
    let val = order.split_off(train);
    Ok([order, val, test])
}

pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    let [train, val, test] = split_indices(corpus.len(), spec)?;
    Ok((
        corpus.subset(&train),
        corpus.subset(&val),
        corpus.subset(&test),
    ))
}

/// Rounds half away from zero into the 1..=10 rating classes.
pub fn bin_rating(rating_avg: f64) -> Result<u8> {
    if !(RATING_MIN..=RATING_MAX).contains(&rating_avg) {
        return Err(CorpusError::RatingOutOfRange(rating_avg));
    }
    Ok(rating_avg.round().clamp(RATING_MIN, RATING_MAX) as u8)
}

/// Sorted distinct labels; a label's position is its class index.
pub fn class_vocabulary(labels: &[Label]) -> Result<Vec<Label>> {
    if labels.is_empty() {
        return Err(CorpusError::EmptyLabels);
    }
    let mut vocab: Vec<Label> = labels
        .iter()
        .copied()
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    vocab.sort();
    Ok(vocab)
}
