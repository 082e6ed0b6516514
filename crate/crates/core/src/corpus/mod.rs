//! Labeled text datasets and the preprocessing pipeline: delimited-file
//! ingestion, cleaning, short-sample removal, class balancing, guilt
//! binarization, seeded splitting, per-class statistics, and synthetic
//! corpus generation.
//!
//! All operations are pure functions of their inputs plus a seed; datasets
//! are immutable once constructed.

mod cleaning;
mod synthetic;

pub use cleaning::{builtin_stopwords, clean_dataset, clean_text, load_stopwords, CleaningOptions};
pub use synthetic::{default_lexicons, generate_synthetic, Lexicons};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset ingestion and preprocessing.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("label {label:?} not present in the dataset")]
    LabelNotFound { label: String },
    #[error("class {label:?} has no samples")]
    EmptyClass { label: String },
    #[error("split ratios must be positive and sum to 1 (got {ratios:?})")]
    InvalidRatios { ratios: [f64; 3] },
    #[error("dataset of size {size} is too small to split")]
    TooSmallToSplit { size: usize },
    #[error("lexicon for {label:?} has {len} keywords, need at least 3")]
    LexiconTooSmall { label: String, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("duplicate sample id {id}")]
    DuplicateId { id: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Origin of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Isear,
    Vent,
    Cease,
    Vic,
    Synthetic,
    Other,
}

impl fmt::Display for SampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SampleSource::Isear => "isear",
            SampleSource::Vent => "vent",
            SampleSource::Cease => "cease",
            SampleSource::Vic => "vic",
            SampleSource::Synthetic => "synthetic",
            SampleSource::Other => "other",
        };
        f.write_str(name)
    }
}

/// A class label. Stored lowercase so label comparisons are case-insensitive
/// with respect to the input files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionLabel(String);

impl EmotionLabel {
    pub fn new(name: &str) -> Self {
        Self(name.trim().to_lowercase())
    }

    /// The negative class produced by guilt binarization.
    pub fn no_guilt() -> Self {
        Self("no-guilt".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: u64,
    pub text: String,
    pub label: EmotionLabel,
    pub source: SampleSource,
}

/// An ordered collection of samples with a declared label set.
///
/// Invariants enforced at construction: every sample label is in the label
/// set, and sample ids are pairwise distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    name: String,
    samples: Vec<TextSample>,
    label_set: Vec<EmotionLabel>,
}

impl LabeledDataset {
    /// Builds a dataset with an explicit label set ordering.
    pub fn new(
        name: impl Into<String>,
        samples: Vec<TextSample>,
        label_set: Vec<EmotionLabel>,
    ) -> Result<Self, CorpusError> {
        let known: HashSet<&EmotionLabel> = label_set.iter().collect();
        let mut seen_ids = HashSet::with_capacity(samples.len());
        for sample in &samples {
            if !known.contains(&sample.label) {
                return Err(CorpusError::LabelNotFound {
                    label: sample.label.to_string(),
                });
            }
            if !seen_ids.insert(sample.id) {
                return Err(CorpusError::DuplicateId { id: sample.id });
            }
        }
        Ok(Self {
            name: name.into(),
            samples,
            label_set,
        })
    }

    /// Builds a dataset whose label set is the distinct labels encountered,
    /// sorted lexicographically.
    pub fn from_samples(
        name: impl Into<String>,
        samples: Vec<TextSample>,
    ) -> Result<Self, CorpusError> {
        let mut labels: Vec<EmotionLabel> = samples
            .iter()
            .map(|s| s.label.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        labels.sort();
        Self::new(name, samples, labels)
    }

    /// Same name and label set, different samples. Used by filtering stages.
    pub(crate) fn with_samples(&self, samples: Vec<TextSample>) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            samples,
            label_set: self.label_set.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn label_set(&self) -> &[EmotionLabel] {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Position of a label in the declared label set.
    pub fn label_index(&self, label: &EmotionLabel) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Sample count per label, in label-set order.
    pub fn class_counts(&self) -> Vec<(EmotionLabel, usize)> {
        self.label_set
            .iter()
            .map(|label| {
                let count = self.samples.iter().filter(|s| &s.label == label).count();
                (label.clone(), count)
            })
            .collect()
    }
}

/// Disjoint, exhaustive train/validation/test partition.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
    pub seed: u64,
    pub ratios: [f64; 3],
}

/// Per-class sample counts and average words per text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStatsRow {
    pub label: EmotionLabel,
    pub count: usize,
    pub avg_words: f64,
}

/// Summary statistics table, one row per label in label-set order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub rows: Vec<ClassStatsRow>,
}

impl ClassStats {
    pub fn total_count(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// CSV with columns label, count, avg_words; averages rendered to two
    /// decimals.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), CorpusError> {
        writeln!(writer, "label,count,avg_words")?;
        for row in &self.rows {
            writeln!(writer, "{},{},{:.2}", row.label, row.count, row.avg_words)?;
        }
        Ok(())
    }
}

/// Delimiter of an input or output file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelimitedFormat {
    Csv,
    Tsv,
}

impl DelimitedFormat {
    fn delimiter(self) -> u8 {
        match self {
            DelimitedFormat::Csv => b',',
            DelimitedFormat::Tsv => b'\t',
        }
    }
}

/// Loads a header-bearing delimited file into a dataset. One sample per data
/// row; ids follow row order starting at 0; the label set is the distinct
/// labels encountered, sorted lexicographically.
pub fn load_delimited(
    path: &Path,
    format: DelimitedFormat,
    text_column: &str,
    label_column: &str,
    source: SampleSource,
) -> Result<LabeledDataset, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .flexible(false)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let text_idx = headers
        .iter()
        .position(|h| h == text_column)
        .ok_or_else(|| CorpusError::MissingColumn {
            column: text_column.to_owned(),
        })?;
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| CorpusError::MissingColumn {
            column: label_column.to_owned(),
        })?;

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let text = record.get(text_idx).unwrap_or("").trim();
        if text.is_empty() {
            return Err(CorpusError::MalformedRow {
                row,
                reason: format!("empty text cell in column {text_column:?}"),
            });
        }
        let label = record.get(label_idx).unwrap_or("").trim();
        if label.is_empty() {
            return Err(CorpusError::MalformedRow {
                row,
                reason: format!("empty label cell in column {label_column:?}"),
            });
        }
        samples.push(TextSample {
            id: row as u64,
            text: text.to_owned(),
            label: EmotionLabel::new(label),
            source,
        });
    }

    if samples.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    LabeledDataset::from_samples(name, samples)
}

/// Writes a dataset back to the ingestion schema: a header row with `text`
/// and `label` columns.
pub fn write_delimited<W: Write>(
    ds: &LabeledDataset,
    writer: W,
    format: DelimitedFormat,
) -> Result<(), CorpusError> {
    let mut csv_writer = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(writer);
    csv_writer.write_record(["text", "label"])?;
    for sample in ds.samples() {
        csv_writer.write_record([sample.text.as_str(), sample.label.as_str()])?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Retains samples whose text has at least `min_words` whitespace-separated
/// tokens. Order and ids are preserved.
pub fn drop_short_samples(
    ds: &LabeledDataset,
    min_words: usize,
) -> Result<LabeledDataset, CorpusError> {
    if min_words == 0 {
        return Err(CorpusError::InvalidArgument(
            "min_words must be at least 1".to_owned(),
        ));
    }
    let samples = ds
        .samples()
        .iter()
        .filter(|s| s.text.split_whitespace().count() >= min_words)
        .cloned()
        .collect();
    Ok(ds.with_samples(samples))
}

/// Downsamples every class to the minimum class count by seeded uniform
/// sampling without replacement. Selected samples keep their original
/// relative order.
pub fn balance_classes(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset, CorpusError> {
    if ds.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let counts = ds.class_counts();
    for (label, count) in &counts {
        if *count == 0 {
            return Err(CorpusError::EmptyClass {
                label: label.to_string(),
            });
        }
    }
    let target = counts.iter().map(|(_, c)| *c).min().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: HashSet<u64> = HashSet::new();
    // Classes are visited in label-set order so the RNG stream is stable.
    for label in ds.label_set() {
        let mut ids: Vec<u64> = ds
            .samples()
            .iter()
            .filter(|s| &s.label == label)
            .map(|s| s.id)
            .collect();
        ids.shuffle(&mut rng);
        keep.extend(ids.into_iter().take(target));
    }

    let samples = ds
        .samples()
        .iter()
        .filter(|s| keep.contains(&s.id))
        .cloned()
        .collect();
    Ok(ds.with_samples(samples))
}

/// Relabels every sample: `positive_label` is kept, everything else becomes
/// `no-guilt`. The label set becomes `[positive_label, no-guilt]` and the
/// sample count is unchanged.
pub fn binarize_guilt(
    ds: &LabeledDataset,
    positive_label: &EmotionLabel,
) -> Result<LabeledDataset, CorpusError> {
    if ds.label_index(positive_label).is_none() {
        return Err(CorpusError::LabelNotFound {
            label: positive_label.to_string(),
        });
    }
    let negative = EmotionLabel::no_guilt();
    let samples = ds
        .samples()
        .iter()
        .map(|sample| {
            let mut out = sample.clone();
            if &out.label != positive_label {
                out.label = negative.clone();
            }
            out
        })
        .collect();
    LabeledDataset::new(
        ds.name(),
        samples,
        vec![positive_label.clone(), negative],
    )
}

/// Seeded shuffle followed by contiguous assignment. Train and validation
/// sizes are `floor(N * ratio)`; test receives the remainder.
pub fn split_dataset(
    ds: &LabeledDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios { ratios });
    }
    let n = ds.len();
    if n < 3 {
        return Err(CorpusError::TooSmallToSplit { size: n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = (n as f64 * ratios[0]).floor() as usize;
    let n_valid = (n as f64 * ratios[1]).floor() as usize;

    let part = |range: std::ops::Range<usize>, suffix: &str| {
        let samples: Vec<TextSample> = order[range]
            .iter()
            .map(|&idx| ds.samples()[idx].clone())
            .collect();
        LabeledDataset {
            name: format!("{}-{}", ds.name(), suffix),
            samples,
            label_set: ds.label_set().to_vec(),
        }
    };

    Ok(DatasetSplit {
        train: part(0..n_train, "train"),
        valid: part(n_train..n_train + n_valid, "valid"),
        test: part(n_train + n_valid..n, "test"),
        seed,
        ratios,
    })
}

/// Per-label sample count and mean whitespace-token count.
pub fn class_stats(ds: &LabeledDataset) -> ClassStats {
    let mut counts: BTreeMap<&EmotionLabel, (usize, usize)> = BTreeMap::new();
    for sample in ds.samples() {
        let entry = counts.entry(&sample.label).or_default();
        entry.0 += 1;
        entry.1 += sample.text.split_whitespace().count();
    }
    let rows = ds
        .label_set()
        .iter()
        .map(|label| {
            let (count, words) = counts.get(label).copied().unwrap_or((0, 0));
            let avg_words = if count == 0 {
                0.0
            } else {
                words as f64 / count as f64
            };
            ClassStatsRow {
                label: label.clone(),
                count,
                avg_words,
            }
        })
        .collect();
    ClassStats { rows }
}
