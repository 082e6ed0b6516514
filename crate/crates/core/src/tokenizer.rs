//! Whitespace-level vocabulary and fixed-length batch encoding.
//!
//! The vocabulary is built from the training split only. Four reserved
//! tokens occupy ids 0-3; corpus tokens follow, ordered by descending
//! frequency with lexicographic tie-breaking. Encoding wraps every text in
//! `[CLS] ... [SEP]`, truncates to the configured length, and right-pads
//! with `[PAD]`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::LabeledDataset;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("max_len must be at least 3, got {0}")]
    MaxLenTooSmall(usize),
    #[error("batch_size must be at least 1")]
    InvalidBatchSize,
    #[error("label {label:?} is not in the dataset's label set")]
    UnknownLabel { label: String },
    #[error("vocabulary file is malformed: {0}")]
    MalformedVocab(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-to-id mapping. Ids form a bijection onto `0..len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    min_frequency: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from the training split. Tokens are whitespace
    /// units with frequency >= `min_frequency`; ids 4.. are assigned by
    /// descending frequency, ties broken lexicographically.
    pub fn build(train: &LabeledDataset, min_frequency: usize) -> Result<Self, TokenizerError> {
        if train.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut frequencies: HashMap<&str, usize> = HashMap::new();
        for sample in train.samples() {
            for token in sample.text.split_whitespace() {
                *frequencies.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = frequencies
            .into_iter()
            .filter(|(token, count)| {
                *count >= min_frequency.max(1) && !RESERVED_TOKENS.contains(token)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|t| t.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(token, _)| token.to_owned()));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, token)| (token.clone(), id as u32))
            .collect();
        Ok(Self {
            token_to_id,
            id_to_token,
            min_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        // Reserved tokens are always present.
        false
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Writes one token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut out = std::fs::File::create(path)?;
        for token in &self.id_to_token {
            writeln!(out, "{token}")?;
        }
        Ok(())
    }

    /// Reads a vocabulary saved by [`Vocabulary::save`].
    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut id_to_token = Vec::new();
        let mut token_to_id = HashMap::new();
        for (id, line) in reader.lines().enumerate() {
            let token = line?;
            if token.is_empty() {
                return Err(TokenizerError::MalformedVocab(format!(
                    "empty token at line {id}"
                )));
            }
            if token_to_id.insert(token.clone(), id as u32).is_some() {
                return Err(TokenizerError::MalformedVocab(format!(
                    "duplicate token {token:?}"
                )));
            }
            id_to_token.push(token);
        }
        for (id, expected) in RESERVED_TOKENS.iter().enumerate() {
            if id_to_token.get(id).map(String::as_str) != Some(*expected) {
                return Err(TokenizerError::MalformedVocab(format!(
                    "line {id} must be the reserved token {expected}"
                )));
            }
        }
        Ok(Self {
            token_to_id,
            id_to_token,
            min_frequency: 1,
        })
    }
}

/// A padded, masked, id-encoded mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    /// B x L token ids.
    pub ids: Vec<Vec<u32>>,
    /// B x L; 1 exactly at non-PAD positions.
    pub mask: Vec<Vec<u8>>,
    /// Class index per row, following the dataset's label-set ordering.
    pub labels: Vec<usize>,
    pub max_len: usize,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encodes one text to exactly `max_len` ids plus the matching mask. The
/// sequence is `[CLS] tokens [SEP]` with out-of-vocabulary tokens mapped to
/// `[UNK]`; long texts keep their prefix so `[SEP]` is always the last real
/// token.
pub fn encode(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Vec<u32>, Vec<u8>), TokenizerError> {
    if max_len < 3 {
        return Err(TokenizerError::MaxLenTooSmall(max_len));
    }
    let content_budget = max_len - 2;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    for token in text.split_whitespace().take(content_budget) {
        ids.push(vocab.id_of(token).unwrap_or(UNK_ID));
    }
    ids.push(SEP_ID);

    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    Ok((ids, mask))
}

/// Encodes a dataset into batches of `batch_size` rows (the final batch may
/// be smaller). With `shuffle` set, sample order is a seeded permutation;
/// otherwise batches follow dataset order.
pub fn make_batches(
    ds: &LabeledDataset,
    vocab: &Vocabulary,
    max_len: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<EncodedBatch>, TokenizerError> {
    if batch_size == 0 {
        return Err(TokenizerError::InvalidBatchSize);
    }
    if max_len < 3 {
        return Err(TokenizerError::MaxLenTooSmall(max_len));
    }

    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }

    let mut batches = Vec::with_capacity(ds.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut ids = Vec::with_capacity(chunk.len());
        let mut mask = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            let sample = &ds.samples()[idx];
            let (row_ids, row_mask) = encode(&sample.text, vocab, max_len)?;
            ids.push(row_ids);
            mask.push(row_mask);
            labels.push(ds.label_index(&sample.label).ok_or_else(|| {
                TokenizerError::UnknownLabel {
                    label: sample.label.to_string(),
                }
            })?);
        }
        batches.push(EncodedBatch {
            ids,
            mask,
            labels,
            max_len,
        });
    }
    Ok(batches)
}
