//! Text cleaning: tag stripping, character filtering, stopword removal,
//! whitespace normalization. Every stage can be toggled independently so a
//! pipeline can reproduce or relax any part of the preprocessing.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{CorpusError, LabeledDataset};

/// Built-in English stopword list, one token per line.
const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");

fn tag_pattern() -> &'static Regex {
    static TAG_RE: OnceLock<Regex> = OnceLock::new();
    TAG_RE.get_or_init(|| Regex::new(r"<[^>]*>").expect("valid tag regex"))
}

/// Returns the stopword list shipped with the crate.
pub fn builtin_stopwords() -> HashSet<String> {
    STOPWORDS_EN
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Loads a stopword list from a UTF-8 file with one token per line.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(|line| line.to_lowercase())
        .collect())
}

/// Which cleaning stages run, and with which stopword list.
#[derive(Debug, Clone)]
pub struct CleaningOptions {
    pub lowercase: bool,
    pub strip_tags: bool,
    pub strip_special_chars: bool,
    pub remove_stopwords: bool,
    pub collapse_whitespace: bool,
    pub stopwords: HashSet<String>,
}

impl Default for CleaningOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_tags: true,
            strip_special_chars: true,
            remove_stopwords: true,
            collapse_whitespace: true,
            stopwords: builtin_stopwords(),
        }
    }
}

impl CleaningOptions {
    /// All stages disabled; `clean_text` becomes the identity function.
    pub fn none() -> Self {
        Self {
            lowercase: false,
            strip_tags: false,
            strip_special_chars: false,
            remove_stopwords: false,
            collapse_whitespace: false,
            stopwords: HashSet::new(),
        }
    }
}

/// Cleans one text. Stages run in a fixed order: lowercasing, markup tag
/// removal, removal of characters other than letters/digits/whitespace/
/// apostrophes, stopword removal, whitespace collapsing, and a final trim.
///
/// Total function: never fails, and is idempotent under fixed options.
pub fn clean_text(raw: &str, options: &CleaningOptions) -> String {
    let mut text = if options.lowercase {
        raw.to_lowercase()
    } else {
        raw.to_owned()
    };

    if options.strip_tags {
        text = tag_pattern().replace_all(&text, " ").into_owned();
    }

    if options.strip_special_chars {
        text = text
            .chars()
            .map(|c| {
                if c.is_alphabetic() || c.is_numeric() || c.is_whitespace() || c == '\'' {
                    c
                } else {
                    ' '
                }
            })
            .collect();
    }

    if options.remove_stopwords {
        text = text
            .split_whitespace()
            .filter(|token| !options.stopwords.contains(*token))
            .collect::<Vec<_>>()
            .join(" ");
    }

    if options.collapse_whitespace {
        text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    }

    text.trim().to_owned()
}

/// Cleans every sample in a dataset and drops samples whose text becomes
/// empty. Ids and relative order are preserved.
pub fn clean_dataset(ds: &LabeledDataset, options: &CleaningOptions) -> LabeledDataset {
    let samples = ds
        .samples()
        .iter()
        .filter_map(|sample| {
            let text = clean_text(&sample.text, options);
            if text.is_empty() {
                None
            } else {
                let mut cleaned = sample.clone();
                cleaned.text = text;
                Some(cleaned)
            }
        })
        .collect();
    ds.with_samples(samples)
}
