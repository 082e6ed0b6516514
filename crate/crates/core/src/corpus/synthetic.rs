//! Seeded synthetic corpora for desk-scale experiments. Each sample mixes
//! keywords drawn from its label's lexicon with shared filler words, so the
//! classes are separable by construction while the surface text still varies.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, EmotionLabel, LabeledDataset, SampleSource, TextSample};

/// Per-label keyword lists. A `BTreeMap` keeps generation order stable.
pub type Lexicons = BTreeMap<EmotionLabel, Vec<String>>;

/// Neutral words shared by every class.
const FILLERS: &[&str] = &[
    "today", "yesterday", "morning", "evening", "again", "still", "really", "quite", "very",
    "somehow", "then", "later", "while", "thinking", "talking", "moment", "friend", "family",
    "work", "home",
];

/// Keyword lists for the label names the pipeline commonly uses. Lists are
/// pairwise disjoint and avoid stopwords so cleaning keeps them intact.
pub fn default_lexicons() -> Lexicons {
    let entries: &[(&str, &[&str])] = &[
        (
            "guilt",
            &[
                "guilty", "remorse", "regret", "blame", "ashamed", "apology", "fault",
                "conscience", "sorry", "wronged",
            ],
        ),
        (
            "joy",
            &[
                "happy", "joyful", "delighted", "cheerful", "smiling", "laughter", "celebrate",
                "wonderful", "excited", "grateful",
            ],
        ),
        (
            "sadness",
            &[
                "sad", "tears", "crying", "grief", "heartbroken", "lonely", "miserable",
                "sorrow", "mourning", "gloomy",
            ],
        ),
        (
            "anger",
            &[
                "angry", "furious", "rage", "shouting", "outraged", "irritated", "resentful",
                "hostile", "fuming", "annoyed",
            ],
        ),
        (
            "fear",
            &[
                "afraid", "scared", "terrified", "panic", "dread", "anxious", "frightened",
                "horror", "trembling", "nervous",
            ],
        ),
        (
            "shame",
            &[
                "shameful", "humiliated", "embarrassed", "disgraced", "mortified", "blushing",
                "exposed", "degraded", "sheepish", "awkward",
            ],
        ),
        (
            "disgust",
            &[
                "disgusting", "revolting", "nauseating", "gross", "repulsive", "sickening",
                "vile", "foul", "nasty", "loathsome",
            ],
        ),
        (
            "other",
            &[
                "curious", "surprised", "confused", "bored", "thoughtful", "indifferent",
                "puzzled", "calm", "detached", "neutral",
            ],
        ),
    ];
    entries
        .iter()
        .map(|(label, words)| {
            (
                EmotionLabel::new(label),
                words.iter().map(|w| w.to_string()).collect(),
            )
        })
        .collect()
}

/// Generates `n_per_class` samples for every label. Deterministic given
/// `(seed, labels, n_per_class, lexicons)`; every sample contains at least
/// three of its label's keywords.
pub fn generate_synthetic(
    seed: u64,
    labels: &[EmotionLabel],
    n_per_class: usize,
    lexicons: &Lexicons,
) -> Result<LabeledDataset, CorpusError> {
    if n_per_class == 0 {
        return Err(CorpusError::InvalidArgument(
            "n_per_class must be at least 1".to_owned(),
        ));
    }
    if labels.is_empty() {
        return Err(CorpusError::InvalidArgument(
            "at least one label is required".to_owned(),
        ));
    }
    for label in labels {
        let len = lexicons.get(label).map_or(0, Vec::len);
        if len < 3 {
            return Err(CorpusError::LexiconTooSmall {
                label: label.to_string(),
                len,
            });
        }
    }

    let mut sorted_labels: Vec<EmotionLabel> = labels.to_vec();
    sorted_labels.sort();
    sorted_labels.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sorted_labels.len() * n_per_class);
    let mut next_id = 0u64;
    for label in &sorted_labels {
        let keywords = &lexicons[label];
        for _ in 0..n_per_class {
            let text = render_sentence(&mut rng, keywords);
            samples.push(TextSample {
                id: next_id,
                text,
                label: label.clone(),
                source: SampleSource::Synthetic,
            });
            next_id += 1;
        }
    }
    LabeledDataset::new("synthetic", samples, sorted_labels)
}

/// One sentence: 4-6 keywords interleaved with 3-5 fillers, shuffled order.
fn render_sentence(rng: &mut ChaCha8Rng, keywords: &[String]) -> String {
    let n_keywords = rng.random_range(4..=6);
    let n_fillers = rng.random_range(3..=5);
    let mut words: Vec<&str> = Vec::with_capacity(n_keywords + n_fillers);
    for _ in 0..n_keywords {
        words.push(keywords.choose(rng).expect("lexicon non-empty"));
    }
    for _ in 0..n_fillers {
        words.push(FILLERS.choose(rng).expect("fillers non-empty"));
    }
    words.shuffle(rng);
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_labels() -> Vec<EmotionLabel> {
        vec![EmotionLabel::new("guilt"), EmotionLabel::new("joy")]
    }

    #[test]
    fn per_class_counts_are_exact() {
        let ds = generate_synthetic(1, &two_labels(), 100, &default_lexicons()).unwrap();
        assert_eq!(ds.len(), 200);
        for (_, count) in ds.class_counts() {
            assert_eq!(count, 100);
        }
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let a = generate_synthetic(7, &two_labels(), 25, &default_lexicons()).unwrap();
        let b = generate_synthetic(7, &two_labels(), 25, &default_lexicons()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(8, &two_labels(), 25, &default_lexicons()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_sample_contains_its_class_keywords() {
        let lexicons = default_lexicons();
        let ds = generate_synthetic(3, &two_labels(), 50, &lexicons).unwrap();
        for sample in ds.samples() {
            let keywords = &lexicons[&sample.label];
            let hits = sample
                .text
                .split_whitespace()
                .filter(|w| keywords.iter().any(|k| k == w))
                .count();
            assert!(hits >= 1, "sample {:?} lacks class keywords", sample.text);
        }
    }

    #[test]
    fn undersized_lexicon_is_rejected() {
        let mut lexicons = default_lexicons();
        lexicons.insert(EmotionLabel::new("guilt"), vec!["guilty".to_owned()]);
        let err = generate_synthetic(1, &two_labels(), 5, &lexicons).unwrap_err();
        assert!(matches!(err, CorpusError::LexiconTooSmall { .. }));
    }
}
