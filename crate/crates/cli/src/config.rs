//! Declarative run configuration. A TOML file describes the whole
//! experiment: data source, cleaning, task, split, model and training
//! presets, and the output directory. Unknown keys are rejected so typos
//! fail loudly instead of silently using defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use guilt_detect::corpus::{
    builtin_stopwords, load_stopwords, CleaningOptions, DelimitedFormat, SampleSource,
};
use guilt_detect::model::ModelConfig;
use guilt_detect::optim::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Multiclass,
    GuiltBinary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// Positive class for the guilt-binary task.
    #[serde(default = "default_positive_label")]
    pub positive_label: String,
    /// Downsample every class to the minimum class count during prepare.
    #[serde(default = "default_true")]
    pub balance: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    pub output: OutputConfig,
}

fn default_positive_label() -> String {
    "guilt".to_owned()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Delimited input file; mutually exclusive with `synthetic`.
    pub path: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: DelimitedFormat,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_source")]
    pub source: SampleSource,
    pub synthetic: Option<SyntheticConfig>,
}

fn default_format() -> DelimitedFormat {
    DelimitedFormat::Csv
}

fn default_text_column() -> String {
    "text".to_owned()
}

fn default_label_column() -> String {
    "label".to_owned()
}

fn default_source() -> SampleSource {
    SampleSource::Other
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub labels: Vec<String>,
    pub samples_per_class: usize,
    #[serde(default = "default_synthetic_seed")]
    pub seed: u64,
    /// Per-label keyword lists; labels without an entry use the built-in
    /// lexicons.
    #[serde(default)]
    pub lexicons: BTreeMap<String, Vec<String>>,
}

fn default_synthetic_seed() -> u64 {
    13
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningConfig {
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default = "default_true")]
    pub strip_tags: bool,
    #[serde(default = "default_true")]
    pub strip_special_chars: bool,
    #[serde(default = "default_true")]
    pub remove_stopwords: bool,
    #[serde(default = "default_true")]
    pub collapse_whitespace: bool,
    /// Custom stopword list, one token per line; built-in list otherwise.
    pub stopword_path: Option<PathBuf>,
    #[serde(default = "default_min_words")]
    pub min_words: usize,
}

fn default_min_words() -> usize {
    2
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_tags: true,
            strip_special_chars: true,
            remove_stopwords: true,
            collapse_whitespace: true,
            stopword_path: None,
            min_words: 2,
        }
    }
}

impl CleaningConfig {
    pub fn to_options(&self) -> Result<CleaningOptions> {
        let stopwords = match &self.stopword_path {
            Some(path) => load_stopwords(path)
                .with_context(|| format!("reading stopword list {}", path.display()))?,
            None => builtin_stopwords(),
        };
        Ok(CleaningOptions {
            lowercase: self.lowercase,
            strip_tags: self.strip_tags,
            strip_special_chars: self.strip_special_chars,
            remove_stopwords: self.remove_stopwords,
            collapse_whitespace: self.collapse_whitespace,
            stopwords,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `desk` or `paper`; field overrides apply on top.
    pub preset: Option<String>,
    pub n_layers: Option<usize>,
    pub hidden: Option<usize>,
    pub n_heads: Option<usize>,
    pub ff_dim: Option<usize>,
    pub dropout_rate: Option<f64>,
}

impl ModelSection {
    /// Resolves the section against data-derived sizes.
    pub fn resolve(
        &self,
        vocab_size: usize,
        n_classes: usize,
        max_len: usize,
    ) -> Result<ModelConfig> {
        let preset = self.preset.as_deref().unwrap_or("desk");
        let mut config = match preset {
            "desk" => ModelConfig::desk_scale(vocab_size, n_classes, max_len),
            "paper" => ModelConfig {
                max_len,
                ..ModelConfig::paper_scale(vocab_size, n_classes)
            },
            other => bail!("unknown model preset {other:?} (expected \"desk\" or \"paper\")"),
        };
        if let Some(v) = self.n_layers {
            config.n_layers = v;
        }
        if let Some(v) = self.hidden {
            config.hidden = v;
        }
        if let Some(v) = self.n_heads {
            config.n_heads = v;
        }
        if let Some(v) = self.ff_dim {
            config.ff_dim = v;
        }
        if let Some(v) = self.dropout_rate {
            config.dropout_rate = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// `guiltbert` or `baseline`; field overrides apply on top.
    pub preset: Option<String>,
    /// Multiplier on the preset learning rate. The guiltbert preset notes a
    /// factor of 10 for from-scratch (not pretrained) training.
    #[serde(default = "default_lr_scale")]
    pub lr_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_frequency")]
    pub vocab_min_frequency: usize,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_len: Option<usize>,
    pub weight_decay: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

fn default_lr_scale() -> f64 {
    1.0
}

fn default_min_frequency() -> usize {
    1
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            preset: None,
            lr_scale: 1.0,
            seed: 0,
            vocab_min_frequency: 1,
            learning_rate: None,
            batch_size: None,
            max_len: None,
            weight_decay: None,
            warmup_steps: None,
            max_epochs: None,
            patience: None,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let preset = self.preset.as_deref().unwrap_or("guiltbert");
        let mut config = match preset {
            "guiltbert" => TrainConfig::guiltbert(),
            "baseline" => TrainConfig::baseline(),
            other => {
                bail!("unknown train preset {other:?} (expected \"guiltbert\" or \"baseline\")")
            }
        };
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.max_len {
            config.max_len = v;
        }
        if let Some(v) = self.weight_decay {
            config.weight_decay = v;
        }
        if let Some(v) = self.warmup_steps {
            config.warmup_steps = v;
        }
        if let Some(v) = self.max_epochs {
            config.max_epochs = v;
        }
        if let Some(v) = self.patience {
            config.patience = v;
        }
        config.seed = self.seed;
        config.learning_rate *= self.lr_scale;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks that do not need the data: preset names resolve,
    /// exactly one data source is declared, paths and ratios are plausible.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.synthetic) {
            (None, None) => bail!("config must set either data.path or [data.synthetic]"),
            (Some(_), Some(_)) => {
                bail!("data.path and [data.synthetic] are mutually exclusive")
            }
            (Some(path), None) if !path.exists() => {
                bail!("data.path {} does not exist", path.display())
            }
            _ => {}
        }
        if let Some(synthetic) = &self.data.synthetic {
            if synthetic.labels.is_empty() {
                bail!("data.synthetic.labels must not be empty");
            }
            if synthetic.samples_per_class == 0 {
                bail!("data.synthetic.samples_per_class must be >= 1");
            }
        }
        if let Some(path) = &self.cleaning.stopword_path {
            if !path.exists() {
                bail!("cleaning.stopword_path {} does not exist", path.display());
            }
        }
        if self.cleaning.min_words == 0 {
            bail!("cleaning.min_words must be >= 1");
        }
        let sum: f64 = self.split.ratios.iter().sum();
        if self.split.ratios.iter().any(|r| *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            bail!(
                "split.ratios must be positive and sum to 1, got {:?}",
                self.split.ratios
            );
        }
        // Surface bad preset names and override combinations now rather
        // than mid-pipeline.
        let train = self.train.resolve()?;
        self.model.resolve(64, 2, train.max_len)?;
        Ok(())
    }
}
