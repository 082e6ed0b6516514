//! Command implementations. Every output file is written atomically
//! (temp file in the target directory, then rename), so reruns either
//! replace a file completely or leave the previous one intact.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use guilt_detect::corpus::{
    balance_classes, binarize_guilt, class_stats, clean_dataset, default_lexicons,
    drop_short_samples, generate_synthetic, load_delimited, split_dataset, write_delimited,
    DelimitedFormat, EmotionLabel, LabeledDataset,
};
use guilt_detect::metrics::{classification_report, EvaluationReport};
use guilt_detect::model::{load_params, read_header, save_params, ModelParams};
use guilt_detect::optim::{fit_with, select_best_epoch, TrainError};
use guilt_detect::tokenizer::{make_batches, Vocabulary};

use crate::config::{RunConfig, TaskKind};

const TRAIN_FILE: &str = "train.csv";
const VALID_FILE: &str = "valid.csv";
const TEST_FILE: &str = "test.csv";
const STATS_FILE: &str = "stats.csv";
const LABELS_FILE: &str = "labels.txt";
const VOCAB_FILE: &str = "vocab.txt";
const LOG_FILE: &str = "training_log.csv";
const BEST_CHECKPOINT: &str = "best.bin";

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| anyhow!("output path {} has no file name", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", path.display()))?;
    Ok(())
}

fn load_input(config: &RunConfig) -> Result<LabeledDataset> {
    if let Some(synthetic) = &config.data.synthetic {
        let labels: Vec<EmotionLabel> = synthetic
            .labels
            .iter()
            .map(|l| EmotionLabel::new(l))
            .collect();
        let mut lexicons = default_lexicons();
        for (label, words) in &synthetic.lexicons {
            lexicons.insert(EmotionLabel::new(label), words.clone());
        }
        let ds = generate_synthetic(
            synthetic.seed,
            &labels,
            synthetic.samples_per_class,
            &lexicons,
        )?;
        return Ok(ds);
    }
    let path = config
        .data
        .path
        .as_ref()
        .expect("validated: path or synthetic present");
    let ds = load_delimited(
        path,
        config.data.format,
        &config.data.text_column,
        &config.data.label_column,
        config.data.source,
    )
    .with_context(|| format!("loading {}", path.display()))?;
    Ok(ds)
}

fn dataset_to_csv(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_delimited(ds, &mut buf, DelimitedFormat::Csv)?;
    Ok(buf)
}

/// Reads a split CSV back, restoring the recorded label-set ordering.
fn load_split_file(dir: &Path, file: &str, labels: &[EmotionLabel]) -> Result<LabeledDataset> {
    let path = dir.join(file);
    let ds = load_delimited(
        &path,
        DelimitedFormat::Csv,
        "text",
        "label",
        guilt_detect::corpus::SampleSource::Other,
    )
    .with_context(|| format!("loading prepared split {}", path.display()))?;
    let renamed = file.trim_end_matches(".csv");
    Ok(LabeledDataset::new(
        renamed,
        ds.samples().to_vec(),
        labels.to_vec(),
    )?)
}

fn read_labels(dir: &Path) -> Result<Vec<EmotionLabel>> {
    let path = dir.join(LABELS_FILE);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading label set {}", path.display()))?;
    let labels: Vec<EmotionLabel> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(EmotionLabel::new)
        .collect();
    if labels.is_empty() {
        bail!("label set file {} is empty", path.display());
    }
    Ok(labels)
}

/// Cleans, filters, transforms per task, splits, and writes the split files
/// plus a per-class statistics table.
pub fn cmd_prepare(config: &RunConfig) -> Result<()> {
    let out_dir = &config.output.dir;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    let raw = load_input(config)?;
    info!("loaded {} samples, {} classes", raw.len(), raw.label_set().len());

    let options = config.cleaning.to_options()?;
    let cleaned = clean_dataset(&raw, &options);
    let filtered = drop_short_samples(&cleaned, config.cleaning.min_words)?;
    info!(
        "{} samples after cleaning and dropping texts under {} words",
        filtered.len(),
        config.cleaning.min_words
    );

    let transformed = match config.task {
        TaskKind::Multiclass => {
            if config.balance {
                balance_classes(&filtered, config.split.seed)?
            } else {
                filtered
            }
        }
        TaskKind::GuiltBinary => {
            let positive = EmotionLabel::new(&config.positive_label);
            let binary = binarize_guilt(&filtered, &positive)?;
            if config.balance {
                balance_classes(&binary, config.split.seed)?
            } else {
                binary
            }
        }
    };

    let split = split_dataset(
        &transformed,
        (
            config.split.ratios[0],
            config.split.ratios[1],
            config.split.ratios[2],
        ),
        config.split.seed,
    )?;

    write_atomic(&out_dir.join(TRAIN_FILE), &dataset_to_csv(&split.train)?)?;
    write_atomic(&out_dir.join(VALID_FILE), &dataset_to_csv(&split.valid)?)?;
    write_atomic(&out_dir.join(TEST_FILE), &dataset_to_csv(&split.test)?)?;

    let mut stats_buf = Vec::new();
    class_stats(&transformed).write_csv(&mut stats_buf)?;
    write_atomic(&out_dir.join(STATS_FILE), &stats_buf)?;

    let labels_text: String = transformed
        .label_set()
        .iter()
        .map(|l| format!("{l}\n"))
        .collect();
    write_atomic(&out_dir.join(LABELS_FILE), labels_text.as_bytes())?;

    println!("dataset,train,valid,test,total");
    println!(
        "{},{},{},{},{}",
        transformed.name(),
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        transformed.len()
    );
    Ok(())
}

/// Builds the vocabulary from the train split, trains under the resolved
/// hyperparameters, and writes per-improvement checkpoints, a `best.bin`
/// alias, and the per-epoch log.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let out_dir = &config.output.dir;
    let labels = read_labels(out_dir)?;
    let train_ds = load_split_file(out_dir, TRAIN_FILE, &labels)?;
    let valid_ds = load_split_file(out_dir, VALID_FILE, &labels)?;

    let train_config = config.train.resolve()?;
    let vocab = Vocabulary::build(&train_ds, config.train.vocab_min_frequency)?;
    vocab.save(&out_dir.join(VOCAB_FILE))?;
    info!("vocabulary: {} tokens", vocab.len());

    let model_config = config
        .model
        .resolve(vocab.len(), labels.len(), train_config.max_len)?;
    let params = ModelParams::init(&model_config, train_config.seed)?;
    info!(
        "model: {} layers, hidden {}, {} heads, {} parameters",
        model_config.n_layers,
        model_config.hidden,
        model_config.n_heads,
        params.param_count()
    );

    let train_batches = make_batches(
        &train_ds,
        &vocab,
        train_config.max_len,
        train_config.batch_size,
        train_config.seed,
        true,
    )?;
    let valid_batches = make_batches(
        &valid_ds,
        &vocab,
        train_config.max_len,
        train_config.batch_size,
        train_config.seed,
        false,
    )?;

    let checkpoint_dir = out_dir.clone();
    let (best_params, log) = fit_with(
        params,
        &train_batches,
        &valid_batches,
        &train_config,
        |epoch, snapshot| {
            let path = checkpoint_dir.join(format!("checkpoint_epoch_{epoch}.bin"));
            save_params(snapshot, &path).map_err(TrainError::Model)
        },
    )?;

    save_params(&best_params, &out_dir.join(BEST_CHECKPOINT))?;
    write_atomic(&out_dir.join(LOG_FILE), log.to_csv_string().as_bytes())?;

    for record in &log.epochs {
        println!(
            "epoch {}: train_loss {:.4}, valid_loss {:.4}",
            record.epoch, record.train_loss, record.valid_loss
        );
    }
    println!(
        "best epoch {} (valid_loss {:.4}){}",
        log.best_epoch,
        log.epochs[log.best_epoch].valid_loss,
        if log.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    debug_assert_eq!(select_best_epoch(&log)?, log.best_epoch);
    Ok(())
}

/// Runs the checkpoint over the test split and writes the report files.
pub fn cmd_evaluate(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let out_dir = &config.output.dir;
    let labels = read_labels(out_dir)?;
    let vocab = Vocabulary::load(&out_dir.join(VOCAB_FILE))
        .context("loading vocabulary (run `train` first)")?;
    let test_ds = load_split_file(out_dir, TEST_FILE, &labels)?;

    let header = read_header(checkpoint)
        .with_context(|| format!("reading checkpoint header {}", checkpoint.display()))?;
    let train_config = config.train.resolve()?;
    let expected = config
        .model
        .resolve(vocab.len(), labels.len(), train_config.max_len)?;
    expected.ensure_matches(&header)?;
    let params = load_params(checkpoint)?;

    let batches = make_batches(
        &test_ds,
        &vocab,
        header.max_len,
        train_config.batch_size,
        0,
        false,
    )?;
    let mut truth = Vec::with_capacity(test_ds.len());
    let mut preds = Vec::with_capacity(test_ds.len());
    for batch in &batches {
        let predicted = guilt_detect::model::predict(&params, batch)?;
        for (&label_idx, pred_idx) in batch.labels.iter().zip(predicted) {
            truth.push(labels[label_idx].clone());
            preds.push(labels[pred_idx].clone());
        }
    }

    let model_name = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_owned());
    let report = classification_report(&truth, &preds, &labels, test_ds.name(), model_name)?;

    write_atomic(&out_dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&out_dir.join("report.csv"), report.to_table_csv().as_bytes())?;
    write_atomic(
        &out_dir.join("confusion_matrix.csv"),
        report.matrix.to_csv_string().as_bytes(),
    )?;

    print!("{}", report.render_text());
    Ok(())
}

/// Renders a saved report JSON as a table.
pub fn cmd_report(report_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(report_path)
        .with_context(|| format!("reading report {}", report_path.display()))?;
    let report = EvaluationReport::from_json(&text)
        .with_context(|| format!("parsing report {}", report_path.display()))?;
    print!("{}", report.render_text());
    Ok(())
}

/// Paths a prepared run directory must contain before `train` can start.
pub fn ensure_prepared(config: &RunConfig) -> Result<()> {
    let out_dir = &config.output.dir;
    for file in [TRAIN_FILE, VALID_FILE, LABELS_FILE] {
        let path = out_dir.join(file);
        if !path.exists() {
            bail!(
                "{} is missing; run `guilt-detect prepare` first",
                path.display()
            );
        }
    }
    Ok(())
}

/// Paths `evaluate` needs: test split, vocabulary, and label set.
pub fn ensure_evaluable(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let out_dir = &config.output.dir;
    for file in [TEST_FILE, VOCAB_FILE, LABELS_FILE] {
        let path = out_dir.join(file);
        if !path.exists() {
            bail!("{} is missing; run `prepare` and `train` first", path.display());
        }
    }
    if !checkpoint.exists() {
        bail!("checkpoint {} does not exist", checkpoint.display());
    }
    Ok(())
}

pub fn best_checkpoint_path(config: &RunConfig) -> PathBuf {
    config.output.dir.join(BEST_CHECKPOINT)
}
