//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! 1. Analytic gradients match central finite differences on a tiny model.
//! 2. Metrics from the confusion matrix equal a brute-force tally.
//! 3. Replaying the recorded nine-epoch loss curve selects epoch 6.
//! 4. Preparation is structurally correct and byte-identical across reruns.
//! 5. The desk-scale model learns a separable synthetic corpus end to end.
//! 6. Macro-averaging the recorded binary per-class rows matches the
//!    recorded macro row.
//! 7. Linear warmup hits the documented rates exactly.
//! 8. Weight decay is decoupled and skips biases and layer norms.
//! 9. Checkpoints round-trip bit-exactly at desk and paper scale.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use guilt_detect::corpus::{
    balance_classes, binarize_guilt, clean_dataset, default_lexicons, drop_short_samples,
    generate_synthetic, split_dataset, write_delimited, CleaningOptions, DelimitedFormat,
    EmotionLabel, LabeledDataset,
};
use guilt_detect::metrics::{classification_report, macro_average, ClassMetrics};
use guilt_detect::model::{
    load_params, loss_and_grad, predict, save_params, ModelConfig, ModelParams,
};
use guilt_detect::optim::{
    adamw_step, fit, lr_at_step, select_best_epoch, OptimizerState, TrainConfig, TrainingLog,
};
use guilt_detect::tokenizer::{make_batches, EncodedBatch, Vocabulary, CLS_ID, PAD_ID, SEP_ID};

fn pass(number: usize, name: &str) {
    println!("acceptance {number} ({name}): PASS");
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        hidden: 8,
        n_heads: 2,
        ff_dim: 16,
        max_len: 10,
        vocab_size: 20,
        n_classes: 2,
        dropout_rate: 0.1,
    }
}

fn batch_of_three(max_len: usize) -> EncodedBatch {
    let rows: [(&[u32], usize); 3] = [(&[4, 5, 6, 7, 8], 0), (&[9, 10], 1), (&[11, 12, 13], 0)];
    let mut ids = Vec::new();
    let mut mask = Vec::new();
    let mut labels = Vec::new();
    for (tokens, label) in rows {
        let mut row = vec![CLS_ID];
        row.extend_from_slice(tokens);
        row.push(SEP_ID);
        let real = row.len();
        row.resize(max_len, PAD_ID);
        let mut m = vec![1u8; real];
        m.resize(max_len, 0);
        ids.push(row);
        mask.push(m);
        labels.push(label);
    }
    EncodedBatch {
        ids,
        mask,
        labels,
        max_len,
    }
}

#[test]
fn acceptance_1_gradient_correctness() {
    let start = Instant::now();
    let config = tiny_model_config();
    let params = ModelParams::init(&config, 11).unwrap();
    let batch = batch_of_three(config.max_len);
    let (_, grads) = loss_and_grad(&params, &batch, false, 0).unwrap();

    let total = params.param_count();
    let mut indices: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    indices.shuffle(&mut rng);
    let sampled = &indices[..220.min(total)];
    assert!(sampled.len() >= 200, "need at least 200 sampled parameters");

    let h = 1e-4;
    for &idx in sampled {
        let original = params.get_flat(idx).unwrap();

        let mut plus = params.clone();
        plus.set_flat(idx, original + h);
        let (loss_plus, _) = loss_and_grad(&plus, &batch, false, 0).unwrap();

        let mut minus = params.clone();
        minus.set_flat(idx, original - h);
        let (loss_minus, _) = loss_and_grad(&minus, &batch, false, 0).unwrap();

        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let analytic = grads.get_flat(idx).unwrap();
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        assert!(
            rel < 1e-4,
            "parameter {idx}: numeric {numeric:.12e}, analytic {analytic:.12e}, rel {rel:.3e}"
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "gradient check took {elapsed:?}, budget is 30 s"
    );
    pass(1, "gradient correctness");
}

/// Brute-force per-class metrics by scanning (truth, prediction) pairs.
fn tally_metrics(truth: &[usize], preds: &[usize], k: usize) -> (Vec<[f64; 3]>, [f64; 3]) {
    let mut per_class = Vec::with_capacity(k);
    for class in 0..k {
        let tp = truth
            .iter()
            .zip(preds)
            .filter(|(&t, &p)| t == class && p == class)
            .count() as f64;
        let predicted = preds.iter().filter(|&&p| p == class).count() as f64;
        let actual = truth.iter().filter(|&&t| t == class).count() as f64;
        let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
        let recall = if actual == 0.0 { 0.0 } else { tp / actual };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push([precision, recall, f1]);
    }
    let n = k as f64;
    let mut macro_avg = [0.0; 3];
    for metrics in &per_class {
        for (slot, value) in macro_avg.iter_mut().zip(metrics) {
            *slot += value / n;
        }
    }
    (per_class, macro_avg)
}

#[test]
fn acceptance_2_metric_oracle_equivalence() {
    let start = Instant::now();
    let names: Vec<EmotionLabel> = (0..8)
        .map(|i| EmotionLabel::new(&format!("class{i}")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    for _ in 0..1000 {
        let k = rng.random_range(2..=8usize);
        let n = rng.random_range(1..=200usize);
        let truth_idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds_idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

        let labels = &names[..k];
        let truth: Vec<EmotionLabel> = truth_idx.iter().map(|&i| labels[i].clone()).collect();
        let preds: Vec<EmotionLabel> = preds_idx.iter().map(|&i| labels[i].clone()).collect();
        let report = classification_report(&truth, &preds, labels, "oracle", "m").unwrap();

        let (expected, expected_macro) = tally_metrics(&truth_idx, &preds_idx, k);
        for (row, want) in report.per_class.iter().zip(&expected) {
            assert!((row.metrics.precision - want[0]).abs() <= 1e-12);
            assert!((row.metrics.recall - want[1]).abs() <= 1e-12);
            assert!((row.metrics.f1 - want[2]).abs() <= 1e-12);
        }
        assert!((report.macro_avg.precision - expected_macro[0]).abs() <= 1e-12);
        assert!((report.macro_avg.recall - expected_macro[1]).abs() <= 1e-12);
        assert!((report.macro_avg.f1 - expected_macro[2]).abs() <= 1e-12);
        assert_eq!(report.matrix.total(), n as u64);
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 10,
        "metric oracle comparison took {elapsed:?}, budget is 10 s"
    );
    pass(2, "metric oracle equivalence");
}

#[test]
fn acceptance_3_recorded_loss_curve_selects_epoch_6() {
    let valid_losses = [
        1.8593, 1.8547, 1.9003, 1.8617, 1.8756, 1.9024, 1.8421, 1.8632, 1.8530,
    ];
    let log = TrainingLog::from_valid_losses(&valid_losses).unwrap();
    let best = select_best_epoch(&log).unwrap();
    assert_eq!(best, 6);
    assert_eq!(log.epochs[best].valid_loss, 1.8421);
    pass(3, "recorded loss curve selects epoch 6");
}

/// The prepare pipeline as the CLI runs it for the guilt-binary task.
fn prepare_binary(seed: u64) -> (LabeledDataset, Vec<Vec<u8>>) {
    let labels = vec![EmotionLabel::new("guilt"), EmotionLabel::new("joy")];
    let raw = generate_synthetic(13, &labels, 500, &default_lexicons()).unwrap();
    let cleaned = clean_dataset(&raw, &CleaningOptions::default());
    let filtered = drop_short_samples(&cleaned, 2).unwrap();
    let binary = binarize_guilt(&filtered, &EmotionLabel::new("guilt")).unwrap();
    let balanced = balance_classes(&binary, seed).unwrap();
    let split = split_dataset(&balanced, (0.8, 0.1, 0.1), seed).unwrap();

    let mut files = Vec::new();
    for part in [&split.train, &split.valid, &split.test] {
        let mut buf = Vec::new();
        write_delimited(part, &mut buf, DelimitedFormat::Csv).unwrap();
        files.push(buf);
    }
    (balanced, files)
}

#[test]
fn acceptance_4_preprocessing_structure_and_determinism() {
    // Floor rule sizes on a 1000-sample corpus.
    let (balanced, files_a) = prepare_binary(42);
    assert_eq!(balanced.len(), 1000);
    let labels = vec![EmotionLabel::new("guilt"), EmotionLabel::new("joy")];
    let raw = generate_synthetic(13, &labels, 500, &default_lexicons()).unwrap();
    let cleaned = clean_dataset(&raw, &CleaningOptions::default());

    // Binarization keeps the size and yields exactly two labels.
    let binary = binarize_guilt(&cleaned, &EmotionLabel::new("guilt")).unwrap();
    assert_eq!(binary.len(), cleaned.len());
    assert_eq!(binary.label_set().len(), 2);

    // Balancing equalizes to the minimum class count on a skewed corpus.
    let skewed_samples: Vec<_> = binary
        .samples()
        .iter()
        .filter(|s| s.label == EmotionLabel::new("guilt") || s.id % 3 == 0)
        .cloned()
        .collect();
    let skewed = LabeledDataset::new("skewed", skewed_samples, binary.label_set().to_vec()).unwrap();
    let counts_before: Vec<usize> = skewed.class_counts().iter().map(|(_, c)| *c).collect();
    let minimum = *counts_before.iter().min().unwrap();
    assert!(counts_before[0] != counts_before[1], "skew failed");
    let rebalanced = balance_classes(&skewed, 7).unwrap();
    for (_, count) in rebalanced.class_counts() {
        assert_eq!(count, minimum);
    }

    let split = split_dataset(&balanced, (0.8, 0.1, 0.1), 42).unwrap();
    assert_eq!(
        (split.train.len(), split.valid.len(), split.test.len()),
        (800, 100, 100)
    );

    // Reruns with the same seed produce byte-identical split files.
    let (_, files_b) = prepare_binary(42);
    assert_eq!(files_a, files_b);
    let (_, files_c) = prepare_binary(43);
    assert_ne!(files_a, files_c);

    pass(4, "preprocessing structure and determinism");
}

#[test]
fn acceptance_5_end_to_end_learnability() {
    let start = Instant::now();

    // Separable two-class corpus, 500 samples per class.
    let labels = vec![EmotionLabel::new("guilt"), EmotionLabel::new("joy")];
    let raw = generate_synthetic(13, &labels, 500, &default_lexicons()).unwrap();
    let cleaned = clean_dataset(&raw, &CleaningOptions::default());
    let filtered = drop_short_samples(&cleaned, 2).unwrap();
    let binary = binarize_guilt(&filtered, &EmotionLabel::new("guilt")).unwrap();
    let balanced = balance_classes(&binary, 42).unwrap();
    let split = split_dataset(&balanced, (0.8, 0.1, 0.1), 42).unwrap();

    // Hyperparameters: the pretraining-regime preset with the documented
    // x10 from-scratch scaling, run for up to 10 epochs.
    let train_config = TrainConfig {
        learning_rate: 2e-5 * 10.0,
        max_epochs: 10,
        seed: 7,
        ..TrainConfig::guiltbert()
    };

    let vocab = Vocabulary::build(&split.train, 1).unwrap();
    let train_batches = make_batches(
        &split.train,
        &vocab,
        train_config.max_len,
        train_config.batch_size,
        train_config.seed,
        true,
    )
    .unwrap();
    let valid_batches = make_batches(
        &split.valid,
        &vocab,
        train_config.max_len,
        train_config.batch_size,
        train_config.seed,
        false,
    )
    .unwrap();
    let test_batches = make_batches(
        &split.test,
        &vocab,
        train_config.max_len,
        train_config.batch_size,
        0,
        false,
    )
    .unwrap();

    let model_config = ModelConfig::desk_scale(vocab.len(), 2, train_config.max_len);
    assert_eq!((model_config.n_layers, model_config.hidden, model_config.n_heads), (2, 128, 4));
    let params = ModelParams::init(&model_config, train_config.seed).unwrap();

    let (best_params, log) = fit(params, &train_batches, &valid_batches, &train_config).unwrap();
    assert!(log.epochs.len() <= 10);

    // Training loss falls monotonically over the first three epochs.
    assert!(log.epochs.len() >= 3);
    assert!(log.epochs[0].train_loss > log.epochs[1].train_loss);
    assert!(log.epochs[1].train_loss > log.epochs[2].train_loss);

    let label_names = split.test.label_set().to_vec();
    let mut truth = Vec::new();
    let mut preds = Vec::new();
    for batch in &test_batches {
        let predicted = predict(&best_params, batch).unwrap();
        for (&t, p) in batch.labels.iter().zip(predicted) {
            truth.push(label_names[t].clone());
            preds.push(label_names[p].clone());
        }
    }
    let report = classification_report(&truth, &preds, &label_names, "test", "trained").unwrap();
    assert!(
        report.macro_avg.f1 >= 0.95,
        "trained macro F1 {:.4} is below 0.95 (log: {:?})",
        report.macro_avg.f1,
        log.epochs
    );

    // Constant-majority baseline sits near 1/3 macro F1 on two classes.
    let majority = {
        let counts = split.train.class_counts();
        counts
            .iter()
            .max_by_key(|(_, count)| *count)
            .map(|(label, _)| label.clone())
            .unwrap()
    };
    let constant: Vec<EmotionLabel> = vec![majority; truth.len()];
    let baseline = classification_report(&truth, &constant, &label_names, "test", "majority").unwrap();
    assert!(
        (baseline.macro_avg.f1 - 1.0 / 3.0).abs() < 0.02,
        "majority baseline macro F1 {:.4} is not near 0.33",
        baseline.macro_avg.f1
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "end-to-end run took {elapsed:?}, budget is 5 min"
    );
    pass(5, "end-to-end learnability");
}

#[test]
fn acceptance_6_macro_of_recorded_binary_rows() {
    let guilt = ClassMetrics {
        precision: 0.78,
        recall: 0.76,
        f1: 0.77,
    };
    let no_guilt = ClassMetrics {
        precision: 0.76,
        recall: 0.77,
        f1: 0.77,
    };
    let macro_avg = macro_average(&[guilt, no_guilt]).unwrap();
    let tolerance = 0.005 + 1e-12;
    assert!((macro_avg.precision - 0.77).abs() <= tolerance);
    assert!((macro_avg.recall - 0.77).abs() <= tolerance);
    assert!((macro_avg.f1 - 0.77).abs() <= tolerance);
    pass(6, "macro average of recorded binary rows");
}

#[test]
fn acceptance_7_warmup_schedule_exactness() {
    let config = TrainConfig::guiltbert();
    assert_eq!(config.warmup_steps, 1000);
    assert_eq!(lr_at_step(&config, 0), 0.0);
    assert_eq!(lr_at_step(&config, 500), 1e-5);
    for step in [1000, 1001, 2000, 100_000] {
        assert_eq!(lr_at_step(&config, step), 2e-5);
    }
    pass(7, "warmup schedule exactness");
}

#[test]
fn acceptance_8_decoupled_weight_decay() {
    let config = tiny_model_config();
    let mut params = ModelParams::zeros_like(&config);
    params.token_embedding[(0, 0)] = 1.0;
    params.layers[0].query.bias[0] = 1.0;
    params.layers[0].ln_attn.gamma[0] = 1.0;
    params.layers[0].ln_ff.beta[0] = 1.0;
    let grads = ModelParams::zeros_like(&config);
    let mut state = OptimizerState::new(&params);
    let train_config = TrainConfig {
        warmup_steps: 0,
        ..TrainConfig::guiltbert()
    };
    assert_eq!(train_config.learning_rate, 2e-5);
    assert_eq!(train_config.weight_decay, 0.01);

    adamw_step(&mut params, &grads, &mut state, &train_config).unwrap();

    assert!((params.token_embedding[(0, 0)] - 0.999_999_8).abs() < 1e-12);
    assert_eq!(params.layers[0].query.bias[0], 1.0);
    assert_eq!(params.layers[0].ln_attn.gamma[0], 1.0);
    assert_eq!(params.layers[0].ln_ff.beta[0], 1.0);
    pass(8, "decoupled weight decay");
}

#[test]
fn acceptance_9_checkpoint_round_trip_both_scales() {
    let dir = tempfile::tempdir().unwrap();

    let bitwise_equal = |a: &ModelParams, b: &ModelParams| {
        assert_eq!(a.config, b.config);
        for (va, vb) in a.views().iter().zip(b.views().iter()) {
            assert_eq!(va.name, vb.name);
            assert_eq!(va.values.len(), vb.values.len());
            for (x, y) in va.values.iter().zip(vb.values.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "tensor {}", va.name);
            }
        }
    };

    let desk = ModelConfig::desk_scale(311, 2, 128);
    let desk_params = ModelParams::init(&desk, 5).unwrap();
    let desk_path = dir.path().join("desk.bin");
    save_params(&desk_params, &desk_path).unwrap();
    bitwise_equal(&desk_params, &load_params(&desk_path).unwrap());

    // Paper scale: 12 layers, 768 hidden, 12 heads; initialized only.
    let paper = ModelConfig::paper_scale(311, 2);
    assert_eq!((paper.n_layers, paper.hidden, paper.n_heads), (12, 768, 12));
    let paper_params = ModelParams::init(&paper, 5).unwrap();
    let paper_path = dir.path().join("paper.bin");
    save_params(&paper_params, &paper_path).unwrap();
    bitwise_equal(&paper_params, &load_params(&paper_path).unwrap());

    pass(9, "checkpoint round trip at both scales");
}
