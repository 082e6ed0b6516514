//! Emotion and guilt text classification at desk scale.
//!
//! The crate covers the full experimental pipeline:
//!
//! - [`corpus`]: dataset ingestion, cleaning, class balancing, guilt
//!   binarization, seeded splitting, and synthetic corpus generation.
//! - [`tokenizer`]: vocabulary construction and fixed-length, masked batch
//!   encoding.
//! - [`model`]: a from-scratch transformer-encoder classifier with exact
//!   analytic gradients and a versioned checkpoint format.
//! - [`optim`]: AdamW with linear warmup, the training loop, and
//!   validation-loss early stopping.
//! - [`metrics`]: per-class precision/recall/F1, macro averages, and
//!   confusion matrices.
//!
//! Every seeded operation is deterministic: identical inputs and seed
//! produce identical outputs.

pub mod corpus;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tokenizer;
