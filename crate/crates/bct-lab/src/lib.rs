//! A desk-scale laboratory for backward-compatible embedding training.
//!
//! When an embedding model behind a retrieval system is upgraded, features
//! already extracted by the old model normally have to be recomputed before
//! the new model can serve queries ("backfill"). Backward-compatible training
//! avoids that cost by training the new model so its features score directly
//! against the old gallery. This crate implements one such method — replacing
//! a fixed fraction of each training batch's embeddings with cached, denoised
//! old features under a single classification loss — alongside two classic
//! baselines (L2 feature regression and old-prototype alignment), a manual
//! backprop MLP/ArcFace stack to train them with, and a full retrieval
//! evaluation harness (1:1 verification TAR@FAR, open-set 1:N TPIR@FPIR,
//! self-test vs cross-test).
//!
//! Everything is driven by explicit 64-bit seeds and runs in seconds on one
//! CPU core; identical configs produce identical output bytes.
//!
//! The `examples/` directory is the front door, one runnable program per
//! capability:
//!
//! ```text
//! cargo run --example generate_dataset     # synthetic data + scenario splits
//! cargo run --example train_embedding      # MLP + softmax/ArcFace training
//! cargo run --example compatible_upgrade   # full old→new upgrade pipeline
//! cargo run --example method_comparison    # mixing vs L2 vs prototypes vs none
//! cargo run --example retrieval_metrics    # TAR@FAR / TPIR@FPIR mechanics
//! cargo run --example alpha_ablation       # sweep of the mix ratio
//! cargo run --example sequential_chain     # three-generation compatibility
//! cargo run --example feature_scatter      # 2-D embedding scatter (SVG)
//! ```
//!
//! The same pipelines are scriptable through the `bct-lab` binary
//! (`gen-data`, `run`, `ablate-alpha`, `ablate-denoise`, `sequential`,
//! `eval-only`, `scatter`).

pub mod bct;
pub mod data;
pub mod error;
pub mod eval;
pub mod lab;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
