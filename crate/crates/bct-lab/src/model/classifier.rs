//! Classifier heads over the embedding space. The head exists only during
//! training; evaluation compares raw embeddings.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierKind {
    /// Plain inner-product logits followed by softmax cross-entropy.
    PlainSoftmax,
    /// Margin-softmax: unit-normalized embeddings and weight rows, true-class
    /// logit s·cos(θ+m), others s·cosθ. Rows are normalized at loss time,
    /// never in storage.
    AngularMargin { scale: f64, margin: f64 },
}

impl ClassifierKind {
    pub fn validate(&self) -> Result<()> {
        if let ClassifierKind::AngularMargin { scale, margin } = self {
            if !(*scale > 0.0) || !scale.is_finite() {
                return Err(Error::InvalidArgument(format!("scale must be > 0, got {scale}")));
            }
            if !(*margin >= 0.0) || !margin.is_finite() {
                return Err(Error::InvalidArgument(format!("margin must be >= 0, got {margin}")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::PlainSoftmax => "softmax",
            ClassifierKind::AngularMargin { .. } => "arcface",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// One row per class, num_classes × embed_dim.
    pub weights: Array2<f64>,
    pub kind: ClassifierKind,
}

impl Classifier {
    /// Random init: rows ~ N(0, 1/embed_dim) — small enough that initial
    /// logits are near zero for both head kinds.
    pub fn init(num_classes: usize, embed_dim: usize, kind: ClassifierKind, rng: &mut Stream) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("classifier needs at least 2 classes".into()));
        }
        if embed_dim == 0 {
            return Err(Error::InvalidArgument("embed_dim must be >= 1".into()));
        }
        kind.validate()?;
        let std = (1.0 / embed_dim as f64).sqrt();
        let mut weights = Array2::<f64>::zeros((num_classes, embed_dim));
        for v in weights.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = std * z;
        }
        Ok(Self { weights, kind })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.ncols()
    }
}
