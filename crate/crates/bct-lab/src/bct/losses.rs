//! Training objectives of the compatibility methods. Each returns the usual
//! `LossOutput`; the embedding gradient is what flows back into the new
//! backbone, so "old features are constants" is realized by zeroing rows.

use ndarray::ArrayView2;

use crate::bct::PrototypeSet;
use crate::error::{Error, Result};
use crate::model::{classification_loss, softmax_cross_entropy, Classifier, ClassifierKind, LossOutput};

/// Classification loss over a mixed batch. Rows listed in
/// `replaced_positions` came from the old-feature cache: they still drive
/// the classifier (their gradient reaches `grad_weights`), but their
/// embedding gradient is dropped because nothing upstream produced them.
pub fn mixbct_loss(
    cls: &Classifier,
    mixed_emb: &ArrayView2<f64>,
    labels: &[usize],
    replaced_positions: &[usize],
) -> Result<LossOutput> {
    let mut out = classification_loss(cls, mixed_emb, labels)?;
    for &pos in replaced_positions {
        if pos >= mixed_emb.nrows() {
            return Err(Error::InvalidArgument(format!(
                "replaced position {pos} outside batch of {}",
                mixed_emb.nrows()
            )));
        }
        out.grad_emb.row_mut(pos).fill(0.0);
    }
    Ok(out)
}

/// Classification loss plus `lambda` times the batch-mean L2 distance
/// between new embeddings and their cached old features. The distance is
/// unsquared, so its gradient is the unit direction scaled by 1/B; rows
/// where the two coincide sit at the kink and contribute zero gradient.
pub fn l2bct_loss(
    cls: &Classifier,
    new_emb: &ArrayView2<f64>,
    old_feats: &ArrayView2<f64>,
    labels: &[usize],
    lambda: f64,
) -> Result<LossOutput> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    if new_emb.raw_dim() != old_feats.raw_dim() {
        return Err(Error::InvalidArgument(format!(
            "new embeddings {:?} and old features {:?} differ in shape",
            new_emb.shape(),
            old_feats.shape()
        )));
    }
    let mut out = classification_loss(cls, new_emb, labels)?;
    if lambda == 0.0 {
        return Ok(out);
    }
    let b = new_emb.nrows() as f64;
    let mut reg = 0.0;
    for i in 0..new_emb.nrows() {
        let diff = &new_emb.row(i) - &old_feats.row(i);
        let dist = diff.dot(&diff).sqrt();
        reg += dist;
        if dist >= 1e-12 {
            let coeff = lambda / (b * dist);
            out.grad_emb.row_mut(i).zip_mut_with(&diff, |g, &d| *g += coeff * d);
        }
    }
    out.loss += lambda * reg / b;
    Ok(out)
}

/// Classification loss plus `weight` times a cross-entropy that pushes each
/// new embedding toward its class's old prototype: logits are cosine
/// similarities to all prototype centers, scaled by the classifier's s when
/// the head is angular. Rows whose class has no prototype skip the term;
/// prototypes are constants and receive no gradient.
pub fn proto_bct_loss(
    cls: &Classifier,
    new_emb: &ArrayView2<f64>,
    labels: &[usize],
    orig_labels: &[u32],
    protos: &PrototypeSet,
    weight: f64,
) -> Result<LossOutput> {
    if protos.is_empty() {
        return Err(Error::InvalidArgument("prototype set is empty".into()));
    }
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(Error::InvalidArgument(format!("weight must be non-negative, got {weight}")));
    }
    if orig_labels.len() != new_emb.nrows() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} rows but {} class ids",
            new_emb.nrows(),
            orig_labels.len()
        )));
    }
    if new_emb.ncols() != protos.centers().ncols() {
        return Err(Error::InvalidArgument(format!(
            "embedding dim {} != prototype dim {}",
            new_emb.ncols(),
            protos.centers().ncols()
        )));
    }
    let mut out = classification_loss(cls, new_emb, labels)?;
    if weight == 0.0 {
        return Ok(out);
    }

    let applicable: Vec<(usize, usize)> = orig_labels
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| protos.row_for_label(c).map(|row| (i, row)))
        .collect();
    if applicable.is_empty() {
        return Ok(out);
    }

    let scale = match cls.kind {
        ClassifierKind::AngularMargin { scale, .. } => scale,
        ClassifierKind::PlainSoftmax => 1.0,
    };

    let mut e_hat = ndarray::Array2::<f64>::zeros((applicable.len(), new_emb.ncols()));
    let mut norms = Vec::with_capacity(applicable.len());
    for (k, &(i, _)) in applicable.iter().enumerate() {
        let row = new_emb.row(i);
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateInput(format!("zero-norm embedding at batch row {i}")));
        }
        e_hat.row_mut(k).assign(&row.mapv(|v| v / norm));
        norms.push(norm);
    }
    let targets: Vec<usize> = applicable.iter().map(|&(_, row)| row).collect();
    let logits = e_hat.dot(&protos.centers().t()) * scale;
    let (ce, grad_logits) = softmax_cross_entropy(&logits.view(), &targets)?;
    out.loss += weight * ce;

    let grad_hat = grad_logits.dot(protos.centers()) * (weight * scale);
    for (k, &(i, _)) in applicable.iter().enumerate() {
        let hat = e_hat.row(k);
        let g = grad_hat.row(k);
        let along = g.dot(&hat);
        let mut target_row = out.grad_emb.row_mut(i);
        for (j, gv) in g.iter().enumerate() {
            target_row[j] += (gv - along * hat[j]) / norms[k];
        }
    }
    Ok(out)
}
