//! Classification losses with analytic gradients.
//!
//! Both heads reduce to softmax cross-entropy over per-class logits; they
//! differ in how logits are formed from embeddings and classifier rows:
//!
//! * plain: `logit_j = e · w_j`
//! * angular margin: rows are unit-normalized, `logit_j = s·cos θ_j` except
//!   the true class which gets `s·cos(θ_y + m)`; gradients flow through the
//!   normalizations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{Classifier, ClassifierKind};

/// Cosines are clamped to [−1+COS_CLAMP, 1−COS_CLAMP] before the margin is
/// applied; outside the clamp the derivative is zero. This keeps the
/// cos(θ+m) derivative, which contains 1/√(1−c²), finite.
pub const COS_CLAMP: f64 = 1e-7;

/// Norms below this are treated as degenerate zero vectors.
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// dLoss/dEmbedding, same shape as the embedding batch.
    pub grad_emb: Array2<f64>,
    /// dLoss/dClassifierWeights, same shape as `cls.weights`.
    pub grad_weights: Array2<f64>,
}

fn check_batch(cls: &Classifier, emb: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if emb.nrows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if emb.nrows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "batch rows {} != label count {}",
            emb.nrows(),
            labels.len()
        )));
    }
    if emb.ncols() != cls.embed_dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding dim {} != classifier dim {}",
            emb.ncols(),
            cls.embed_dim()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cls.num_classes()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            cls.num_classes()
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy over given logits; returns the loss and
/// dLoss/dLogits. Stable via the log-sum-exp shift.
pub fn softmax_cross_entropy(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() == 0 || logits.nrows() != labels.len() {
        return Err(Error::InvalidArgument("logit/label shape mismatch".into()));
    }
    let b = logits.nrows() as f64;
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NumericFault("non-finite logit".into()));
        }
        let sum: f64 = row.iter().map(|&z| (z - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[labels[i]];
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[j] - lse).exp();
            *g = (p - if j == labels[i] { 1.0 } else { 0.0 }) / b;
        }
    }
    Ok((loss / b, grad))
}

/// Plain softmax cross-entropy on inner-product logits.
pub fn loss_cross_entropy(cls: &Classifier, emb: &ArrayView2<f64>, labels: &[usize]) -> Result<LossOutput> {
    check_batch(cls, emb, labels)?;
    let logits = emb.dot(&cls.weights.t());
    let (loss, grad_logits) = softmax_cross_entropy(&logits.view(), labels)?;
    Ok(LossOutput {
        loss,
        grad_emb: grad_logits.dot(&cls.weights),
        grad_weights: grad_logits.t().dot(emb),
    })
}

fn unit_rows(m: &ArrayView2<f64>, what: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut out = m.to_owned();
    let mut norms = Array1::<f64>::zeros(m.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n < MIN_NORM {
            return Err(Error::DegenerateInput(format!("zero-norm {what} row {i}")));
        }
        row.mapv_inplace(|v| v / n);
        norms[i] = n;
    }
    Ok((out, norms))
}

/// Projects a gradient w.r.t. a unit vector back through the normalization
/// x̂ = x/‖x‖:  g_x = (g_x̂ − (g_x̂·x̂)·x̂)/‖x‖.
fn through_normalization(grad_hat: &ArrayView1<f64>, hat: &ArrayView1<f64>, norm: f64) -> Array1<f64> {
    let along = grad_hat.dot(hat);
    let mut g = grad_hat.to_owned();
    g.zip_mut_with(hat, |gv, &hv| *gv -= along * hv);
    g.mapv_inplace(|v| v / norm);
    g
}

/// Margin-softmax loss. With margin 0 and scale 1 this reduces exactly to
/// cross-entropy on cosine logits.
pub fn loss_arcface(cls: &Classifier, emb: &ArrayView2<f64>, labels: &[usize]) -> Result<LossOutput> {
    check_batch(cls, emb, labels)?;
    let (scale, margin) = match cls.kind {
        ClassifierKind::AngularMargin { scale, margin } => (scale, margin),
        ClassifierKind::PlainSoftmax => {
            return Err(Error::InvalidArgument(
                "loss_arcface requires an angular-margin classifier".into(),
            ))
        }
    };
    let (e_hat, e_norm) = unit_rows(emb, "embedding")?;
    let (w_hat, w_norm) = unit_rows(&cls.weights.view(), "classifier weight")?;
    let (cos_m, sin_m) = (margin.cos(), margin.sin());

    let raw_cos = e_hat.dot(&w_hat.t());
    let lo = -1.0 + COS_CLAMP;
    let hi = 1.0 - COS_CLAMP;
    let cos = raw_cos.mapv(|c| c.clamp(lo, hi));

    let mut logits = cos.mapv(|c| scale * c);
    for (i, &y) in labels.iter().enumerate() {
        let c = cos[(i, y)];
        // cos(θ+m) written in terms of cosθ: c·cos m − √(1−c²)·sin m.
        logits[(i, y)] = scale * (c * cos_m - (1.0 - c * c).sqrt() * sin_m);
    }

    let (loss, grad_logits) = softmax_cross_entropy(&logits.view(), labels)?;

    // dLoss/dcos: scale for off-class entries; the true class picks up the
    // margin chain term; clamped entries stop gradient.
    let mut dcos = grad_logits.mapv(|g| g * scale);
    for (i, &y) in labels.iter().enumerate() {
        let c = cos[(i, y)];
        dcos[(i, y)] *= cos_m + sin_m * c / (1.0 - c * c).sqrt();
    }
    dcos.zip_mut_with(&raw_cos, |g, &rc| {
        if rc < lo || rc > hi {
            *g = 0.0;
        }
    });

    let grad_e_hat = dcos.dot(&w_hat);
    let grad_w_hat = dcos.t().dot(&e_hat);

    let mut grad_emb = Array2::<f64>::zeros(emb.raw_dim());
    for i in 0..emb.nrows() {
        grad_emb
            .row_mut(i)
            .assign(&through_normalization(&grad_e_hat.row(i), &e_hat.row(i), e_norm[i]));
    }
    let mut grad_weights = Array2::<f64>::zeros(cls.weights.raw_dim());
    for j in 0..cls.num_classes() {
        grad_weights
            .row_mut(j)
            .assign(&through_normalization(&grad_w_hat.row(j), &w_hat.row(j), w_norm[j]));
    }
    Ok(LossOutput { loss, grad_emb, grad_weights })
}

/// Dispatches to the loss matching the classifier head.
pub fn classification_loss(cls: &Classifier, emb: &ArrayView2<f64>, labels: &[usize]) -> Result<LossOutput> {
    match cls.kind {
        ClassifierKind::PlainSoftmax => loss_cross_entropy(cls, emb, labels),
        ClassifierKind::AngularMargin { .. } => loss_arcface(cls, emb, labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, rng: &mut crate::rng::Stream) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((rows, cols));
        for v in m.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        m
    }

    #[test]
    fn equal_logits_give_ln_k() {
        let cls = Classifier { weights: Array2::zeros((2, 3)), kind: ClassifierKind::PlainSoftmax };
        let emb = array![[1.0, 2.0, 3.0], [0.5, -1.0, 0.0]];
        let out = loss_cross_entropy(&cls, &emb.view(), &[0, 1]).unwrap();
        assert!((out.loss - (2.0f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_drive_loss_to_zero() {
        // Embedding aligned with its own class row and scaled hard: the
        // softmax saturates and the loss vanishes.
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let cls = Classifier { weights: w * 1e4, kind: ClassifierKind::PlainSoftmax };
        let emb = array![[1.0, 0.0], [0.0, 1.0]];
        let out = loss_cross_entropy(&cls, &emb.view(), &[0, 1]).unwrap();
        assert!(out.loss < 1e-12, "loss {} should vanish", out.loss);
    }

    #[test]
    fn arcface_margin_zero_scale_one_is_cosine_cross_entropy() {
        let mut rng = crate::rng::stream(99, &[]);
        for trial in 0..20 {
            let (b, c, d) = (4, 5, 6);
            let emb = random_matrix(b, d, &mut rng);
            let w = random_matrix(c, d, &mut rng);
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();

            let arc = Classifier {
                weights: w.clone(),
                kind: ClassifierKind::AngularMargin { scale: 1.0, margin: 0.0 },
            };
            let arc_out = loss_arcface(&arc, &emb.view(), &labels).unwrap();

            // Oracle: plain cross-entropy on explicitly normalized rows, i.e.
            // cosine logits.
            let (e_hat, _) = unit_rows(&emb.view(), "e").unwrap();
            let (w_hat, _) = unit_rows(&w.view(), "w").unwrap();
            let plain = Classifier { weights: w_hat, kind: ClassifierKind::PlainSoftmax };
            let ce_out = loss_cross_entropy(&plain, &e_hat.view(), &labels).unwrap();

            assert!(
                (arc_out.loss - ce_out.loss).abs() < 1e-10,
                "trial {trial}: arc {} vs cosine-CE {}",
                arc_out.loss,
                ce_out.loss
            );
        }
    }

    #[test]
    fn arcface_collinear_high_scale_drives_loss_to_zero() {
        let w = array![[1.0, 0.0], [-1.0, 0.0]];
        let cls = Classifier { weights: w, kind: ClassifierKind::AngularMargin { scale: 1e3, margin: 0.0 } };
        let emb = array![[2.0, 0.0]];
        let out = loss_arcface(&cls, &emb.view(), &[0]).unwrap();
        assert!(out.loss < 1e-12, "loss {} should vanish", out.loss);
    }

    #[test]
    fn arcface_rejects_zero_embedding() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let cls = Classifier { weights: w, kind: ClassifierKind::AngularMargin { scale: 30.0, margin: 0.3 } };
        let emb = array![[0.0, 0.0]];
        match loss_arcface(&cls, &emb.view(), &[0]) {
            Err(Error::DegenerateInput(_)) => {}
            other => panic!("expected degenerate-input, got {other:?}"),
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let cls = Classifier { weights: Array2::zeros((2, 3)), kind: ClassifierKind::PlainSoftmax };
        let emb = Array2::<f64>::zeros((0, 3));
        assert!(loss_cross_entropy(&cls, &emb.view(), &[]).is_err());
    }
}
