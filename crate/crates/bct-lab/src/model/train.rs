//! Plain classification training: shuffled mini-batches, momentum SGD,
//! linearly decaying learning rate.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::data::{LabelMap, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{classification_loss, lr_at, sgd_step, Backbone, Classifier, SgdState};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::InvalidArgument(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

fn check_model_shapes(ds: &LabeledDataset, bb: &Backbone, cls: &Classifier, map: &LabelMap) -> Result<()> {
    if bb.in_dim() != ds.dim() {
        return Err(Error::InvalidArgument(format!(
            "backbone input dim {} != dataset dim {}",
            bb.in_dim(),
            ds.dim()
        )));
    }
    if bb.embed_dim() != cls.embed_dim() {
        return Err(Error::InvalidArgument(format!(
            "backbone embed dim {} != classifier dim {}",
            bb.embed_dim(),
            cls.embed_dim()
        )));
    }
    if cls.num_classes() != map.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "classifier covers {} classes but the split has {}",
            cls.num_classes(),
            map.num_classes()
        )));
    }
    Ok(())
}

/// Number of optimizer steps `epochs` passes over `n` samples will take.
pub(crate) fn total_steps(n: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * n.div_ceil(batch_size)
}

/// Trains backbone and classifier jointly on the samples at `split_indices`.
///
/// Each epoch shuffles the index list with a stream derived from
/// (cfg.seed, epoch), walks it in batches of `cfg.batch_size` (final partial
/// batch included), and applies one SGD step per batch. Returns the trained
/// pair and the per-epoch mean loss trace.
pub fn train_classifier(
    split_indices: &[usize],
    ds: &LabeledDataset,
    bb: Backbone,
    cls: Classifier,
    cfg: &TrainConfig,
) -> Result<(Backbone, Classifier, Vec<f64>)> {
    cfg.validate()?;
    let map = LabelMap::from_indices(ds, split_indices)?;
    check_model_shapes(ds, &bb, &cls, &map)?;

    let mut bb = bb;
    let mut cls = cls;
    let mut state = SgdState::for_model(&bb, &cls);
    let total = total_steps(split_indices.len(), cfg.batch_size, cfg.epochs);
    let mut step = 0usize;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = split_indices.to_vec();
        order.shuffle(&mut rng::stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = ds.gather(batch)?;
            let labels = map.rows_for(ds, batch)?;
            let (emb, fwd) = bb.forward_traced(&x.view())?;
            let out = classification_loss(&cls, &emb.view(), &labels)?;
            let grads = bb.backward(&fwd, &out.grad_emb.view())?;

            let lr = lr_at(step, total, cfg.lr0)?;
            for (l, layer) in bb.layers_mut().iter_mut().enumerate() {
                let (gw, gb) = &grads.layers[l];
                sgd_step(
                    &mut layer.weight,
                    gw,
                    lr,
                    cfg.momentum,
                    cfg.weight_decay,
                    &mut state.weight_velocity[l],
                )?;
                sgd_step(
                    &mut layer.bias,
                    gb,
                    lr,
                    cfg.momentum,
                    cfg.weight_decay,
                    &mut state.bias_velocity[l],
                )?;
            }
            sgd_step(
                &mut cls.weights,
                &out.grad_weights,
                lr,
                cfg.momentum,
                cfg.weight_decay,
                &mut state.classifier_velocity,
            )?;
            step += 1;
            loss_sum += out.loss * batch.len() as f64;
        }
        trace.push(loss_sum / split_indices.len() as f64);
    }
    Ok((bb, cls, trace))
}

/// Embeds the samples at `indices`; row k corresponds to `indices[k]`.
pub fn extract_features(bb: &Backbone, ds: &LabeledDataset, indices: &[usize]) -> Result<Array2<f64>> {
    let x = ds.gather(indices)?;
    bb.forward_embed(&x.view())
}
