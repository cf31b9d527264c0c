//! The compatible-training driver: one epoch/batch loop shared by every
//! method, differing only in how the batch loss is formed.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::bct::{
    compute_prototypes, credible_in_batch, denoise, l2bct_loss, mix_batch, mixbct_loss,
    proto_bct_loss, OldFeatureCache, PrototypeSet,
};
use crate::data::{LabelMap, LabeledDataset, ScenarioSplit};
use crate::error::{Error, Result};
use crate::model::{
    classification_loss, lr_at, sgd_step, Backbone, Classifier, SgdState, TrainConfig,
};
use crate::rng::{self, tag};

/// Which compatibility objective the new model trains under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodConfig {
    /// Plain classification; no use of the old model at all.
    NoCompat,
    /// Replace ⌊alpha·B⌋ embeddings per batch with cached old features,
    /// optionally restricted to rows surviving denoising.
    MixBCT { alpha: f64, denoise: bool, exclusion_fraction: f64 },
    /// Classification plus lambda × batch-mean L2 distance to old features.
    L2BCT { lambda: f64 },
    /// Classification plus a cross-entropy pull toward old class prototypes.
    ProtoBCT { weight: f64 },
}

impl MethodConfig {
    pub fn name(self) -> &'static str {
        match self {
            MethodConfig::NoCompat => "nocompat",
            MethodConfig::MixBCT { .. } => "mixbct",
            MethodConfig::L2BCT { .. } => "l2bct",
            MethodConfig::ProtoBCT { .. } => "protobct",
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            MethodConfig::NoCompat => Ok(()),
            MethodConfig::MixBCT { alpha, exclusion_fraction, .. } => {
                if !(0.0..1.0).contains(&alpha) {
                    return Err(Error::InvalidArgument(format!(
                        "mix alpha must lie in [0,1), got {alpha}"
                    )));
                }
                if !(0.0..1.0).contains(&exclusion_fraction) {
                    return Err(Error::InvalidArgument(format!(
                        "exclusion fraction must lie in [0,1), got {exclusion_fraction}"
                    )));
                }
                Ok(())
            }
            MethodConfig::L2BCT { lambda } => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "lambda must be non-negative, got {lambda}"
                    )));
                }
                Ok(())
            }
            MethodConfig::ProtoBCT { weight } => {
                if !(weight.is_finite() && weight >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "prototype weight must be non-negative, got {weight}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Whether the method consumes cached old features at all.
    pub fn needs_cache(self) -> bool {
        !matches!(self, MethodConfig::NoCompat)
    }
}

/// One optimizer step's worth of log data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    /// Embeddings actually replaced by old features (0 for non-mix methods).
    pub replaced: usize,
    /// Credible cached candidates present in the batch (0 when no cache).
    pub credible_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub batches: Vec<BatchRecord>,
    pub epoch_mean_loss: Vec<f64>,
}

impl RunLog {
    /// Writes the per-batch log as `epoch,batch,loss,replaced,credible_pool`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "epoch,batch,loss,replaced,credible_pool")?;
        for r in &self.batches {
            writeln!(w, "{},{},{},{},{}", r.epoch, r.batch, r.loss, r.replaced, r.credible_pool)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the old-feature cache for `split.new_train` and applies the
/// method's denoising policy: MixBCT with denoise=true excludes the farthest
/// per-class fraction, every other configuration keeps all rows credible.
pub fn prepare_cache(
    old_bb: &Backbone,
    ds: &LabeledDataset,
    split: &ScenarioSplit,
    method: MethodConfig,
) -> Result<Option<OldFeatureCache>> {
    if !method.needs_cache() {
        return Ok(None);
    }
    let cache = OldFeatureCache::build(old_bb, ds, &split.new_train)?;
    let cache = match method {
        MethodConfig::MixBCT { denoise: true, exclusion_fraction, .. } => {
            denoise(cache, exclusion_fraction)?
        }
        _ => cache,
    };
    Ok(Some(cache))
}

/// Trains the new model under `method`, building and denoising the cache
/// internally. See `train_compatible_with_cache` for the loop itself.
pub fn train_compatible(
    split: &ScenarioSplit,
    ds: &LabeledDataset,
    old_bb: &Backbone,
    new_bb: Backbone,
    new_cls: Classifier,
    method: MethodConfig,
    cfg: &TrainConfig,
) -> Result<(Backbone, Classifier, RunLog)> {
    let cache = prepare_cache(old_bb, ds, split, method)?;
    train_compatible_with_cache(split, ds, cache.as_ref(), new_bb, new_cls, method, cfg)
}

/// The Alg.-1-style loop over `split.new_train`: shuffle, embed, apply the
/// method's loss, step. `cache` must already reflect the caller's denoising
/// choice; it is required for every method except NoCompat.
pub fn train_compatible_with_cache(
    split: &ScenarioSplit,
    ds: &LabeledDataset,
    cache: Option<&OldFeatureCache>,
    new_bb: Backbone,
    new_cls: Classifier,
    method: MethodConfig,
    cfg: &TrainConfig,
) -> Result<(Backbone, Classifier, RunLog)> {
    cfg.validate()?;
    method.validate()?;
    if method.needs_cache() && cache.is_none() {
        return Err(Error::InvalidArgument(format!(
            "method {} requires an old-feature cache",
            method.name()
        )));
    }
    let indices = &split.new_train;
    let map = LabelMap::from_indices(ds, indices)?;
    if new_cls.num_classes() != map.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "classifier covers {} classes but the new-training side has {}",
            new_cls.num_classes(),
            map.num_classes()
        )));
    }
    if new_bb.in_dim() != ds.dim() || new_bb.embed_dim() != new_cls.embed_dim() {
        return Err(Error::InvalidArgument("backbone/classifier shape mismatch".into()));
    }
    if let Some(c) = cache {
        if c.embed_dim() != new_bb.embed_dim() {
            return Err(Error::InvalidArgument(format!(
                "cache dim {} != new embed dim {} (cross-scoring needs one space)",
                c.embed_dim(),
                new_bb.embed_dim()
            )));
        }
    }

    let protos: Option<PrototypeSet> = match method {
        MethodConfig::ProtoBCT { .. } => {
            Some(compute_prototypes(cache.expect("checked above"), false)?)
        }
        _ => None,
    };

    let mut bb = new_bb;
    let mut cls = new_cls;
    let mut state = SgdState::for_model(&bb, &cls);
    let total = crate::model::train_total_steps(indices.len(), cfg.batch_size, cfg.epochs);
    let mut step = 0usize;
    let mut log = RunLog::default();

    for epoch in 0..cfg.epochs {
        let mut order = indices.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let x = ds.gather(batch)?;
            let rows = map.rows_for(ds, batch)?;
            let (emb, fwd) = bb.forward_traced(&x.view())?;

            let (out, replaced, pool) = match method {
                MethodConfig::NoCompat => {
                    (classification_loss(&cls, &emb.view(), &rows)?, 0, 0)
                }
                MethodConfig::MixBCT { alpha, .. } => {
                    let c = cache.expect("checked above");
                    let mut mix_rng =
                        rng::stream(cfg.seed, &[tag::MIX, epoch as u64, batch_no as u64]);
                    let (mixed, replaced) = mix_batch(&emb.view(), batch, c, alpha, &mut mix_rng)?;
                    let out = mixbct_loss(&cls, &mixed.view(), &rows, &replaced)?;
                    (out, replaced.len(), credible_in_batch(batch, c))
                }
                MethodConfig::L2BCT { lambda } => {
                    let c = cache.expect("checked above");
                    let old = c.features_for(batch)?;
                    let out = l2bct_loss(&cls, &emb.view(), &old.view(), &rows, lambda)?;
                    (out, 0, credible_in_batch(batch, c))
                }
                MethodConfig::ProtoBCT { weight } => {
                    let c = cache.expect("checked above");
                    let orig: Vec<u32> = batch.iter().map(|&i| ds.label(i)).collect();
                    let out = proto_bct_loss(
                        &cls,
                        &emb.view(),
                        &rows,
                        &orig,
                        protos.as_ref().expect("built above"),
                        weight,
                    )?;
                    (out, 0, credible_in_batch(batch, c))
                }
            };

            let grads = bb.backward(&fwd, &out.grad_emb.view())?;
            let lr = lr_at(step, total, cfg.lr0)?;
            for (l, layer) in bb.layers_mut().iter_mut().enumerate() {
                let (gw, gb) = &grads.layers[l];
                sgd_step(&mut layer.weight, gw, lr, cfg.momentum, cfg.weight_decay, &mut state.weight_velocity[l])?;
                sgd_step(&mut layer.bias, gb, lr, cfg.momentum, cfg.weight_decay, &mut state.bias_velocity[l])?;
            }
            sgd_step(&mut cls.weights, &out.grad_weights, lr, cfg.momentum, cfg.weight_decay, &mut state.classifier_velocity)?;
            step += 1;
            loss_sum += out.loss * batch.len() as f64;
            log.batches.push(BatchRecord {
                epoch,
                batch: batch_no,
                loss: out.loss,
                replaced,
                credible_pool: pool,
            });
        }
        log.epoch_mean_loss.push(loss_sum / indices.len() as f64);
    }
    Ok((bb, cls, log))
}
