//! The mixing step: before the classification loss sees a batch, a fixed
//! share of its new embeddings is swapped for the corresponding cached old
//! features, so one classifier is forced to organize both feature spaces at
//! once.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample as sample_indices;

use crate::bct::OldFeatureCache;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Replaces min(⌊alpha·B⌋, candidates) rows of `new_emb` with cached old
/// features, where candidates are the batch positions whose sample has a
/// credible cached row. Positions are drawn uniformly without replacement
/// from `rng`. Returns the mixed matrix and the sorted replaced positions.
/// Labels are the caller's business and are untouched by construction.
pub fn mix_batch(
    new_emb: &ArrayView2<f64>,
    batch_indices: &[usize],
    cache: &OldFeatureCache,
    alpha: f64,
    rng: &mut Stream,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0,1), got {alpha}")));
    }
    if new_emb.nrows() != batch_indices.len() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} embedding rows but {} indices",
            new_emb.nrows(),
            batch_indices.len()
        )));
    }
    if new_emb.ncols() != cache.embed_dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding dim {} != cache dim {}",
            new_emb.ncols(),
            cache.embed_dim()
        )));
    }

    let candidates: Vec<usize> = batch_indices
        .iter()
        .enumerate()
        .filter(|(_, &i)| cache.position_of(i).is_some_and(|p| cache.rows()[p].credible))
        .map(|(pos, _)| pos)
        .collect();

    let target = (alpha * new_emb.nrows() as f64).floor() as usize;
    let take = target.min(candidates.len());

    let mut replaced: Vec<usize> = sample_indices(rng, candidates.len(), take)
        .iter()
        .map(|k| candidates[k])
        .collect();
    replaced.sort_unstable();

    let mut mixed = new_emb.to_owned();
    for &pos in &replaced {
        let cache_pos = cache
            .position_of(batch_indices[pos])
            .expect("candidate positions resolve in the cache");
        mixed.row_mut(pos).assign(&cache.feature(cache_pos));
    }
    Ok((mixed, replaced))
}

/// In-batch credible candidate count, as recorded in run logs.
pub fn credible_in_batch(batch_indices: &[usize], cache: &OldFeatureCache) -> usize {
    batch_indices
        .iter()
        .filter(|&&i| cache.position_of(i).is_some_and(|p| cache.rows()[p].credible))
        .count()
}
