//! Old-class prototypes: unit-length class centers of cached old features,
//! used by the prototype-alignment baseline as fixed classification targets.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::bct::OldFeatureCache;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    class_ids: Vec<u32>,
    /// One unit-norm row per entry of `class_ids`.
    centers: Array2<f64>,
    /// Classes that could not produce a prototype (no usable rows, or a
    /// degenerate zero mean), kept as a warning record.
    excluded: Vec<u32>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn excluded(&self) -> &[u32] {
        &self.excluded
    }

    /// Row of the prototype for `label`, if one was computed.
    pub fn row_for_label(&self, label: u32) -> Option<usize> {
        self.class_ids.binary_search(&label).ok()
    }
}

/// Averages each class's (optionally credible-only) features in the
/// unit-normalized space and renormalizes the mean. Zero-norm features are
/// skipped; classes with no usable rows or a vanishing mean are excluded and
/// recorded rather than erroring.
pub fn compute_prototypes(cache: &OldFeatureCache, credible_only: bool) -> Result<PrototypeSet> {
    if cache.is_empty() {
        return Err(Error::InvalidArgument("cannot compute prototypes from an empty cache".into()));
    }
    let dim = cache.embed_dim();
    let mut centers: BTreeMap<u32, Array1<f64>> = BTreeMap::new();
    let mut excluded = Vec::new();

    for label in cache.class_ids() {
        let mut sum = Array1::<f64>::zeros(dim);
        let mut used = 0usize;
        for p in cache.positions_of_class(label) {
            if credible_only && !cache.rows()[p].credible {
                continue;
            }
            let row = cache.feature(p);
            let norm = row.dot(&row).sqrt();
            if norm < 1e-12 {
                continue;
            }
            sum.zip_mut_with(&row, |s, &v| *s += v / norm);
            used += 1;
        }
        if used == 0 {
            excluded.push(label);
            continue;
        }
        let mean = sum / used as f64;
        let mean_norm = mean.dot(&mean).sqrt();
        if mean_norm < 1e-12 {
            excluded.push(label);
            continue;
        }
        centers.insert(label, mean / mean_norm);
    }

    let class_ids: Vec<u32> = centers.keys().copied().collect();
    let mut matrix = Array2::<f64>::zeros((class_ids.len(), dim));
    for (k, label) in class_ids.iter().enumerate() {
        matrix.row_mut(k).assign(&centers[label]);
    }
    Ok(PrototypeSet { class_ids, centers: matrix, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bct::CacheRow;

    fn cache_from(rows: Vec<(usize, u32, bool, Vec<f64>)>) -> OldFeatureCache {
        let dim = rows[0].3.len();
        let mut features = Array2::<f64>::zeros((rows.len(), dim));
        let mut meta = Vec::new();
        for (k, (index, label, credible, feat)) in rows.into_iter().enumerate() {
            features.row_mut(k).assign(&Array1::from_vec(feat));
            meta.push(CacheRow { index, label, credible });
        }
        OldFeatureCache::from_parts(features, meta).unwrap()
    }

    #[test]
    fn single_feature_prototype_is_its_direction() {
        let protos = compute_prototypes(
            &cache_from(vec![(0, 0, true, vec![3.0, 4.0]), (1, 1, true, vec![0.0, 2.0])]),
            true,
        )
        .unwrap();
        assert_eq!(protos.class_ids(), &[0, 1]);
        let c0 = protos.centers().row(0);
        assert!((c0[0] - 0.6).abs() < 1e-15 && (c0[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn antipodal_pair_excludes_the_class_with_a_record() {
        let protos = compute_prototypes(
            &cache_from(vec![
                (0, 0, true, vec![1.0, 0.0]),
                (1, 0, true, vec![-1.0, 0.0]),
                (2, 1, true, vec![0.0, 1.0]),
            ]),
            true,
        )
        .unwrap();
        assert_eq!(protos.class_ids(), &[1]);
        assert_eq!(protos.excluded(), &[0]);
        assert_eq!(protos.row_for_label(0), None);
        assert_eq!(protos.row_for_label(1), Some(0));
    }

    #[test]
    fn credible_only_ignores_non_credible_rows() {
        let cache = cache_from(vec![
            (0, 0, true, vec![1.0, 0.0]),
            (1, 0, false, vec![-100.0, 0.0]),
        ]);
        let strict = compute_prototypes(&cache, true).unwrap();
        assert!((strict.centers().row(0)[0] - 1.0).abs() < 1e-15);
        let lax = compute_prototypes(&cache, false).unwrap();
        assert_eq!(lax.class_ids(), &[] as &[u32], "antipodal directions cancel");
        assert_eq!(lax.excluded(), &[0]);
    }

    #[test]
    fn matches_naive_per_class_mean() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream(303, &[]);
        let mut rows = Vec::new();
        for c in 0..3u32 {
            for k in 0..5 {
                let feat: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                rows.push((c as usize * 5 + k, c, true, feat));
            }
        }
        let protos = compute_prototypes(&cache_from(rows.clone()), true).unwrap();
        for c in 0..3u32 {
            let mut mean = vec![0.0f64; 4];
            for (_, label, _, feat) in rows.iter().filter(|r| r.1 == c) {
                assert_eq!(*label, c);
                let norm = feat.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (m, v) in mean.iter_mut().zip(feat) {
                    *m += v / norm / 5.0;
                }
            }
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            let row = protos.centers().row(protos.row_for_label(c).unwrap());
            for (a, b) in row.iter().zip(&mean) {
                assert!((a - b / norm).abs() < 1e-12, "class {c}");
            }
        }
    }
}
