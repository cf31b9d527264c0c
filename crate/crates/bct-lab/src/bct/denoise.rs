//! Distance-based denoising of the old-feature cache: per class, the rows
//! farthest (in the unit-normalized space) from their class center lose
//! their credible flag and are never substituted into a training batch.

use ndarray::Array1;

use crate::bct::OldFeatureCache;
use crate::error::{Error, Result};

/// Recomputes every credible flag. Per class with n_c rows, exactly
/// ⌊exclusion_fraction·n_c⌋ rows are marked non-credible: those with the
/// largest Euclidean distance between their unit-normalized feature and the
/// class center of unit-normalized features. Distance ties are broken by
/// excluding the row with the lower dataset index first. Stored features are
/// left untouched; normalization happens only inside this computation.
/// Zero-norm features cannot be normalized: they are left out of the center
/// and sort as infinitely far.
pub fn denoise(mut cache: OldFeatureCache, exclusion_fraction: f64) -> Result<OldFeatureCache> {
    if !(0.0..1.0).contains(&exclusion_fraction) {
        return Err(Error::InvalidArgument(format!(
            "exclusion fraction must lie in [0,1), got {exclusion_fraction}"
        )));
    }
    for label in cache.class_ids() {
        let positions = cache.positions_of_class(label);
        let n = positions.len();
        let dim = cache.embed_dim();

        let normalized: Vec<Option<Array1<f64>>> = positions
            .iter()
            .map(|&p| {
                let row = cache.feature(p);
                let norm = row.dot(&row).sqrt();
                (norm >= 1e-12).then(|| row.mapv(|v| v / norm))
            })
            .collect();

        let mut center = Array1::<f64>::zeros(dim);
        let usable = normalized.iter().flatten().count();
        if usable > 0 {
            for row in normalized.iter().flatten() {
                center += row;
            }
            center /= usable as f64;
        }

        let mut order: Vec<(f64, usize, usize)> = positions
            .iter()
            .zip(&normalized)
            .map(|(&p, maybe_row)| {
                let dist = match maybe_row {
                    Some(row) => {
                        let diff = row - &center;
                        diff.dot(&diff).sqrt()
                    }
                    None => f64::INFINITY,
                };
                (dist, cache.rows()[p].index, p)
            })
            .collect();
        // Farthest first; equal distances fall back to the lower dataset
        // index so the exclusion set is deterministic.
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("distances are comparable").then(a.1.cmp(&b.1)));

        let excluded = (exclusion_fraction * n as f64).floor() as usize;
        for (k, &(_, _, p)) in order.iter().enumerate() {
            cache.set_credible(p, k >= excluded);
        }
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bct::CacheRow;
    use ndarray::Array2;

    fn cache_from(rows: Vec<(usize, u32, Vec<f64>)>) -> OldFeatureCache {
        let dim = rows[0].2.len();
        let mut features = Array2::<f64>::zeros((rows.len(), dim));
        let mut meta = Vec::new();
        for (k, (index, label, feat)) in rows.into_iter().enumerate() {
            features.row_mut(k).assign(&Array1::from_vec(feat));
            meta.push(CacheRow { index, label, credible: false });
        }
        OldFeatureCache::from_parts(features, meta).unwrap()
    }

    #[test]
    fn fraction_zero_marks_everything_credible() {
        let cache = cache_from(vec![
            (0, 0, vec![1.0, 0.0]),
            (1, 0, vec![0.0, 1.0]),
            (2, 1, vec![-1.0, 0.0]),
        ]);
        let out = denoise(cache, 0.0).unwrap();
        assert!(out.rows().iter().all(|r| r.credible));
    }

    #[test]
    fn single_far_outlier_is_the_excluded_row() {
        // Nine coincident unit vectors and one pointing the other way.
        let mut rows: Vec<(usize, u32, Vec<f64>)> =
            (0..9).map(|i| (i, 0u32, vec![2.0, 0.0])).collect();
        rows.push((9, 0, vec![-5.0, 0.1]));
        let out = denoise(cache_from(rows), 0.1).unwrap();
        for row in out.rows() {
            assert_eq!(row.credible, row.index != 9, "row {}", row.index);
        }
    }

    #[test]
    fn exclusion_is_per_class_and_scale_invariant() {
        // Class 0: rows scaled differently but same direction except one
        // orthogonal outlier. Class 1: all clean. fraction 0.25 → 1 exclusion
        // in the 4-row class, 0 in the 3-row class (⌊0.75⌋).
        let out = denoise(
            cache_from(vec![
                (0, 0, vec![1.0, 0.0]),
                (1, 0, vec![100.0, 0.0]),
                (2, 0, vec![0.01, 0.0]),
                (3, 0, vec![0.0, 1.0]),
                (4, 1, vec![0.0, -1.0]),
                (5, 1, vec![0.0, -2.0]),
                (6, 1, vec![0.0, -3.0]),
            ]),
            0.25,
        )
        .unwrap();
        for row in out.rows() {
            assert_eq!(row.credible, row.index != 3, "row {}", row.index);
        }
    }

    #[test]
    fn distance_ties_exclude_lower_dataset_indices_first() {
        // All four rows coincide, so every distance is zero; fraction 0.5
        // must drop exactly indices 10 and 11.
        let out = denoise(
            cache_from(vec![
                (12, 0, vec![1.0, 1.0]),
                (10, 0, vec![1.0, 1.0]),
                (13, 0, vec![1.0, 1.0]),
                (11, 0, vec![1.0, 1.0]),
            ]),
            0.5,
        )
        .unwrap();
        for row in out.rows() {
            assert_eq!(row.credible, row.index >= 12, "row {}", row.index);
        }
    }

    #[test]
    fn zero_norm_rows_are_excluded_first() {
        let out = denoise(
            cache_from(vec![
                (0, 0, vec![0.0, 0.0]),
                (1, 0, vec![1.0, 0.0]),
                (2, 0, vec![1.0, 0.1]),
                (3, 0, vec![1.0, -0.1]),
            ]),
            0.25,
        )
        .unwrap();
        for row in out.rows() {
            assert_eq!(row.credible, row.index != 0, "row {}", row.index);
        }
    }

    #[test]
    fn out_of_range_fractions_are_rejected() {
        let cache = cache_from(vec![(0, 0, vec![1.0]), (1, 0, vec![2.0])]);
        assert!(denoise(cache.clone(), -0.1).is_err());
        assert!(denoise(cache, 1.0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_caches() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream(5150, &[]);
        for trial in 0..20 {
            let classes = rng.random_range(2..6u32);
            let dim = rng.random_range(2..5usize);
            let mut rows = Vec::new();
            let mut idx = 0usize;
            for c in 0..classes {
                let n = rng.random_range(1..30usize);
                for _ in 0..n {
                    let feat: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    rows.push((idx, c, feat));
                    idx += 1;
                }
            }
            let fraction = rng.random_range(0.0..0.5);
            let cache = cache_from(rows.clone());
            let out = denoise(cache, fraction).unwrap();

            // Straight-line oracle: recompute normalized centers and sorted
            // distances per class with plain Vec arithmetic.
            for c in 0..classes {
                let class_rows: Vec<&(usize, u32, Vec<f64>)> =
                    rows.iter().filter(|r| r.1 == c).collect();
                let n = class_rows.len();
                let normed: Vec<Vec<f64>> = class_rows
                    .iter()
                    .map(|r| {
                        let norm = r.2.iter().map(|v| v * v).sum::<f64>().sqrt();
                        r.2.iter().map(|v| v / norm).collect()
                    })
                    .collect();
                let center: Vec<f64> = (0..dim)
                    .map(|j| normed.iter().map(|row| row[j]).sum::<f64>() / n as f64)
                    .collect();
                let mut scored: Vec<(f64, usize)> = normed
                    .iter()
                    .zip(class_rows.iter())
                    .map(|(row, r)| {
                        let d = row
                            .iter()
                            .zip(&center)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        (d, r.0)
                    })
                    .collect();
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let k = (fraction * n as f64).floor() as usize;
                let expect_bad: std::collections::BTreeSet<usize> =
                    scored[..k].iter().map(|s| s.1).collect();
                for row in out.rows().iter().filter(|r| r.label == c) {
                    assert_eq!(
                        row.credible,
                        !expect_bad.contains(&row.index),
                        "trial {trial} class {c} row {}",
                        row.index
                    );
                }
            }
        }
    }
}
