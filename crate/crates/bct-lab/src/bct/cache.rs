//! The frozen old-model feature cache: one row per new-training sample,
//! holding the feature the old backbone produced for it, its label, and a
//! credible flag maintained by the denoising pass.
//!
//! File layout (little-endian): magic "BCTF", version u32, row count u64,
//! embed_dim u32, then per row: dataset index u64, label u32, credible u8,
//! embed_dim f64 values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample as sample_indices;
use rand::seq::IndexedRandom;

use crate::data::io::{expect_eof, read_f64, read_magic, read_u32, read_u64, write_f64, write_u32, write_u64};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{extract_features, Backbone};
use crate::rng::Stream;

const CACHE_MAGIC: &[u8; 4] = b"BCTF";
const CACHE_VERSION: u32 = 1;

/// Per-row metadata; the feature itself lives in the cache's matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheRow {
    /// Index of the sample in the parent dataset.
    pub index: usize,
    pub label: u32,
    pub credible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OldFeatureCache {
    features: Array2<f64>,
    rows: Vec<CacheRow>,
    by_index: HashMap<usize, usize>,
}

impl OldFeatureCache {
    /// Runs the frozen old backbone over the samples at `indices` and caches
    /// the results; every row starts credible.
    pub fn build(old_bb: &Backbone, ds: &LabeledDataset, indices: &[usize]) -> Result<Self> {
        let features = extract_features(old_bb, ds, indices)?;
        let rows: Vec<CacheRow> = indices
            .iter()
            .map(|&i| CacheRow { index: i, label: ds.label(i), credible: true })
            .collect();
        Self::from_parts(features, rows)
    }

    pub fn from_parts(features: Array2<f64>, rows: Vec<CacheRow>) -> Result<Self> {
        if features.nrows() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "cache has {} feature rows but {} metadata rows",
                features.nrows(),
                rows.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("cache embed_dim must be positive".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("non-finite value in feature cache".into()));
        }
        let mut by_index = HashMap::with_capacity(rows.len());
        for (pos, row) in rows.iter().enumerate() {
            if by_index.insert(row.index, pos).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate dataset index {} in cache",
                    row.index
                )));
            }
        }
        Ok(Self { features, rows, by_index })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self) -> &[CacheRow] {
        &self.rows
    }

    pub fn feature(&self, pos: usize) -> ArrayView1<'_, f64> {
        self.features.row(pos)
    }

    /// Cache position of a parent-dataset index, if cached.
    pub fn position_of(&self, dataset_index: usize) -> Option<usize> {
        self.by_index.get(&dataset_index).copied()
    }

    pub fn credible_count(&self) -> usize {
        self.rows.iter().filter(|r| r.credible).count()
    }

    /// Distinct labels present, ascending.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.label).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Cache positions per class, in row order.
    pub fn positions_of_class(&self, label: u32) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(p, _)| p)
            .collect()
    }

    pub(crate) fn set_credible(&mut self, pos: usize, credible: bool) {
        self.rows[pos].credible = credible;
    }

    /// Gathers the cached features for a batch of dataset indices; errors if
    /// any index is uncached (the L2 baseline requires full coverage).
    pub fn features_for(&self, dataset_indices: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((dataset_indices.len(), self.embed_dim()));
        for (k, &i) in dataset_indices.iter().enumerate() {
            let pos = self.position_of(i).ok_or_else(|| {
                Error::InvalidArgument(format!("dataset index {i} has no cached old feature"))
            })?;
            out.row_mut(k).assign(&self.features.row(pos));
        }
        Ok(out)
    }

    /// Ablation knob simulating a noisier old model: per class, the features
    /// of ⌊fraction·n_c⌋ rows (drawn via `rng`) are overwritten with the
    /// pre-noise feature of a random row from a different class. Labels,
    /// indices, and credible flags are untouched; run denoising afterwards
    /// to react.
    pub fn inject_class_noise(&mut self, fraction: f64, rng: &mut Stream) -> Result<usize> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "noise fraction must lie in [0,1), got {fraction}"
            )));
        }
        // Donors come from a snapshot so corruption never launders a row's
        // original feature back into place through a corrupted donor.
        let originals = self.features.clone();
        let mut corrupted = 0usize;
        for label in self.class_ids() {
            let own = self.positions_of_class(label);
            let others: Vec<usize> = (0..self.len()).filter(|&p| self.rows[p].label != label).collect();
            if others.is_empty() {
                continue;
            }
            let k = (fraction * own.len() as f64).floor() as usize;
            if k == 0 {
                continue;
            }
            let victims = sample_indices(rng, own.len(), k);
            for v in victims.iter() {
                let donor = *others.as_slice().choose(rng).expect("non-empty donor pool");
                self.features.row_mut(own[v]).assign(&originals.row(donor));
                corrupted += 1;
            }
        }
        Ok(corrupted)
    }
}

pub fn save_cache(cache: &OldFeatureCache, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    write_u32(&mut w, CACHE_VERSION)?;
    write_u64(&mut w, cache.len() as u64)?;
    write_u32(&mut w, cache.embed_dim() as u32)?;
    for (pos, row) in cache.rows().iter().enumerate() {
        write_u64(&mut w, row.index as u64)?;
        write_u32(&mut w, row.label)?;
        w.write_all(&[row.credible as u8])?;
        for &v in cache.feature(pos) {
            write_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<OldFeatureCache> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, path, CACHE_MAGIC)?;
    let version = read_u32(&mut r, path, "version")?;
    if version != CACHE_VERSION {
        return Err(Error::corrupt(path, format!("unsupported cache version {version}")));
    }
    let n = read_u64(&mut r, path, "row count")? as usize;
    let dim = read_u32(&mut r, path, "embed_dim")? as usize;
    if dim == 0 {
        return Err(Error::corrupt(path, "zero embed_dim"));
    }
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let index = read_u64(&mut r, path, "dataset index")? as usize;
        let label = read_u32(&mut r, path, "label")?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)
            .map_err(|_| Error::corrupt(path, "truncated credible flag"))?;
        let credible = match flag[0] {
            0 => false,
            1 => true,
            other => return Err(Error::corrupt(path, format!("bad credible flag {other}"))),
        };
        for j in 0..dim {
            features[(k, j)] = read_f64(&mut r, path, "feature")?;
        }
        rows.push(CacheRow { index, label, credible });
    }
    expect_eof(&mut r, path)?;
    OldFeatureCache::from_parts(features, rows).map_err(|e| Error::corrupt(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::rng;

    fn sample_cache() -> OldFeatureCache {
        let ds = generate_synthetic(3, 6, 4, 3.0, 0.4, 21).unwrap();
        let mut r = rng::stream(9, &[rng::tag::OLD_INIT]);
        let bb = Backbone::init(&[4, 8, 5], &mut r).unwrap();
        let indices: Vec<usize> = (0..ds.len()).collect();
        OldFeatureCache::build(&bb, &ds, &indices).unwrap()
    }

    #[test]
    fn build_matches_direct_extraction_row_by_row() {
        let ds = generate_synthetic(3, 6, 4, 3.0, 0.4, 21).unwrap();
        let mut r = rng::stream(9, &[rng::tag::OLD_INIT]);
        let bb = Backbone::init(&[4, 8, 5], &mut r).unwrap();
        let indices = vec![4usize, 0, 17];
        let cache = OldFeatureCache::build(&bb, &ds, &indices).unwrap();
        let direct = extract_features(&bb, &ds, &indices).unwrap();
        for (k, &i) in indices.iter().enumerate() {
            assert_eq!(cache.position_of(i), Some(k));
            assert_eq!(cache.feature(k).to_vec(), direct.row(k).to_vec());
            assert_eq!(cache.rows()[k].label, ds.label(i));
            assert!(cache.rows()[k].credible, "fresh cache rows start credible");
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bctf");
        let mut cache = sample_cache();
        cache.set_credible(3, false);
        save_cache(&cache, &path).unwrap();
        let back = load_cache(&path).unwrap();
        assert_eq!(cache, back);
        let path2 = dir.path().join("c2.bctf");
        save_cache(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_cache_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bctf");
        save_cache(&sample_cache(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Z';
        let mut bad_flag = bytes.clone();
        // First row's credible flag sits after the 20-byte header, the 8-byte
        // index, and the 4-byte label.
        bad_flag[20 + 12] = 7;
        for (name, data) in [
            ("magic", bad_magic),
            ("trunc", bytes[..bytes.len() - 1].to_vec()),
            ("flag", bad_flag),
        ] {
            let p = dir.path().join(format!("{name}.bctf"));
            std::fs::write(&p, data).unwrap();
            assert_eq!(load_cache(&p).unwrap_err().exit_code(), 4, "{name}");
        }
    }

    #[test]
    fn missing_index_in_features_for_is_invalid_argument() {
        let cache = sample_cache();
        let err = cache.features_for(&[0, 9999]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn noise_injection_corrupts_the_expected_count_per_class() {
        let mut cache = sample_cache();
        let before = cache.features.clone();
        let mut r = rng::stream(17, &[rng::tag::CACHE_NOISE]);
        // 3 classes × 6 rows, fraction 0.34 → ⌊2.04⌋ = 2 per class.
        let corrupted = cache.inject_class_noise(0.34, &mut r).unwrap();
        assert_eq!(corrupted, 6);
        let changed = (0..cache.len())
            .filter(|&p| cache.feature(p).to_vec() != before.row(p).to_vec())
            .count();
        assert_eq!(changed, 6, "exactly the victims change");
        for row in cache.rows() {
            assert!(row.credible, "noise injection must not touch credible flags");
        }
    }
}
