//! Labeled feature datasets: the synthetic generator standing in for a real
//! recognition corpus, upgrade-scenario splits, and persistence.

pub(crate) mod io;
mod split;

pub use io::{load_dataset, load_dataset_csv, save_dataset};
pub use split::{split_scenario, LabelMap, Scenario, ScenarioSplit};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// An immutable dataset of `len()` feature vectors with integer class labels.
///
/// Rows are stored class-major by the generator (all samples of class 0,
/// then class 1, ...), but nothing downstream relies on that layout: splits
/// and protocols always go through `indices_of_class`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<u32>,
    num_classes: u32,
    by_class: Vec<Vec<usize>>,
}

impl LabeledDataset {
    /// Builds a dataset from parts, validating every stored invariant:
    /// matching row counts, labels within range, finite features.
    pub fn new(features: Array2<f64>, labels: Vec<u32>, num_classes: u32) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "feature rows ({}) != label count ({})",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("feature dim must be >= 1".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        let mut by_class = vec![Vec::new(); num_classes as usize];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        Ok(Self { features, labels, num_classes, by_class })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Sample indices of class `c`, in dataset order.
    pub fn indices_of_class(&self, c: u32) -> &[usize] {
        &self.by_class[c as usize]
    }

    /// Gathers the rows named by `indices` into a dense batch matrix.
    pub fn gather(&self, indices: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            out.row_mut(r).assign(&self.features.row(i));
        }
        Ok(out)
    }
}

/// Draws `num_classes * per_class` samples: each class is an isotropic
/// Gaussian with standard deviation `within_std` around a class center
/// placed uniformly on the sphere of radius `center_radius`. Deterministic
/// in `seed`; samples are emitted class-major in draw order.
pub fn generate_synthetic(
    num_classes: u32,
    per_class: usize,
    dim: usize,
    center_radius: f64,
    within_std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if per_class < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples per class".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument("need dim >= 2".into()));
    }
    if !(within_std > 0.0) || !within_std.is_finite() {
        return Err(Error::InvalidArgument("within_std must be positive".into()));
    }
    if !(center_radius > 0.0) || !center_radius.is_finite() {
        return Err(Error::InvalidArgument("center_radius must be positive".into()));
    }

    let mut rng = crate::rng::stream(seed, &[crate::rng::tag::DATASET]);
    let mut centers = Array2::<f64>::zeros((num_classes as usize, dim));
    for mut row in centers.rows_mut() {
        // Normalized Gaussian direction; a vanishing norm is resampled so the
        // center always sits on the sphere.
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v * center_radius / norm);
                break;
            }
        }
    }

    let n = num_classes as usize * per_class;
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes as usize {
        for s in 0..per_class {
            let r = c * per_class + s;
            for (j, v) in features.row_mut(r).iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                *v = centers[(c, j)] + within_std * noise;
            }
            labels.push(c as u32);
        }
    }
    LabeledDataset::new(features, labels, num_classes)
}

/// Carves the last `eval_per_class` samples of every class out of `ds` into
/// a separate evaluation dataset, leaving the rest as the training dataset.
/// Both halves are repacked with fresh contiguous indices; classes and class
/// count carry over, so the evaluation set covers the same identities with
/// disjoint samples.
pub fn split_eval_tail(
    ds: &LabeledDataset,
    eval_per_class: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if eval_per_class == 0 {
        return Err(Error::InvalidArgument("eval_per_class must be positive".into()));
    }
    let mut train_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for c in 0..ds.num_classes() {
        let members = ds.indices_of_class(c);
        if members.len() < eval_per_class + 2 {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} samples; needs {} for the eval tail plus 2 to train on",
                members.len(),
                eval_per_class + 2
            )));
        }
        let cut = members.len() - eval_per_class;
        train_idx.extend_from_slice(&members[..cut]);
        eval_idx.extend_from_slice(&members[cut..]);
    }
    let repack = |indices: &[usize]| -> Result<LabeledDataset> {
        let features = ds.gather(indices)?;
        let labels = indices.iter().map(|&i| ds.label(i)).collect();
        LabeledDataset::new(features, labels, ds.num_classes())
    };
    Ok((repack(&train_idx)?, repack(&eval_idx)?))
}

/// Restricts `ds` to the classes in `keep`, relabeling them compactly to
/// `0..keep.len()` in the order given. Class ids in `keep` must be distinct
/// and present in `ds`.
pub fn filter_classes(ds: &LabeledDataset, keep: &[u32]) -> Result<LabeledDataset> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("class filter must keep at least one class".into()));
    }
    let mut relabel = std::collections::BTreeMap::new();
    for (row, &c) in keep.iter().enumerate() {
        if c >= ds.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "class {c} is out of range for a dataset with {} classes",
                ds.num_classes()
            )));
        }
        if relabel.insert(c, row as u32).is_some() {
            return Err(Error::InvalidArgument(format!("class {c} listed twice in the filter")));
        }
        if ds.indices_of_class(c).is_empty() {
            return Err(Error::InvalidArgument(format!("class {c} has no samples to keep")));
        }
    }
    let mut indices = Vec::new();
    for &c in keep {
        indices.extend_from_slice(ds.indices_of_class(c));
    }
    let features = ds.gather(&indices)?;
    let labels = indices.iter().map(|&i| relabel[&ds.label(i)]).collect();
    LabeledDataset::new(features, labels, keep.len() as u32)
}
