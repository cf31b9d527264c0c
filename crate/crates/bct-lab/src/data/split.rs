//! Upgrade-scenario splits: which samples the old model trains on versus the
//! new model, under the four data/class extension regimes.

use std::collections::BTreeMap;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// The four upgrade scenarios. "Extended" scenarios let the new model see the
/// old model's training data; "Open" scenarios keep the two sides disjoint
/// (in samples for OpenData, in whole classes for OpenClass).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    ExtendedData,
    ExtendedClass,
    OpenData,
    OpenClass,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ExtendedData => "extended_data",
            Scenario::ExtendedClass => "extended_class",
            Scenario::OpenData => "open_data",
            Scenario::OpenClass => "open_class",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "extended_data" => Ok(Scenario::ExtendedData),
            "extended_class" => Ok(Scenario::ExtendedClass),
            "open_data" => Ok(Scenario::OpenData),
            "open_class" => Ok(Scenario::OpenClass),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected extended_data | extended_class | open_data | open_class)"
            ))),
        }
    }
}

/// Index lists for the two training sides. Both lists are sorted, duplicate
/// free, and in range for the parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSplit {
    pub scenario: Scenario,
    pub fraction: f64,
    pub old_train: Vec<usize>,
    pub new_train: Vec<usize>,
}

fn validate_fraction(fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "fraction must lie in (0,1), got {fraction}"
        )));
    }
    Ok(fraction)
}

/// Ceiling of `fraction * n`, used for the old side so a selected class never
/// contributes zero samples.
fn ceil_frac(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).ceil() as usize).min(n)
}

/// Partitions `ds` for one upgrade scenario. "First" always means lowest
/// class ids and lowest within-class sample indices; old-side counts round up.
pub fn split_scenario(ds: &LabeledDataset, scenario: Scenario, fraction: f64) -> Result<ScenarioSplit> {
    let fraction = validate_fraction(fraction)?;
    for c in 0..ds.num_classes() {
        if ds.indices_of_class(c).len() < 2 {
            return Err(Error::InvalidSplit(format!("class {c} has fewer than 2 samples")));
        }
    }

    let all: Vec<usize> = (0..ds.len()).collect();
    let num_classes = ds.num_classes() as usize;

    let per_class_head = || -> Vec<usize> {
        let mut old = Vec::new();
        for c in 0..ds.num_classes() {
            let idx = ds.indices_of_class(c);
            old.extend_from_slice(&idx[..ceil_frac(fraction, idx.len())]);
        }
        old.sort_unstable();
        old
    };

    let (old_train, new_train) = match scenario {
        Scenario::ExtendedData => (per_class_head(), all),
        Scenario::ExtendedClass => {
            let cut = ceil_frac(fraction, num_classes) as u32;
            let mut old = Vec::new();
            for c in 0..cut {
                old.extend_from_slice(ds.indices_of_class(c));
            }
            old.sort_unstable();
            (old, all)
        }
        Scenario::OpenData => {
            let old = per_class_head();
            for c in 0..ds.num_classes() {
                let n = ds.indices_of_class(c).len();
                if ceil_frac(fraction, n) >= n {
                    return Err(Error::InvalidSplit(format!(
                        "class {c}: {n} samples leave no new-side remainder at fraction {fraction}"
                    )));
                }
            }
            let in_old: std::collections::HashSet<usize> = old.iter().copied().collect();
            let new: Vec<usize> = all.iter().copied().filter(|i| !in_old.contains(i)).collect();
            (old, new)
        }
        Scenario::OpenClass => {
            let cut = ceil_frac(fraction, num_classes) as u32;
            if cut as usize >= num_classes {
                return Err(Error::InvalidSplit(format!(
                    "fraction {fraction} leaves no new-side classes out of {num_classes}"
                )));
            }
            let mut old = Vec::new();
            for c in 0..cut {
                old.extend_from_slice(ds.indices_of_class(c));
            }
            let mut new = Vec::new();
            for c in cut..ds.num_classes() {
                new.extend_from_slice(ds.indices_of_class(c));
            }
            old.sort_unstable();
            new.sort_unstable();
            (old, new)
        }
    };

    Ok(ScenarioSplit { scenario, fraction, old_train, new_train })
}

/// Maps the (possibly sparse) label universe of a training side onto the
/// contiguous range a classifier expects.
#[derive(Debug, Clone)]
pub struct LabelMap {
    class_ids: Vec<u32>,
    forward: BTreeMap<u32, usize>,
}

impl LabelMap {
    /// Builds the map over the labels occurring at `indices`.
    pub fn from_indices(ds: &LabeledDataset, indices: &[usize]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &i in indices {
            if i >= ds.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            seen.insert(ds.label(i));
        }
        let class_ids: Vec<u32> = seen.into_iter().collect();
        if class_ids.len() < 2 {
            return Err(Error::InvalidArgument(
                "a training side needs at least 2 classes".into(),
            ));
        }
        let forward = class_ids.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        Ok(Self { class_ids, forward })
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Original class ids in classifier-row order.
    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn to_row(&self, label: u32) -> Option<usize> {
        self.forward.get(&label).copied()
    }

    /// Remaps all labels at `indices`; errors if any label is unmapped.
    pub fn rows_for(&self, ds: &LabeledDataset, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                self.to_row(ds.label(i)).ok_or_else(|| {
                    Error::InvalidArgument(format!("label {} not in label map", ds.label(i)))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn ds_10x10() -> LabeledDataset {
        generate_synthetic(10, 10, 4, 10.0, 1.0, 3).unwrap()
    }

    #[test]
    fn extended_class_keeps_head_classes_for_old_side() {
        let ds = ds_10x10();
        let s = split_scenario(&ds, Scenario::ExtendedClass, 0.3).unwrap();
        assert_eq!(s.old_train.len(), 30);
        assert_eq!(s.new_train.len(), 100);
        let old_labels: std::collections::BTreeSet<u32> =
            s.old_train.iter().map(|&i| ds.label(i)).collect();
        assert_eq!(old_labels, [0u32, 1, 2].into_iter().collect());
    }

    #[test]
    fn open_data_sides_are_disjoint_per_class() {
        let ds = ds_10x10();
        let s = split_scenario(&ds, Scenario::OpenData, 0.3).unwrap();
        assert_eq!(s.old_train.len(), 30);
        assert_eq!(s.new_train.len(), 70);
        let old: std::collections::BTreeSet<usize> = s.old_train.iter().copied().collect();
        assert!(s.new_train.iter().all(|i| !old.contains(i)));
        for c in 0..10 {
            let in_old = s.old_train.iter().filter(|&&i| ds.label(i) == c).count();
            let in_new = s.new_train.iter().filter(|&&i| ds.label(i) == c).count();
            assert_eq!((in_old, in_new), (3, 7), "class {c}");
        }
    }

    #[test]
    fn open_class_label_sets_are_disjoint() {
        let ds = ds_10x10();
        let s = split_scenario(&ds, Scenario::OpenClass, 0.3).unwrap();
        let old_labels: std::collections::BTreeSet<u32> =
            s.old_train.iter().map(|&i| ds.label(i)).collect();
        let new_labels: std::collections::BTreeSet<u32> =
            s.new_train.iter().map(|&i| ds.label(i)).collect();
        assert_eq!(old_labels, (0..3).collect());
        assert_eq!(new_labels, (3..10).collect());
        assert!(old_labels.is_disjoint(&new_labels));
    }

    #[test]
    fn splits_are_pure_functions() {
        let ds = ds_10x10();
        for sc in [
            Scenario::ExtendedData,
            Scenario::ExtendedClass,
            Scenario::OpenData,
            Scenario::OpenClass,
        ] {
            let a = split_scenario(&ds, sc, 0.3).unwrap();
            let b = split_scenario(&ds, sc, 0.3).unwrap();
            assert_eq!(a, b);
            for list in [&a.old_train, &a.new_train] {
                assert!(!list.is_empty());
                assert!(list.windows(2).all(|w| w[0] < w[1]), "sorted + duplicate free");
                assert!(list.iter().all(|&i| i < ds.len()));
            }
        }
    }

    #[test]
    fn impossible_splits_are_rejected() {
        let ds = ds_10x10();
        assert!(split_scenario(&ds, Scenario::OpenData, 0.99).is_err());
        assert!(split_scenario(&ds, Scenario::OpenClass, 0.95).is_err());
        assert!(split_scenario(&ds, Scenario::ExtendedData, 0.0).is_err());
        assert!(split_scenario(&ds, Scenario::ExtendedData, 1.0).is_err());
    }

    #[test]
    fn label_map_is_contiguous_and_ordered() {
        let ds = ds_10x10();
        let s = split_scenario(&ds, Scenario::OpenClass, 0.3).unwrap();
        let map = LabelMap::from_indices(&ds, &s.new_train).unwrap();
        assert_eq!(map.num_classes(), 7);
        assert_eq!(map.class_ids(), &[3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(map.to_row(3), Some(0));
        assert_eq!(map.to_row(9), Some(6));
        assert_eq!(map.to_row(0), None);
    }
}
