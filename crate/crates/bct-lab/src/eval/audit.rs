//! Monte-Carlo audit of the four pairwise compatibility constraints.
//!
//! Each trial draws an anchor, a positive from the same class and a negative
//! from a different class, then checks whether the anchor (always embedded
//! by the new model) sits closer to the positive than to the negative under
//! the four old/new feature pairings. The per-constraint rates estimate how
//! often compatibility holds on random triplets; a rate of 0.5 is chance.

use ndarray::ArrayView2;
use rand::seq::IndexedRandom;

use crate::error::{Error, Result};
use crate::eval::metrics::similarity;
use crate::rng::Stream;

/// Fraction of trials satisfying each constraint, in [0, 1].
///
/// All four compare distances from the new-model anchor: `both_new` uses
/// new positive and negative, `old_negative` swaps in the old negative,
/// `old_positive` swaps in the old positive, and `both_old` swaps in both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRates {
    pub both_new: f64,
    pub old_negative: f64,
    pub old_positive: f64,
    pub both_old: f64,
}

impl ConstraintRates {
    /// Stable (label, rate) view for reports, in constraint order.
    pub fn labeled(&self) -> [(&'static str, f64); 4] {
        [
            ("both_new", self.both_new),
            ("old_negative", self.old_negative),
            ("old_positive", self.old_positive),
            ("both_old", self.both_old),
        ]
    }
}

fn closer(
    anchor: &ndarray::ArrayView1<f64>,
    positive: &ndarray::ArrayView1<f64>,
    negative: &ndarray::ArrayView1<f64>,
) -> Result<bool> {
    // d ≡ 1 − similarity, so "closer" is strictly larger similarity.
    Ok(similarity(anchor, positive)? > similarity(anchor, negative)?)
}

/// Estimates the four constraint-satisfaction rates over `trials` random
/// triplets. `new_feats` and `old_feats` are row-aligned embeddings of the
/// same samples; `labels[i]` is sample i's class.
pub fn audit_constraints(
    new_feats: &ArrayView2<f64>,
    old_feats: &ArrayView2<f64>,
    labels: &[u32],
    trials: usize,
    rng: &mut Stream,
) -> Result<ConstraintRates> {
    let n = labels.len();
    if new_feats.nrows() != n || old_feats.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "feature rows ({} new, {} old) must match {} labels",
            new_feats.nrows(),
            old_feats.nrows(),
            n
        )));
    }
    if new_feats.ncols() != old_feats.ncols() {
        return Err(Error::InvalidArgument(format!(
            "embedding widths differ: {} new vs {} old",
            new_feats.ncols(),
            old_feats.ncols()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("audit needs at least one trial".into()));
    }

    // An anchor needs a same-class partner; a negative needs any other class.
    let mut class_counts = std::collections::HashMap::<u32, usize>::new();
    for &l in labels {
        *class_counts.entry(l).or_insert(0) += 1;
    }
    let anchorable: Vec<usize> =
        (0..n).filter(|&i| class_counts[&labels[i]] >= 2).collect();
    if anchorable.is_empty() {
        return Err(Error::InvalidArgument(
            "no class has two samples; nothing can anchor a triplet".into(),
        ));
    }
    if class_counts.len() < 2 {
        return Err(Error::InvalidArgument(
            "audit needs at least two classes to draw negatives".into(),
        ));
    }

    let mut hits = [0usize; 4];
    for _ in 0..trials {
        let &x = anchorable.as_slice().choose(rng).expect("anchorable is non-empty");
        let positives: Vec<usize> =
            (0..n).filter(|&i| i != x && labels[i] == labels[x]).collect();
        let &p = positives.as_slice().choose(rng).expect("anchor class has a partner");
        let negatives: Vec<usize> = (0..n).filter(|&i| labels[i] != labels[x]).collect();
        let &neg = negatives.as_slice().choose(rng).expect("a second class exists");

        let anchor = new_feats.row(x);
        let cases = [
            (new_feats.row(p), new_feats.row(neg)),
            (new_feats.row(p), old_feats.row(neg)),
            (old_feats.row(p), new_feats.row(neg)),
            (old_feats.row(p), old_feats.row(neg)),
        ];
        for (k, (pos, negv)) in cases.iter().enumerate() {
            if closer(&anchor, pos, negv)? {
                hits[k] += 1;
            }
        }
    }
    let t = trials as f64;
    Ok(ConstraintRates {
        both_new: hits[0] as f64 / t,
        old_negative: hits[1] as f64 / t,
        old_positive: hits[2] as f64 / t,
        both_old: hits[3] as f64 / t,
    })
}
