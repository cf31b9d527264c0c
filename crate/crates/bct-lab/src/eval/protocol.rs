//! Evaluation protocol construction: seeded, deterministic selection of
//! verification pairs and an open-set identification gallery/query split.
//!
//! Layout per class: the holdout is the final `ceil(holdout_fraction · n_c)`
//! samples in dataset index order; the first half of the holdout forms the
//! gallery template members, the rest become single-sample queries. A
//! seeded choice of distractor classes is dropped from the gallery entirely,
//! turning their queries into out-of-gallery probes.

use rand::seq::{index::sample as sample_indices, IndexedRandom};
use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// One 1:1 verification trial between two dataset indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerificationPair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

/// One gallery identity and the holdout samples pooled into its template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GalleryEntry {
    pub class_id: u32,
    pub member_indices: Vec<usize>,
}

/// One single-sample identification probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryEntry {
    pub index: usize,
    pub label: u32,
    pub in_gallery: bool,
}

/// A frozen evaluation protocol; building it consumes randomness once, so
/// every later scoring pass sees the same trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub pairs: Vec<VerificationPair>,
    pub gallery: Vec<GalleryEntry>,
    pub queries: Vec<QueryEntry>,
}

impl EvalProtocol {
    pub fn gallery_class_ids(&self) -> Vec<u32> {
        self.gallery.iter().map(|g| g.class_id).collect()
    }

    pub fn genuine_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.genuine).count()
    }

    pub fn impostor_count(&self) -> usize {
        self.pairs.len() - self.genuine_count()
    }

    pub fn out_of_gallery_count(&self) -> usize {
        self.queries.iter().filter(|q| !q.in_gallery).count()
    }
}

/// Builds the evaluation protocol over `ds`.
///
/// `holdout_fraction` ∈ (0, 1] picks the per-class tail reserved for
/// evaluation (pass 1.0 when `ds` is a dedicated evaluation set);
/// `distractor_fraction` ∈ [0, 1) removes that share of classes from the
/// gallery; `pairs_per_class` genuine and as many impostor pairs are drawn
/// per class from a stream derived from `seed`.
pub fn build_eval_protocol(
    ds: &LabeledDataset,
    holdout_fraction: f64,
    distractor_fraction: f64,
    pairs_per_class: usize,
    seed: u64,
) -> Result<EvalProtocol> {
    if !(holdout_fraction > 0.0 && holdout_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout_fraction must lie in (0,1], got {holdout_fraction}"
        )));
    }
    if !(0.0..1.0).contains(&distractor_fraction) {
        return Err(Error::InvalidArgument(format!(
            "distractor_fraction must lie in [0,1), got {distractor_fraction}"
        )));
    }
    if pairs_per_class == 0 {
        return Err(Error::InvalidArgument("pairs_per_class must be positive".into()));
    }
    if ds.num_classes() < 2 {
        return Err(Error::InvalidArgument(
            "impostor pairs need at least two classes".into(),
        ));
    }

    let class_ids: Vec<u32> = (0..ds.num_classes()).collect();
    let mut holdout: Vec<(u32, Vec<usize>)> = Vec::with_capacity(class_ids.len());
    for &c in &class_ids {
        let members = ds.indices_of_class(c);
        let take = ((holdout_fraction * members.len() as f64).ceil() as usize).min(members.len());
        let tail = members[members.len() - take..].to_vec();
        if tail.len() < 2 {
            return Err(Error::InvalidProtocol(format!(
                "class {c} holds out {} sample(s); need at least 2 for genuine pairs and queries",
                tail.len()
            )));
        }
        holdout.push((c, tail));
    }

    let mut rng = stream(seed, &[tag::PROTOCOL]);

    // Distractor selection first so pair sampling is unaffected by it only
    // through the stream position, which is fixed by the class count.
    let num_distractors =
        (distractor_fraction * class_ids.len() as f64).floor() as usize;
    let mut distractors: Vec<u32> = sample_indices(&mut rng, class_ids.len(), num_distractors)
        .iter()
        .map(|i| class_ids[i])
        .collect();
    distractors.sort_unstable();

    let mut pairs = Vec::with_capacity(2 * pairs_per_class * holdout.len());
    for (c, tail) in &holdout {
        for _ in 0..pairs_per_class {
            let picked = sample_indices(&mut rng, tail.len(), 2);
            pairs.push(VerificationPair {
                a: tail[picked.index(0)],
                b: tail[picked.index(1)],
                genuine: true,
            });
        }
        let other_classes: Vec<u32> = class_ids.iter().copied().filter(|o| o != c).collect();
        for _ in 0..pairs_per_class {
            let a = tail[rng.random_range(0..tail.len())];
            let other = *other_classes
                .as_slice()
                .choose(&mut rng)
                .expect("at least one other class exists");
            let other_tail = &holdout[other as usize].1;
            let b = other_tail[rng.random_range(0..other_tail.len())];
            pairs.push(VerificationPair { a, b, genuine: false });
        }
    }

    let mut gallery = Vec::new();
    let mut queries = Vec::new();
    for (c, tail) in &holdout {
        let member_count = tail.len().div_ceil(2);
        let in_gallery = distractors.binary_search(c).is_err();
        if in_gallery {
            gallery.push(GalleryEntry {
                class_id: *c,
                member_indices: tail[..member_count].to_vec(),
            });
        }
        for &index in &tail[member_count..] {
            queries.push(QueryEntry { index, label: *c, in_gallery });
        }
    }
    if gallery.is_empty() {
        return Err(Error::InvalidProtocol("every class was removed as a distractor".into()));
    }

    Ok(EvalProtocol { pairs, gallery, queries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn fixture() -> LabeledDataset {
        generate_synthetic(10, 6, 4, 5.0, 0.4, 31).expect("synthetic dataset")
    }

    #[test]
    fn zero_distractor_fraction_keeps_every_query_mated() {
        let ds = fixture();
        let p = build_eval_protocol(&ds, 1.0, 0.0, 3, 7).unwrap();
        assert_eq!(p.gallery.len(), 10);
        assert!(p.queries.iter().all(|q| q.in_gallery));
        assert_eq!(p.out_of_gallery_count(), 0);
    }

    #[test]
    fn distractor_share_removes_whole_classes() {
        let ds = fixture();
        let p = build_eval_protocol(&ds, 1.0, 0.2, 3, 7).unwrap();
        assert_eq!(p.gallery.len(), 8, "two of ten classes leave the gallery");
        let gallery_ids = p.gallery_class_ids();
        let mateless: std::collections::BTreeSet<u32> = p
            .queries
            .iter()
            .filter(|q| !q.in_gallery)
            .map(|q| q.label)
            .collect();
        assert_eq!(mateless.len(), 2, "queries of exactly two classes are mate-less");
        for c in &mateless {
            assert!(!gallery_ids.contains(c), "out-of-gallery label {c} must be absent");
        }
    }

    #[test]
    fn rebuilding_with_the_same_seed_is_identical() {
        let ds = fixture();
        let a = build_eval_protocol(&ds, 0.5, 0.2, 4, 11).unwrap();
        let b = build_eval_protocol(&ds, 0.5, 0.2, 4, 11).unwrap();
        assert_eq!(a, b);
        let c = build_eval_protocol(&ds, 0.5, 0.2, 4, 12).unwrap();
        assert_ne!(a.pairs, c.pairs, "a different seed draws different pairs");
    }

    #[test]
    fn pair_labels_match_their_genuine_flag() {
        let ds = fixture();
        let p = build_eval_protocol(&ds, 1.0, 0.1, 5, 3).unwrap();
        assert_eq!(p.genuine_count(), 50);
        assert_eq!(p.impostor_count(), 50);
        for pair in &p.pairs {
            let same = ds.label(pair.a) == ds.label(pair.b);
            assert_eq!(same, pair.genuine, "pair {pair:?} mislabeled");
            if pair.genuine {
                assert_ne!(pair.a, pair.b, "genuine pairs use two distinct samples");
            }
        }
    }

    #[test]
    fn holdout_split_covers_the_tail_without_overlap() {
        let ds = fixture();
        let p = build_eval_protocol(&ds, 0.5, 0.0, 2, 9).unwrap();
        // 6 samples per class, fraction 0.5 → holdout = last 3: 2 members + 1 query.
        for entry in &p.gallery {
            assert_eq!(entry.member_indices.len(), 2);
            let class_queries: Vec<usize> = p
                .queries
                .iter()
                .filter(|q| q.label == entry.class_id)
                .map(|q| q.index)
                .collect();
            assert_eq!(class_queries.len(), 1);
            assert!(
                !entry.member_indices.contains(&class_queries[0]),
                "gallery members and queries must not share samples"
            );
            let tail = &ds.indices_of_class(entry.class_id)[3..];
            for i in entry.member_indices.iter().chain(&class_queries) {
                assert!(tail.contains(i), "index {i} must come from the class tail");
            }
        }
    }

    #[test]
    fn pairs_stay_inside_the_holdout() {
        let ds = fixture();
        let p = build_eval_protocol(&ds, 0.5, 0.0, 4, 9).unwrap();
        for pair in &p.pairs {
            for idx in [pair.a, pair.b] {
                let class = ds.label(idx);
                let members = ds.indices_of_class(class);
                let tail = &members[members.len() - 3..];
                assert!(tail.contains(&idx), "pair index {idx} escaped the holdout");
            }
        }
    }

    #[test]
    fn too_small_holdout_is_an_invalid_protocol() {
        let ds = generate_synthetic(4, 2, 3, 5.0, 0.3, 5).unwrap();
        let err = build_eval_protocol(&ds, 0.5, 0.0, 1, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidProtocol(_)), "got {err:?}");
    }

    #[test]
    fn bad_fractions_are_config_errors() {
        let ds = fixture();
        assert_eq!(build_eval_protocol(&ds, 0.0, 0.0, 1, 1).unwrap_err().exit_code(), 2);
        assert_eq!(build_eval_protocol(&ds, 1.0, 1.0, 1, 1).unwrap_err().exit_code(), 2);
        assert_eq!(build_eval_protocol(&ds, 1.0, 0.0, 0, 1).unwrap_err().exit_code(), 2);
    }
}
