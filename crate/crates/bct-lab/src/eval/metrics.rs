//! Retrieval scoring: cosine similarity, template pooling, verification
//! TAR@FAR, open-set identification TPIR@FPIR, and a label-permutation
//! chance estimate.
//!
//! Distance anywhere in this crate means 1 − similarity. Thresholds are
//! conservative: the reported operating point never exceeds the requested
//! one, and the achieved value is returned alongside.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Cosine similarity in [−1, 1]. Higher means more similar.
pub fn similarity(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "similarity of {}-dim and {}-dim vectors",
            a.len(),
            b.len()
        )));
    }
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return Err(Error::DegenerateInput("zero-norm vector in similarity".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Pools member features into a single unit-length template: normalize each
/// member, average, renormalize.
pub fn make_template(members: &ArrayView2<f64>) -> Result<Array1<f64>> {
    if members.nrows() == 0 {
        return Err(Error::InvalidArgument("template needs at least one member".into()));
    }
    let mut sum = Array1::<f64>::zeros(members.ncols());
    for (i, row) in members.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateInput(format!("zero-norm template member {i}")));
        }
        sum.zip_mut_with(&row, |s, &v| *s += v / norm);
    }
    sum /= members.nrows() as f64;
    let norm = sum.dot(&sum).sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateInput("template members average to zero".into()));
    }
    Ok(sum / norm)
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} score list is empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericFault(format!("non-finite {what} score")));
    }
    Ok(())
}

/// Fraction of `sorted_desc` that is ≥ t.
fn frac_at_or_above(sorted_desc: &[f64], t: f64) -> f64 {
    let count = sorted_desc.partition_point(|&s| s >= t);
    count as f64 / sorted_desc.len() as f64
}

/// Conservative threshold choice shared by both metrics: the smallest
/// candidate (pooled scores plus the first representable value above the
/// counter maximum) whose counter fraction ≥ it stays within `budget`.
fn pick_threshold(candidates: &mut Vec<f64>, counter_desc: &[f64], budget: f64) -> (f64, f64) {
    let max_counter = counter_desc[0];
    candidates.push(max_counter.next_up());
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    for &t in candidates.iter() {
        let frac = frac_at_or_above(counter_desc, t);
        if frac <= budget {
            return (t, frac);
        }
    }
    unreachable!("a value above the counter maximum always satisfies the budget");
}

/// Verification operating point. Accept rule is score ≥ threshold; the
/// threshold is the smallest score value keeping the impostor acceptance
/// fraction within `far`. Returns (tar, threshold, achieved_far).
pub fn tar_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> Result<(f64, f64, f64)> {
    check_scores(genuine, "genuine")?;
    check_scores(impostor, "impostor")?;
    if !(0.0..=1.0).contains(&far) {
        return Err(Error::InvalidArgument(format!("far must lie in [0,1], got {far}")));
    }
    let mut counter = impostor.to_vec();
    counter.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let mut candidates: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    let (threshold, achieved) = pick_threshold(&mut candidates, &counter, far);
    let tar = genuine.iter().filter(|&&s| s >= threshold).count() as f64 / genuine.len() as f64;
    Ok((tar, threshold, achieved))
}

/// Top-1 identification result of one query against the gallery: ties keep
/// the earliest gallery position.
fn top1(
    query: &ArrayView1<f64>,
    gallery: &ArrayView2<f64>,
) -> Result<(usize, f64)> {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (g, row) in gallery.rows().into_iter().enumerate() {
        let s = similarity(query, &row)?;
        if s > best.1 {
            best = (g, s);
        }
    }
    Ok(best)
}

pub(crate) struct IdOperatingPoint {
    pub tpir: f64,
    pub threshold: f64,
    pub achieved_fpir: f64,
}

pub(crate) fn identification_operating_point(
    gallery: &ArrayView2<f64>,
    gallery_labels: &[u32],
    queries: &ArrayView2<f64>,
    query_labels: &[u32],
    in_gallery: &[bool],
    fpir: f64,
) -> Result<IdOperatingPoint> {
    if gallery.nrows() == 0 || gallery.nrows() != gallery_labels.len() {
        return Err(Error::InvalidArgument("gallery template/label mismatch".into()));
    }
    if queries.nrows() != query_labels.len() || queries.nrows() != in_gallery.len() {
        return Err(Error::InvalidArgument("query template/label/flag mismatch".into()));
    }
    if !(0.0..=1.0).contains(&fpir) {
        return Err(Error::InvalidArgument(format!("fpir must lie in [0,1], got {fpir}")));
    }
    let mated = in_gallery.iter().filter(|&&m| m).count();
    let unmated = in_gallery.len() - mated;
    if mated == 0 {
        return Err(Error::InvalidProtocol("no in-gallery queries".into()));
    }
    if unmated == 0 {
        return Err(Error::InvalidProtocol(
            "no out-of-gallery queries; the rejection threshold is undefined".into(),
        ));
    }
    for (q, (&label, &flag)) in query_labels.iter().zip(in_gallery).enumerate() {
        let present = gallery_labels.contains(&label);
        if present != flag {
            return Err(Error::InvalidProtocol(format!(
                "query {q} mate flag {flag} contradicts gallery membership {present}"
            )));
        }
    }

    let mut mated_hits = Vec::with_capacity(mated);
    let mut counter = Vec::with_capacity(unmated);
    let mut candidates = Vec::with_capacity(queries.nrows());
    for (q, row) in queries.rows().into_iter().enumerate() {
        let (pos, score) = top1(&row, gallery)?;
        candidates.push(score);
        if in_gallery[q] {
            mated_hits.push((score, gallery_labels[pos] == query_labels[q]));
        } else {
            counter.push(score);
        }
    }
    counter.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let (threshold, achieved) = pick_threshold(&mut candidates, &counter, fpir);
    let tpir = mated_hits
        .iter()
        .filter(|&&(score, correct)| correct && score >= threshold)
        .count() as f64
        / mated as f64;
    Ok(IdOperatingPoint { tpir, threshold, achieved_fpir: achieved })
}

/// Open-set identification rate: the fraction of in-gallery queries whose
/// top-1 match is the right identity with a score passing the threshold, the
/// threshold being set so at most `fpir` of out-of-gallery queries pass.
/// Returns (tpir, threshold).
pub fn tpir_at_fpir(
    gallery: &ArrayView2<f64>,
    gallery_labels: &[u32],
    queries: &ArrayView2<f64>,
    query_labels: &[u32],
    in_gallery: &[bool],
    fpir: f64,
) -> Result<(f64, f64)> {
    let point =
        identification_operating_point(gallery, gallery_labels, queries, query_labels, in_gallery, fpir)?;
    Ok((point.tpir, point.threshold))
}

/// Chance level of TAR@FAR for these scores: repeatedly shuffles the pooled
/// scores into random genuine/impostor sets of the original sizes and
/// averages the resulting TAR. With exchangeable scores this estimates what
/// an uninformative model would achieve at the same operating point.
pub fn permutation_chance(
    genuine: &[f64],
    impostor: &[f64],
    far: f64,
    permutations: usize,
    rng: &mut Stream,
) -> Result<f64> {
    check_scores(genuine, "genuine")?;
    check_scores(impostor, "impostor")?;
    if permutations == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let mut pool: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    let mut total = 0.0;
    for _ in 0..permutations {
        pool.shuffle(rng);
        let (g, i) = pool.split_at(genuine.len());
        total += tar_at_far(g, i, far)?.0;
    }
    Ok(total / permutations as f64)
}
