//! The retrieval metrics by themselves, on scores small enough to check by
//! hand: 1:1 verification (TAR at a fixed FAR), open-set 1:N identification
//! (TPIR at a fixed FPIR), templates, and the permutation chance line.
//!
//! Run with `cargo run --example retrieval_metrics`.

use bct_lab::eval::{make_template, permutation_chance, similarity, tar_at_far, tpir_at_fpir};
use bct_lab::rng::{stream, tag};
use bct_lab::Result;
use ndarray::array;

fn main() -> Result<()> {
    // --- Verification -----------------------------------------------------
    // Ten genuine scores, ten impostor scores, clearly separated except for
    // one hard impostor at 0.82.
    let genuine = [0.91, 0.88, 0.95, 0.79, 0.86, 0.92, 0.84, 0.90, 0.87, 0.93];
    let impostor = [0.12, 0.25, 0.31, 0.08, 0.82, 0.19, 0.27, 0.15, 0.22, 0.10];

    // FAR=0.1 tolerates one false accept out of ten impostors, so the
    // threshold lands just above the second-best impostor (0.31) and every
    // genuine score passes.
    let (tar, threshold, achieved) = tar_at_far(&genuine, &impostor, 0.1)?;
    println!("TAR@FAR=0.1  = {tar:.2} (threshold {threshold:.3}, achieved FAR {achieved:.2})");

    // FAR=0.05 cannot afford any false accept here (0.05 * 10 < 1), so the
    // threshold must clear the hard impostor at 0.82, dropping the genuine
    // score at 0.79.
    let (tar, threshold, achieved) = tar_at_far(&genuine, &impostor, 0.05)?;
    println!("TAR@FAR=0.05 = {tar:.2} (threshold {threshold:.3}, achieved FAR {achieved:.2})");

    // Chance line: shuffle the pooled scores into random genuine/impostor
    // splits. For exchangeable scores TAR ~= FAR, which is what an
    // incompatible pair of embedding models produces.
    let chance =
        permutation_chance(&genuine, &impostor, 0.1, 500, &mut stream(0, &[tag::CHANCE]))?;
    println!("permutation chance at FAR=0.1: {chance:.3} (TAR ~= FAR when scores carry no signal)");

    // --- Templates and similarity ------------------------------------------
    // Gallery identities are represented by the normalized mean of their
    // enrolled features; cosine similarity scores queries against them.
    let members = array![[1.0, 0.0], [0.8, 0.2], [0.9, -0.1]];
    let template = make_template(&members.view())?;
    let query = array![1.0, 0.05];
    println!(
        "\ntemplate [{:.4}, {:.4}] scores query at {:.4}",
        template[0],
        template[1],
        similarity(&template.view(), &query.view())?
    );

    // --- Open-set identification -------------------------------------------
    // Three enrolled identities along the axes; four queries, one of which
    // (the last) belongs to nobody in the gallery.
    let gallery = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let gallery_labels = [0u32, 1, 2];
    let queries = array![
        [0.9, 0.1, 0.0],   // clearly identity 0, cos ~= 0.99
        [0.1, 0.9, 0.1],   // clearly identity 1, cos ~= 0.99
        [0.3, 0.5, 0.45],  // identity 1, but weak: top-1 cos ~= 0.68
        [0.6, 0.6, 0.0],   // impostor, best gallery match cos ~= 0.71
    ];
    let query_labels = [0u32, 1, 1, 3];
    let in_gallery = [true, true, true, false];

    // FPIR=1.0 lets every out-of-gallery query through, so the threshold
    // sinks low enough that all three mated queries are accepted, and every
    // top-1 identity is correct: TPIR is 1.
    let (tpir, threshold) =
        tpir_at_fpir(&gallery.view(), &gallery_labels, &queries.view(), &query_labels, &in_gallery, 1.0)?;
    println!("\nTPIR@FPIR=1.0 = {tpir:.2} (threshold {threshold:.3})");

    // FPIR=0.2 must reject the impostor (1 counter score, 0.2 * 1 < 1). The
    // threshold climbs above the impostor's 0.71, taking the weak mated
    // query at 0.68 down with it: TPIR falls to 2/3.
    let (tpir, threshold) =
        tpir_at_fpir(&gallery.view(), &gallery_labels, &queries.view(), &query_labels, &in_gallery, 0.2)?;
    println!("TPIR@FPIR=0.2 = {tpir:.2} (threshold {threshold:.3})");
    Ok(())
}
