//! Trains one embedding model from scratch twice — once with a plain softmax
//! head, once with an additive-angular-margin head — and compares how tightly
//! each pulls same-class embeddings together.
//!
//! Run with `cargo run --example train_embedding`.

use bct_lab::data::generate_synthetic;
use bct_lab::eval::{similarity, tar_at_far};
use bct_lab::model::{
    extract_features, train_classifier, Backbone, Classifier, ClassifierKind, TrainConfig,
};
use bct_lab::rng::{derive_seed, stream, tag};
use bct_lab::Result;
use ndarray::Array2;

/// Cosine scores of every same-class pair (genuine) and a capped number of
/// cross-class pairs (impostor), ready for the verification metric.
fn pair_scores(feats: &Array2<f64>, labels: &[u32]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..feats.nrows() {
        for j in (i + 1)..feats.nrows() {
            let s = similarity(&feats.row(i), &feats.row(j))?;
            if labels[i] == labels[j] {
                genuine.push(s);
            } else if impostor.len() < 20_000 {
                impostor.push(s);
            }
        }
    }
    Ok((genuine, impostor))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> Result<()> {
    // 30 classes in an 8-dimensional embedding: crowded enough that how the
    // loss allocates angular space shows up in the pair statistics.
    let seed = 7;
    let ds = generate_synthetic(30, 25, 10, 4.0, 0.7, seed)?;
    let indices: Vec<usize> = (0..ds.len()).collect();
    let cfg = TrainConfig {
        batch_size: 32,
        epochs: 20,
        seed: derive_seed(seed, &[tag::NEW_TRAIN]),
        ..TrainConfig::default()
    };

    for kind in [
        ClassifierKind::PlainSoftmax,
        ClassifierKind::AngularMargin { scale: 30.0, margin: 0.3 },
    ] {
        // Same architecture and same init stream for both heads, so the
        // comparison isolates the loss.
        let mut init = stream(seed, &[tag::NEW_INIT]);
        let bb = Backbone::init(&[10, 32, 8], &mut init)?;
        let cls = Classifier::init(30, 8, kind, &mut init)?;

        let (bb, _cls, trace) = train_classifier(&indices, &ds, bb, cls, &cfg)?;
        let feats = extract_features(&bb, &ds, &indices)?;
        let (genuine, impostor) = pair_scores(&feats, ds.labels())?;
        let (tar, _, _) = tar_at_far(&genuine, &impostor, 0.001)?;

        println!("{kind:?}");
        println!(
            "  epoch-mean loss: {:.4} -> {:.4} -> {:.4}",
            trace[0],
            trace[trace.len() / 2],
            trace[trace.len() - 1]
        );
        println!(
            "  mean same-class cosine {:.4}, cross-class {:.4}",
            mean(&genuine),
            mean(&impostor)
        );
        println!("  pairwise verification TAR@FAR=1e-3: {tar:.4}\n");
    }

    println!("both heads classify this data perfectly; the verification rate at a");
    println!("strict FAR is where the margin's extra angular slack shows up.");
    Ok(())
}
