//! Renders embedding scatter plots: raw input space next to a trained
//! embedding space, both projected to their top-2 principal components and
//! written as standalone SVG files.
//!
//! Run with `cargo run --example feature_scatter`.

use bct_lab::data::generate_synthetic;
use bct_lab::lab::export_scatter;
use bct_lab::model::{extract_features, train_classifier, Backbone, Classifier, ClassifierKind, TrainConfig};
use bct_lab::rng::{stream, tag};
use bct_lab::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("bct-lab-examples");
    std::fs::create_dir_all(&dir)?;

    // Eight classes in ten dimensions, deliberately overlapping (std 0.9) so
    // the raw-input plot looks muddier than the trained embedding.
    let ds = generate_synthetic(8, 40, 10, 3.0, 0.9, 11)?;
    let indices: Vec<usize> = (0..ds.len()).collect();

    let raw = dir.join("raw_inputs.svg");
    export_scatter(ds.features().view(), ds.labels(), &raw)?;
    println!("raw inputs        -> {}", raw.display());

    let mut init = stream(11, &[tag::NEW_INIT]);
    let bb = Backbone::init(&[10, 24, 6], &mut init)?;
    let cls = Classifier::init(
        8,
        6,
        ClassifierKind::AngularMargin { scale: 30.0, margin: 0.3 },
        &mut init,
    )?;
    let cfg = TrainConfig { batch_size: 32, epochs: 20, seed: 11, ..TrainConfig::default() };
    let (bb, _, _) = train_classifier(&indices, &ds, bb, cls, &cfg)?;

    let feats = extract_features(&bb, &ds, &indices)?;
    let trained = dir.join("trained_embedding.svg");
    export_scatter(feats.view(), ds.labels(), &trained)?;
    println!("trained embedding -> {}", trained.display());

    println!("\nopen both files in a browser: the trained plot should show eight");
    println!("separated clusters where the raw plot shows one smeared cloud.");
    Ok(())
}
