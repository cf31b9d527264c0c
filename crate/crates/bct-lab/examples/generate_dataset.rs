//! Generates a synthetic Gaussian-mixture dataset, shows how the four
//! upgrade scenarios carve it into old/new training sides, and round-trips
//! it through the binary dataset format.
//!
//! Run with `cargo run --example generate_dataset`.

use bct_lab::data::{
    generate_synthetic, load_dataset, save_dataset, split_eval_tail, split_scenario, Scenario,
};
use bct_lab::Result;

fn main() -> Result<()> {
    // 20 classes of 30 samples in 12 dimensions. Class centers sit on a
    // sphere of radius 4, samples scatter with std 0.55 around them — far
    // enough apart to be learnable, close enough that models have to work.
    let ds = generate_synthetic(20, 30, 12, 4.0, 0.55, 42)?;
    println!(
        "dataset: {} samples, {} classes, dim {}",
        ds.len(),
        ds.num_classes(),
        ds.dim()
    );

    let norms: Vec<f64> = ds.features().rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
    println!("mean feature norm: {mean_norm:.3} (centers at radius 4.0)");

    // Every experiment reserves a per-class tail for evaluation before any
    // training split happens, so evaluation samples are never trained on.
    let (train, eval) = split_eval_tail(&ds, 8)?;
    println!("\nheld out 8 samples/class: train {} rows, eval {} rows", train.len(), eval.len());

    // The four scenarios control what the old model saw relative to the new
    // one: more data per class, more classes, or disjoint versions of each.
    println!("\nscenario splits at fraction 0.3 (counts are training rows):");
    for scenario in [
        Scenario::ExtendedData,
        Scenario::ExtendedClass,
        Scenario::OpenData,
        Scenario::OpenClass,
    ] {
        let split = split_scenario(&train, scenario, 0.3)?;
        let overlap = split.new_train.iter().filter(|i| split.old_train.contains(i)).count();
        println!(
            "  {:<14} old {:>3}  new {:>3}  shared rows {}",
            scenario.name(),
            split.old_train.len(),
            split.new_train.len(),
            overlap
        );
    }

    // Datasets serialize to a small binary format; identical bytes back.
    let dir = std::env::temp_dir().join("bct-lab-examples");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.bctd");
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back.features(), ds.features(), "features must round-trip bit-exactly");
    assert_eq!(back.labels(), ds.labels(), "labels must round-trip");
    println!("\nround-trip through {} ok ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
