//! The full upgrade story, built from the library's primitives: train a weak
//! old model, cache and denoise its features, train a stronger new model that
//! mixes those cached features into its batches, and check that new queries
//! really do score against the old gallery.
//!
//! Run with `cargo run --release --example compatible_upgrade`.

use std::collections::BTreeSet;

use bct_lab::bct::{prepare_cache, train_compatible_with_cache, MethodConfig};
use bct_lab::data::{
    filter_classes, generate_synthetic, split_eval_tail, split_scenario, LabelMap, Scenario,
};
use bct_lab::eval::{build_eval_protocol, run_eval};
use bct_lab::model::{train_classifier, Backbone, Classifier, ClassifierKind, TrainConfig};
use bct_lab::rng::{derive_seed, stream, tag};
use bct_lab::Result;

fn main() -> Result<()> {
    let seed = 42;

    // Data: 50 classes, held-out evaluation tail, open-class split — the old
    // model saw the first 30% of classes, the new model trains on the rest.
    let full = generate_synthetic(50, 60, 16, 4.0, 0.55, seed)?;
    let (train, eval_full) = split_eval_tail(&full, 20)?;
    let split = split_scenario(&train, Scenario::OpenClass, 0.3)?;
    println!(
        "open-class split: old trains on {} rows, new on {} rows (disjoint classes)",
        split.old_train.len(),
        split.new_train.len()
    );

    // Old model: narrow, plain softmax, briefly trained. This is the frozen
    // deployment whose gallery features we must stay compatible with.
    let old_map = LabelMap::from_indices(&train, &split.old_train)?;
    let mut init = stream(seed, &[tag::OLD_INIT]);
    let old_bb = Backbone::init(&[16, 12, 8], &mut init)?;
    let old_cls = Classifier::init(old_map.num_classes(), 8, ClassifierKind::PlainSoftmax, &mut init)?;
    let old_cfg = TrainConfig {
        batch_size: 64,
        epochs: 5,
        seed: derive_seed(seed, &[tag::OLD_TRAIN]),
        ..TrainConfig::default()
    };
    let (old_bb, _, _) = train_classifier(&split.old_train, &train, old_bb, old_cls, &old_cfg)?;

    // Cache the old model's features over the new training set and drop the
    // least credible tenth of every class (farthest from the class mean).
    let method = MethodConfig::MixBCT { alpha: 0.3, denoise: true, exclusion_fraction: 0.1 };
    let cache = prepare_cache(&old_bb, &train, &split, method)?;
    let c = cache.as_ref().expect("mixing always uses a cache");
    println!(
        "cache: {} rows, {} flagged credible after denoising",
        c.len(),
        c.credible_count()
    );

    // New model: wider, angular-margin head, trained with 30% of each batch's
    // embeddings replaced by the cached old features of the same samples.
    let new_map = LabelMap::from_indices(&train, &split.new_train)?;
    let mut init = stream(seed, &[tag::NEW_INIT]);
    let new_bb = Backbone::init(&[16, 64, 64, 8], &mut init)?;
    let new_cls = Classifier::init(
        new_map.num_classes(),
        8,
        ClassifierKind::AngularMargin { scale: 30.0, margin: 0.3 },
        &mut init,
    )?;
    let new_cfg = TrainConfig { batch_size: 16, epochs: 30, seed, ..TrainConfig::default() };
    let (new_bb, _, log) =
        train_compatible_with_cache(&split, &train, cache.as_ref(), new_bb, new_cls, method, &new_cfg)?;
    let replaced: usize = log.batches.iter().map(|b| b.replaced).sum();
    println!("training replaced {replaced} embeddings across {} batches", log.batches.len());

    // Evaluate on the held-out tail, restricted to the classes the upgraded
    // deployment actually serves (the new training population). Cross-test:
    // old-model gallery, new-model queries — the backfill-free deployment.
    // The old model scored against itself is the baseline to beat.
    let deployed: BTreeSet<u32> =
        split.new_train.iter().map(|&i| train.label(i)).collect();
    let keep: Vec<u32> = deployed.into_iter().collect();
    let eval = filter_classes(&eval_full, &keep)?;
    let protocol = build_eval_protocol(&eval, 1.0, 0.2, 20, seed)?;
    let fars = [0.01, 0.1];
    let fpirs = [0.01, 0.1];
    let baseline = run_eval(&old_bb, &old_bb, &protocol, &eval, &fars, &fpirs)?;
    let upgraded = run_eval(&old_bb, &new_bb, &protocol, &eval, &fars, &fpirs)?;

    println!("\nTAR@FAR=0.01 (higher is better):");
    println!("  old self-test      {:.4}  <- no-upgrade baseline", baseline.self_test.verification[0].value);
    println!("  cross-test         {:.4}  <- new queries vs old gallery", upgraded.cross_test.verification[0].value);
    println!("  new self-test      {:.4}  <- after full backfill", upgraded.self_test.verification[0].value);
    println!(
        "\ncompatible when cross-test beats the old self-test: {}",
        upgraded.cross_test.verification[0].value > baseline.self_test.verification[0].value
    );
    Ok(())
}
