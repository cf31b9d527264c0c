//! Trains the same new architecture four times — no compatibility term,
//! batch mixing, L2 feature regression, old-prototype alignment — against
//! one shared old model, and tabulates the cross-test/self-test trade-off.
//!
//! Run with `cargo run --release --example method_comparison`.

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
    let full = generate_synthetic(50, 60, 16, 4.0, 0.55, seed)?;
    let (train, eval_full) = split_eval_tail(&full, 20)?;
    let split = split_scenario(&train, Scenario::OpenClass, 0.3)?;

    // One old model shared by every row of the table.
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

    // Evaluation population: held-out samples of the classes the upgraded
    // system serves (the new-model training classes).
    let deployed: BTreeSet<u32> = split.new_train.iter().map(|&i| train.label(i)).collect();
    let keep: Vec<u32> = deployed.into_iter().collect();
    let eval = filter_classes(&eval_full, &keep)?;
    let protocol = build_eval_protocol(&eval, 1.0, 0.2, 20, seed)?;
    let fars = [0.01, 0.1];
    let fpirs = [0.01, 0.1];
    let baseline = run_eval(&old_bb, &old_bb, &protocol, &eval, &fars, &fpirs)?;
    println!("old self-test TAR@FAR=0.01: {:.4}\n", baseline.self_test.verification[0].value);

    let methods = [
        MethodConfig::NoCompat,
        MethodConfig::MixBCT { alpha: 0.3, denoise: true, exclusion_fraction: 0.1 },
        MethodConfig::L2BCT { lambda: 5.0 },
        MethodConfig::ProtoBCT { weight: 2.0 },
    ];

    println!("{:<10} {:>10} {:>10}   comment", "method", "cross", "self");
    let new_map = LabelMap::from_indices(&train, &split.new_train)?;
    for method in methods {
        // Every method starts from the same initialization stream, so the
        // table differences come from the compatibility term alone.
        let mut init = stream(seed, &[tag::NEW_INIT]);
        let new_bb = Backbone::init(&[16, 64, 64, 8], &mut init)?;
        let new_cls = Classifier::init(
            new_map.num_classes(),
            8,
            ClassifierKind::AngularMargin { scale: 30.0, margin: 0.3 },
            &mut init,
        )?;
        // Every method gets its workable batch size. The L2 penalty needs
        // the large one: its gradient has constant per-row magnitude, and at
        // small batches (many steps per epoch) the accumulated inward pull
        // collapses the backbone outright.
        let batch_size = if matches!(method, MethodConfig::L2BCT { .. }) { 128 } else { 16 };
        let cfg = TrainConfig { batch_size, epochs: 30, seed, ..TrainConfig::default() };
        let cache = prepare_cache(&old_bb, &train, &split, method)?;
        let (bb, _, _) =
            train_compatible_with_cache(&split, &train, cache.as_ref(), new_bb, new_cls, method, &cfg)?;

        let report = run_eval(&old_bb, &bb, &protocol, &eval, &fars, &fpirs)?;
        let cross = report.cross_test.verification[0].value;
        let selft = report.self_test.verification[0].value;
        let comment = match method {
            MethodConfig::NoCompat => "cross-test should sit at chance",
            MethodConfig::MixBCT { .. } => "compatible and strong self-test",
            MethodConfig::L2BCT { .. } => "compatibility bought with self-test",
            MethodConfig::ProtoBCT { .. } => "class-level pull only",
        };
        println!("{:<10} {:>10.4} {:>10.4}   {}", method.name(), cross, selft, comment);
    }
    Ok(())
}
