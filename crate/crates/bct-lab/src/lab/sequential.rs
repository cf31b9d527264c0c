//! Three model generations trained back to back: a narrow plain-softmax
//! first model on a slice of the classes, then two successive upgrades, each
//! trained compatible with its immediate predecessor only. The output is the
//! full 3×3 cross-scoring matrix, which shows whether compatibility survives
//! the hop it was never trained for (generation 3 against generation 1).

use std::path::PathBuf;

use crate::bct::{prepare_cache, train_compatible_with_cache, MethodConfig};
use crate::data::{filter_classes, LabelMap, LabeledDataset, Scenario, ScenarioSplit};
use crate::error::{Error, Result};
use crate::eval::{build_eval_protocol, run_eval};
use crate::model::{save_model, Backbone, Classifier};
use crate::rng::{derive_seed, stream, tag};

use super::config::RunConfig;
use super::scenario::prepare_data;

/// The chain's outcome: one backbone per generation and the score matrices.
/// `tar[i][j]` (and `tpir[i][j]`) put generation i on the gallery side and
/// generation j on the query side, at the headline operating point; diagonal
/// cells are self-tests.
#[derive(Debug)]
pub struct SequentialOutcome {
    pub run_dir: PathBuf,
    pub backbones: [Backbone; 3],
    pub tar: [[f64; 3]; 3],
    pub tpir: [[f64; 3]; 3],
}

/// Samples of the first `count` classes, in dataset order.
fn class_slice(ds: &LabeledDataset, count: u32) -> Vec<usize> {
    let mut v = Vec::new();
    for c in 0..count {
        v.extend_from_slice(ds.indices_of_class(c));
    }
    v.sort_unstable();
    v
}

/// Trains one upgrade generation: a fresh model on `train` indices, mixed
/// with the predecessor's cached features of those same samples.
fn train_generation(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    predecessor: &Backbone,
    prev_train: &[usize],
    train: &[usize],
    stage: u64,
) -> Result<Backbone> {
    // The compatible-training entry point reads the new side of a scenario
    // split; the old side records what the predecessor trained on.
    let split = ScenarioSplit {
        scenario: Scenario::ExtendedClass,
        fraction: 0.5,
        old_train: prev_train.to_vec(),
        new_train: train.to_vec(),
    };
    let method = MethodConfig::MixBCT {
        alpha: cfg.method.alpha,
        denoise: cfg.method.denoise,
        exclusion_fraction: cfg.method.exclusion_fraction,
    };
    let cache = prepare_cache(predecessor, ds, &split, method)?;

    let map = LabelMap::from_indices(ds, train)?;
    let mut rng = stream(cfg.seed, &[tag::SEQ, stage, tag::NEW_INIT]);
    let bb = Backbone::init(&cfg.new.widths, &mut rng)?;
    let cls = Classifier::init(
        map.num_classes(),
        cfg.new.embed_dim(),
        cfg.new.classifier_kind(),
        &mut rng,
    )?;
    let tc = cfg.new.train_config(derive_seed(cfg.seed, &[tag::SEQ, stage]));
    let (bb, _, _) = train_compatible_with_cache(&split, ds, cache.as_ref(), bb, cls, method, &tc)?;
    Ok(bb)
}

/// Runs the chain described by `cfg`: generation 1 is the configured old
/// model on the first `fractions.0` of the classes, generation 2 the
/// configured new model on the first `fractions.1`, generation 3 the same
/// architecture on all classes. Writes the three model files and
/// `sequential.csv` (both matrices) under the run directory.
pub fn run_sequential(cfg: &RunConfig) -> Result<SequentialOutcome> {
    cfg.validate()?;
    let run_dir = cfg.out.join(format!("sequential-s{}", cfg.seed));
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("config.resolved"), cfg.resolved_text())?;

    let (train_ds, eval_full) = prepare_data(cfg)?;
    let classes = train_ds.num_classes();
    let (f1, f2) = cfg.sequential.fractions;
    let c1 = (f1 * classes as f64).ceil() as u32;
    let c2 = (f2 * classes as f64).ceil() as u32;
    if !(2 <= c1 && c1 < c2 && c2 < classes) {
        return Err(Error::Config(format!(
            "sequential fractions {f1},{f2} of {classes} classes give stages {c1},{c2},{classes}; \
             each stage needs at least 2 classes more than the last"
        )));
    }

    let slice1 = class_slice(&train_ds, c1);
    let slice2 = class_slice(&train_ds, c2);
    let slice3 = class_slice(&train_ds, classes);

    let (phi1, phi1_cls) = super::scenario::train_plain(
        &train_ds,
        &slice1,
        &cfg.old,
        cfg.seed,
        tag::OLD_INIT,
        tag::OLD_TRAIN,
    )
    .map_err(|e| e.at_stage("train-phi1"))?;
    let phi2 = train_generation(cfg, &train_ds, &phi1, &slice1, &slice2, 2)
        .map_err(|e| e.at_stage("train-phi2"))?;
    let phi3 = train_generation(cfg, &train_ds, &phi2, &slice2, &slice3, 3)
        .map_err(|e| e.at_stage("train-phi3"))?;

    save_model(&run_dir.join("phi1.model"), &phi1, phi1_cls.kind)?;
    save_model(&run_dir.join("phi2.model"), &phi2, cfg.new.classifier_kind())?;
    save_model(&run_dir.join("phi3.model"), &phi3, cfg.new.classifier_kind())?;

    // Matrix population: held-out samples of the classes generation 2 added
    // (present in every later generation's training, absent from generation
    // 1's). Those are the enrollments the upgrade chain exists to serve, and
    // every cell stays a fair fight: generation 1 works from pure
    // generalization on them instead of padding its self-test with classes
    // it memorized, while the chained models meet them the way the chain
    // actually propagated compatibility — via training plus mixing.
    let added: Vec<u32> = (c1..c2).collect();
    let eval_ds = filter_classes(&eval_full, &added).map_err(|e| e.at_stage("eval"))?;
    let protocol = build_eval_protocol(
        &eval_ds,
        cfg.eval.holdout,
        cfg.eval.distractors,
        cfg.eval.pairs_per_class,
        cfg.seed,
    )
    .map_err(|e| e.at_stage("eval"))?;

    let backbones = [phi1, phi2, phi3];
    let mut tar = [[0.0; 3]; 3];
    let mut tpir = [[0.0; 3]; 3];
    for (i, gallery) in backbones.iter().enumerate() {
        for (j, query) in backbones.iter().enumerate() {
            let report = run_eval(
                gallery,
                query,
                &protocol,
                &eval_ds,
                &cfg.eval.fars,
                &cfg.eval.fpirs,
            )
            .map_err(|e| e.at_stage("eval"))?;
            tar[i][j] = report.cross_test.verification[0].value;
            tpir[i][j] = report.cross_test.identification[0].value;
        }
    }

    let mut csv = String::from("metric,gallery,phi1,phi2,phi3\n");
    for (name, m) in [("tar", &tar), ("tpir", &tpir)] {
        for (i, row) in m.iter().enumerate() {
            csv.push_str(&format!("{name},phi{},{},{},{}\n", i + 1, row[0], row[1], row[2]));
        }
    }
    std::fs::write(run_dir.join("sequential.csv"), csv)?;

    Ok(SequentialOutcome { run_dir, backbones, tar, tpir })
}
