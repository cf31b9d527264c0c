//! The end-to-end scenario pipeline: data → old model → cache → compatible
//! new model → bounds → evaluation → artifacts on disk.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::bct::{
    prepare_cache, train_compatible_with_cache, MethodConfig, OldFeatureCache, RunLog,
};
use crate::data::{
    filter_classes, generate_synthetic, load_dataset, split_eval_tail, split_scenario, LabelMap,
    LabeledDataset, Scenario, ScenarioSplit,
};
use crate::error::Result;
use crate::eval::{
    audit_constraints, build_eval_protocol, permutation_chance, render_report_csv,
    render_report_md, run_eval, similarity, EvalProtocol, EvalReport, LabeledReport,
};
use crate::model::{
    extract_features, save_model, train_classifier, Backbone, Classifier, TrainConfig,
};
use crate::rng::{derive_seed, stream, tag};

use super::config::RunConfig;

/// Everything a caller might want back from one scenario run. The reports
/// also land on disk under `run_dir`.
pub struct ScenarioOutcome {
    pub run_dir: PathBuf,
    /// Old model scored against itself: the no-upgrade baseline.
    pub lower: EvalReport,
    /// The configured method: old gallery, new queries (cross) and new
    /// gallery, new queries (self).
    pub method: EvalReport,
    /// New architecture trained on the union of both training sides with no
    /// compatibility term; its self-test is the ceiling.
    pub upper: EvalReport,
    /// Same ceiling restricted to the new side's own data; emitted for the
    /// open scenarios where that differs from the union.
    pub upper_new_only: Option<EvalReport>,
    /// Mean cross-test TAR at the headline FAR after shuffling pair labels;
    /// the floor any real method has to clear.
    pub chance_cross_tar: Option<f64>,
    pub old_backbone: Backbone,
    pub new_backbone: Backbone,
    pub eval_ds: LabeledDataset,
    pub protocol: EvalProtocol,
}

/// Deterministic run-directory name: scenario, method, seed.
pub fn run_id(cfg: &RunConfig) -> String {
    format!("{}-{}-s{}", cfg.scenario.name(), cfg.method.method().name(), cfg.seed)
}

/// Loads or generates the full dataset and carves off the per-class
/// evaluation tail. Returns (train half, eval half).
pub fn prepare_data(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let full = match &cfg.dataset.file {
        Some(path) => load_dataset(path),
        None => {
            let g = &cfg.dataset.generator;
            generate_synthetic(g.classes, g.per_class, g.dim, g.radius, g.std, cfg.seed)
        }
    }
    .map_err(|e| e.at_stage("dataset"))?;
    split_eval_tail(&full, cfg.dataset.eval_per_class).map_err(|e| e.at_stage("dataset"))
}

/// Trains a fresh classifier head and backbone on `indices`, with parameter
/// init and shuffling isolated under the given stream tags.
pub fn train_plain(
    ds: &LabeledDataset,
    indices: &[usize],
    model: &super::config::ModelConfig,
    seed: u64,
    init_tag: u64,
    train_tag: u64,
) -> Result<(Backbone, Classifier)> {
    let map = LabelMap::from_indices(ds, indices)?;
    let mut rng = stream(seed, &[init_tag]);
    let bb = Backbone::init(&model.widths, &mut rng)?;
    let cls = Classifier::init(map.num_classes(), model.embed_dim(), model.classifier_kind(), &mut rng)?;
    let cfg = model.train_config(derive_seed(seed, &[train_tag]));
    let (bb, cls, _) = train_classifier(indices, ds, bb, cls, &cfg)?;
    Ok((bb, cls))
}

/// Trains the compatible new model against an already-prepared cache.
fn train_new_model(
    split: &ScenarioSplit,
    ds: &LabeledDataset,
    cache: Option<&OldFeatureCache>,
    cfg: &RunConfig,
    method: MethodConfig,
) -> Result<(Backbone, Classifier, RunLog)> {
    let map = LabelMap::from_indices(ds, &split.new_train)?;
    let mut rng = stream(cfg.seed, &[tag::NEW_INIT]);
    let bb = Backbone::init(&cfg.new.widths, &mut rng)?;
    let cls = Classifier::init(
        map.num_classes(),
        cfg.new.embed_dim(),
        cfg.new.classifier_kind(),
        &mut rng,
    )?;
    let tc: TrainConfig = cfg.new.train_config(cfg.seed);
    train_compatible_with_cache(split, ds, cache, bb, cls, method, &tc)
}

/// Restricts the evaluation tail to the classes the new model trains on —
/// the population the upgraded system actually serves — and relabels them
/// compactly for the protocol builder.
pub fn deployment_eval_set(
    eval_full: &LabeledDataset,
    split: &ScenarioSplit,
    ds: &LabeledDataset,
) -> Result<LabeledDataset> {
    let keep: std::collections::BTreeSet<u32> =
        split.new_train.iter().map(|&i| ds.label(i)).collect();
    let keep: Vec<u32> = keep.into_iter().collect();
    filter_classes(eval_full, &keep)
}

/// Cross-test verification scores for the chance baseline: gallery side
/// embedded by the old model, query side by the new one.
fn cross_scores(
    old_feats: &Array2<f64>,
    new_feats: &Array2<f64>,
    protocol: &EvalProtocol,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for pair in &protocol.pairs {
        let s = similarity(&old_feats.row(pair.a), &new_feats.row(pair.b))?;
        if pair.genuine {
            genuine.push(s);
        } else {
            impostor.push(s);
        }
    }
    Ok((genuine, impostor))
}

/// Runs the full pipeline described by `cfg` and writes the run directory:
/// `config.resolved`, `old.model`, `cache.bctf` (when the method uses one),
/// `new.model`, `train.csv`, `report.csv`, `report.md`.
pub fn run_scenario(cfg: &RunConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let run_dir = cfg.out.join(run_id(cfg));
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("config.resolved"), cfg.resolved_text())?;

    let (train_ds, eval_full) = prepare_data(cfg)?;
    let split = split_scenario(&train_ds, cfg.scenario, cfg.fraction)
        .map_err(|e| e.at_stage("split"))?;

    let (old_bb, old_cls) =
        train_plain(&train_ds, &split.old_train, &cfg.old, cfg.seed, tag::OLD_INIT, tag::OLD_TRAIN)
            .map_err(|e| e.at_stage("train-old"))?;
    save_model(&run_dir.join("old.model"), &old_bb, old_cls.kind)?;

    let method = cfg.method.method();
    let cache =
        prepare_cache(&old_bb, &train_ds, &split, method).map_err(|e| e.at_stage("cache"))?;
    if let Some(c) = &cache {
        crate::bct::save_cache(c, &run_dir.join("cache.bctf"))?;
    }

    let (new_bb, new_cls, log) = train_new_model(&split, &train_ds, cache.as_ref(), cfg, method)
        .map_err(|e| e.at_stage("train-new"))?;
    save_model(&run_dir.join("new.model"), &new_bb, new_cls.kind)?;
    log.write_csv(&run_dir.join("train.csv"))?;

    let union: Vec<usize> = {
        let mut v: Vec<usize> = split.old_train.iter().chain(&split.new_train).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (upper_bb, _) =
        train_plain(&train_ds, &union, &cfg.new, cfg.seed, tag::UPPER_INIT, tag::UPPER_TRAIN)
            .map_err(|e| e.at_stage("train-upper"))?;
    let upper_new_only_bb = match cfg.scenario {
        Scenario::OpenData | Scenario::OpenClass => Some(
            train_plain(
                &train_ds,
                &split.new_train,
                &cfg.new,
                cfg.seed,
                tag::UPPER_P_INIT,
                tag::UPPER_P_TRAIN,
            )
            .map_err(|e| e.at_stage("train-upper"))?
            .0,
        ),
        _ => None,
    };

    let eval_ds = deployment_eval_set(&eval_full, &split, &train_ds)
        .map_err(|e| e.at_stage("eval"))?;
    let protocol = build_eval_protocol(
        &eval_ds,
        cfg.eval.holdout,
        cfg.eval.distractors,
        cfg.eval.pairs_per_class,
        cfg.seed,
    )
    .map_err(|e| e.at_stage("eval"))?;

    let fars = &cfg.eval.fars;
    let fpirs = &cfg.eval.fpirs;
    let lower = run_eval(&old_bb, &old_bb, &protocol, &eval_ds, fars, fpirs)
        .map_err(|e| e.at_stage("eval"))?;
    let mut method_report = run_eval(&old_bb, &new_bb, &protocol, &eval_ds, fars, fpirs)
        .map_err(|e| e.at_stage("eval"))?;
    let upper = run_eval(&old_bb, &upper_bb, &protocol, &eval_ds, fars, fpirs)
        .map_err(|e| e.at_stage("eval"))?;
    let upper_new_only = match &upper_new_only_bb {
        Some(bb) => Some(
            run_eval(&old_bb, bb, &protocol, &eval_ds, fars, fpirs)
                .map_err(|e| e.at_stage("eval"))?,
        ),
        None => None,
    };

    let all_rows: Vec<usize> = (0..eval_ds.len()).collect();
    let old_feats = extract_features(&old_bb, &eval_ds, &all_rows)?;
    let new_feats = extract_features(&new_bb, &eval_ds, &all_rows)?;

    if cfg.eval.audit_trials > 0 {
        let mut rng = stream(cfg.seed, &[tag::AUDIT]);
        let rates = audit_constraints(
            &new_feats.view(),
            &old_feats.view(),
            eval_ds.labels(),
            cfg.eval.audit_trials,
            &mut rng,
        )
        .map_err(|e| e.at_stage("audit"))?;
        method_report.constraints = Some(rates);
    }

    let chance_cross_tar = if cfg.eval.chance_permutations > 0 {
        let (genuine, impostor) = cross_scores(&old_feats, &new_feats, &protocol)?;
        let mut rng = stream(cfg.seed, &[tag::CHANCE]);
        Some(
            permutation_chance(&genuine, &impostor, fars[0], cfg.eval.chance_permutations, &mut rng)
                .map_err(|e| e.at_stage("eval"))?,
        )
    } else {
        None
    };

    let method_label = method.name();
    let mut reports: Vec<LabeledReport> =
        vec![("lower", &lower), (method_label, &method_report), ("upper", &upper)];
    if let Some(r) = &upper_new_only {
        reports.push(("upper_new_only", r));
    }
    write_reports(&run_dir, &reports, chance_cross_tar, fars[0])?;

    Ok(ScenarioOutcome {
        run_dir,
        lower,
        method: method_report,
        upper,
        upper_new_only,
        chance_cross_tar,
        old_backbone: old_bb,
        new_backbone: new_bb,
        eval_ds,
        protocol,
    })
}

/// Renders `report.csv` and `report.md`, appending the chance baseline as an
/// extra summary row when it was estimated.
fn write_reports(
    dir: &Path,
    reports: &[LabeledReport],
    chance: Option<f64>,
    headline_far: f64,
) -> Result<()> {
    let mut csv = render_report_csv(reports);
    let mut md = render_report_md(reports);
    if let Some(c) = chance {
        csv.push_str(&format!("chance,verification,cross,{headline_far},{c},\n"));
        md.push_str(&format!(
            "\nLabel-permutation chance line: cross-test TAR@FAR={headline_far} ≈ {c:.4}.\n"
        ));
    }
    std::fs::write(dir.join("report.csv"), csv)?;
    std::fs::write(dir.join("report.md"), md)?;
    Ok(())
}
