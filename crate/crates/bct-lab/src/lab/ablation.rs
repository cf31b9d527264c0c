//! Ablation grids: the mix-ratio sweep and the denoising on/off comparison
//! against a deliberately corrupted cache.
//!
//! Every grid point shares one dataset and one old model — the sweep isolates
//! the knob under study. Each point owns a subdirectory with the usual run
//! artifacts plus a consolidated `ablation.csv` at the grid root.

use std::path::{Path, PathBuf};

use crate::bct::{denoise, MethodConfig, OldFeatureCache};
use crate::data::{split_scenario, LabeledDataset, ScenarioSplit};
use crate::error::{Error, Result};
use crate::eval::{build_eval_protocol, run_eval, EvalProtocol, EvalReport};
use crate::model::{save_model, Backbone};
use crate::rng::{stream, tag};

use super::config::RunConfig;
use super::scenario::{deployment_eval_set, prepare_data, train_plain};

/// One grid point: its label, its run subdirectory, and the evaluation it
/// produced (or the error that stopped it — other points keep going).
pub struct AblationPoint {
    pub label: String,
    pub dir: PathBuf,
    pub report: Result<EvalReport>,
}

/// Shared state for a grid: data, split, protocol, and the frozen old model.
struct GridBase {
    train_ds: LabeledDataset,
    eval_ds: LabeledDataset,
    split: ScenarioSplit,
    protocol: EvalProtocol,
    old_bb: Backbone,
    old_model_bytes: Vec<u8>,
    root: PathBuf,
}

fn grid_base(cfg: &RunConfig, grid_name: &str) -> Result<GridBase> {
    cfg.validate()?;
    let root = cfg.out.join(format!("{grid_name}-s{}", cfg.seed));
    std::fs::create_dir_all(&root)?;
    std::fs::write(root.join("config.resolved"), cfg.resolved_text())?;

    let (train_ds, eval_full) = prepare_data(cfg)?;
    let split = split_scenario(&train_ds, cfg.scenario, cfg.fraction)
        .map_err(|e| e.at_stage("split"))?;
    let (old_bb, old_cls) =
        train_plain(&train_ds, &split.old_train, &cfg.old, cfg.seed, tag::OLD_INIT, tag::OLD_TRAIN)
            .map_err(|e| e.at_stage("train-old"))?;

    // Serialize the old model once; every point dir gets these exact bytes.
    let old_path = root.join("old.model");
    save_model(&old_path, &old_bb, old_cls.kind)?;
    let old_model_bytes = std::fs::read(&old_path)?;

    let eval_ds =
        deployment_eval_set(&eval_full, &split, &train_ds).map_err(|e| e.at_stage("eval"))?;
    let protocol = build_eval_protocol(
        &eval_ds,
        cfg.eval.holdout,
        cfg.eval.distractors,
        cfg.eval.pairs_per_class,
        cfg.seed,
    )
    .map_err(|e| e.at_stage("eval"))?;

    Ok(GridBase { train_ds, eval_ds, split, protocol, old_bb, old_model_bytes, root })
}

/// Trains and evaluates one grid point against the shared base, leaving the
/// per-point artifacts in `dir`.
fn run_point(
    base: &GridBase,
    cfg: &RunConfig,
    dir: &Path,
    method: MethodConfig,
    cache: Option<&OldFeatureCache>,
) -> Result<EvalReport> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("old.model"), &base.old_model_bytes)?;
    if let Some(c) = cache {
        crate::bct::save_cache(c, &dir.join("cache.bctf"))?;
    }

    let map = crate::data::LabelMap::from_indices(&base.train_ds, &base.split.new_train)?;
    let mut rng = stream(cfg.seed, &[tag::NEW_INIT]);
    let bb = Backbone::init(&cfg.new.widths, &mut rng)?;
    let cls = crate::model::Classifier::init(
        map.num_classes(),
        cfg.new.embed_dim(),
        cfg.new.classifier_kind(),
        &mut rng,
    )?;
    let tc = cfg.new.train_config(cfg.seed);
    let (new_bb, new_cls, log) = crate::bct::train_compatible_with_cache(
        &base.split,
        &base.train_ds,
        cache,
        bb,
        cls,
        method,
        &tc,
    )
    .map_err(|e| e.at_stage("train-new"))?;
    save_model(&dir.join("new.model"), &new_bb, new_cls.kind)?;
    log.write_csv(&dir.join("train.csv"))?;

    let report = run_eval(
        &base.old_bb,
        &new_bb,
        &base.protocol,
        &base.eval_ds,
        &cfg.eval.fars,
        &cfg.eval.fpirs,
    )
    .map_err(|e| e.at_stage("eval"))?;
    let rows = [(method.name(), &report)];
    crate::eval::write_report_files(dir, &rows)?;
    Ok(report)
}

/// Renders the consolidated grid table: one row per point with the headline
/// cross/self numbers, errors flagged in a status column.
fn write_grid_csv(root: &Path, points: &[AblationPoint]) -> Result<()> {
    let mut csv = String::from(
        "point,status,cross_tar,self_tar,cross_tpir,self_tpir,avg\n",
    );
    for p in points {
        match &p.report {
            Ok(r) => {
                csv.push_str(&format!(
                    "{},ok,{},{},{},{},{}\n",
                    p.label,
                    r.cross_test.verification[0].value,
                    r.self_test.verification[0].value,
                    r.cross_test.identification[0].value,
                    r.self_test.identification[0].value,
                    r.avg,
                ));
            }
            Err(e) => {
                // Quotes keep the error message inside one CSV cell.
                let msg = e.to_string().replace('"', "'");
                csv.push_str(&format!("{},\"error: {}\",,,,,\n", p.label, msg));
            }
        }
    }
    std::fs::write(root.join("ablation.csv"), csv)?;
    Ok(())
}

/// Sweeps the batch-replacement ratio over `cfg.ablation.alphas`, plus a
/// plain-training reference row. Denoising and the exclusion fraction follow
/// the method block; everything else is shared across points.
pub fn run_ablation_alpha(cfg: &RunConfig) -> Result<Vec<AblationPoint>> {
    if cfg.ablation.alphas.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    let base = grid_base(cfg, "ablate-alpha")?;
    let mut points = Vec::new();

    let nocompat_dir = base.root.join("nocompat");
    let nocompat = run_point(&base, cfg, &nocompat_dir, MethodConfig::NoCompat, None);
    points.push(AblationPoint {
        label: "nocompat".into(),
        dir: nocompat_dir,
        report: nocompat,
    });

    for &alpha in &cfg.ablation.alphas {
        let method = MethodConfig::MixBCT {
            alpha,
            denoise: cfg.method.denoise,
            exclusion_fraction: cfg.method.exclusion_fraction,
        };
        let label = format!("alpha-{alpha}");
        let dir = base.root.join(&label);
        let report = crate::bct::prepare_cache(&base.old_bb, &base.train_ds, &base.split, method)
            .map_err(|e| e.at_stage("cache"))
            .and_then(|cache| run_point(&base, cfg, &dir, method, cache.as_ref()));
        points.push(AblationPoint { label, dir, report });
    }

    write_grid_csv(&base.root, &points)?;
    Ok(points)
}

/// Compares denoising on vs off after corrupting `cfg.ablation.cache_noise`
/// of the cache rows with features stolen from other classes — the
/// low-quality-cache regime where exclusion is supposed to earn its keep.
pub fn run_ablation_denoise(cfg: &RunConfig) -> Result<Vec<AblationPoint>> {
    let base = grid_base(cfg, "ablate-denoise")?;

    let mut noisy = OldFeatureCache::build(&base.old_bb, &base.train_ds, &base.split.new_train)
        .map_err(|e| e.at_stage("cache"))?;
    if cfg.ablation.cache_noise > 0.0 {
        let mut rng = stream(cfg.seed, &[tag::CACHE_NOISE]);
        noisy
            .inject_class_noise(cfg.ablation.cache_noise, &mut rng)
            .map_err(|e| e.at_stage("cache"))?;
    }

    let mut points = Vec::new();
    for on in [true, false] {
        let method = MethodConfig::MixBCT {
            alpha: cfg.method.alpha,
            denoise: on,
            exclusion_fraction: cfg.method.exclusion_fraction,
        };
        let label = if on { "denoise-on" } else { "denoise-off" };
        let dir = base.root.join(label);
        let report = if on {
            denoise(noisy.clone(), cfg.method.exclusion_fraction)
                .map_err(|e| e.at_stage("cache"))
                .and_then(|cache| run_point(&base, cfg, &dir, method, Some(&cache)))
        } else {
            run_point(&base, cfg, &dir, method, Some(&noisy))
        };
        points.push(AblationPoint { label: label.into(), dir, report });
    }

    write_grid_csv(&base.root, &points)?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::scenario::tests::tiny_config;

    fn tiny_ablation_config(out: &Path) -> RunConfig {
        let mut cfg = tiny_config(out);
        cfg.apply("ablation.alphas", "0,0.3").unwrap();
        cfg.apply("eval.audit_trials", "0").unwrap();
        cfg.apply("eval.chance_permutations", "0").unwrap();
        cfg
    }

    #[test]
    fn alpha_grid_shares_the_old_model_and_zero_matches_nocompat() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_ablation_config(dir.path());
        let points = run_ablation_alpha(&cfg).unwrap();
        assert_eq!(points.len(), 3, "nocompat reference plus two grid points");

        let old_bytes: Vec<Vec<u8>> = points
            .iter()
            .map(|p| std::fs::read(p.dir.join("old.model")).unwrap())
            .collect();
        assert!(
            old_bytes.windows(2).all(|w| w[0] == w[1]),
            "every point reuses the identical old model bytes"
        );

        let nocompat = points[0].report.as_ref().unwrap();
        let alpha0 = points[1].report.as_ref().unwrap();
        assert_eq!(points[1].label, "alpha-0");
        let pairs = [
            (nocompat.cross_test.verification[0].value, alpha0.cross_test.verification[0].value),
            (nocompat.self_test.verification[0].value, alpha0.self_test.verification[0].value),
            (nocompat.avg, alpha0.avg),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() <= 1e-12, "alpha=0 must degenerate to plain training: {a} vs {b}");
        }

        let csv = std::fs::read_to_string(dir.path().join(format!("ablate-alpha-s{}", cfg.seed)).join("ablation.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4, "header plus one row per point");
        assert!(lines[1].starts_with("nocompat,ok,"));
        assert!(lines[2].starts_with("alpha-0,ok,"));
    }

    #[test]
    fn denoise_grid_emits_both_rows_against_one_corrupted_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_ablation_config(dir.path());
        // At 8 samples per class the default 10% exclusion floors to zero
        // rows; a quarter actually strips flags so the two caches differ.
        cfg.apply("method.exclusion_fraction", "0.25").unwrap();
        let points = run_ablation_denoise(&cfg).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.report.is_ok()));
        let on = std::fs::read(points[0].dir.join("cache.bctf")).unwrap();
        let off = std::fs::read(points[1].dir.join("cache.bctf")).unwrap();
        assert_ne!(on, off, "the on-row cache carries exclusion flags the off-row lacks");
    }

    #[test]
    fn a_failing_point_is_flagged_but_does_not_stop_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_ablation_config(dir.path());
        // alpha > 1 violates the mix contract at training time.
        cfg.apply("ablation.alphas", "0.3,1.5").unwrap();
        let points = run_ablation_alpha(&cfg).unwrap();
        assert!(points[1].report.is_ok());
        assert!(points[2].report.is_err(), "the bad point fails alone");
        let csv = std::fs::read_to_string(dir.path().join(format!("ablate-alpha-s{}", cfg.seed)).join("ablation.csv")).unwrap();
        assert!(csv.contains("alpha-1.5,\"error: "), "failure lands in the table: {csv}");
    }
}
