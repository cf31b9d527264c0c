//! Run configuration: defaults, the `key = value` file format, and `--set`
//! overrides.
//!
//! A configuration is a flat list of dotted keys. Every key has a default, a
//! file may override any subset, and command-line `--set key=value` pairs win
//! over the file. `resolved_text` renders the effective configuration back
//! out in a fixed key order so a run directory always records exactly what it
//! ran with.

use std::path::{Path, PathBuf};

use crate::bct::MethodConfig;
use crate::data::Scenario;
use crate::error::{Error, Result};
use crate::model::{ClassifierKind, TrainConfig};

/// Parameters of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub classes: u32,
    pub per_class: usize,
    pub dim: usize,
    pub radius: f64,
    pub std: f64,
}

/// Where the dataset comes from and how much of it is held out per class for
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub generator: GeneratorConfig,
    /// When set, the dataset is loaded from this file instead of generated.
    pub file: Option<PathBuf>,
    pub eval_per_class: usize,
}

/// Classification loss selector for a model block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Softmax,
    Arcface,
}

/// Architecture and optimizer settings for one model generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Layer widths from input to embedding, e.g. `16,64,64,8`.
    pub widths: Vec<usize>,
    pub loss: LossKind,
    pub scale: f64,
    pub margin: f64,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    pub fn classifier_kind(&self) -> ClassifierKind {
        match self.loss {
            LossKind::Softmax => ClassifierKind::PlainSoftmax,
            LossKind::Arcface => {
                ClassifierKind::AngularMargin { scale: self.scale, margin: self.margin }
            }
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch,
            epochs: self.epochs,
            seed,
        }
    }
}

/// Compatibility method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    NoCompat,
    MixBct,
    L2Bct,
    ProtoBct,
}

/// Method selector plus the union of per-method knobs; only the fields of the
/// selected kind matter, so `--set method.kind=...` works in any order with
/// the knob overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodBlock {
    pub kind: MethodKind,
    pub alpha: f64,
    pub denoise: bool,
    pub exclusion_fraction: f64,
    pub lambda: f64,
    pub weight: f64,
}

impl MethodBlock {
    pub fn method(&self) -> MethodConfig {
        match self.kind {
            MethodKind::NoCompat => MethodConfig::NoCompat,
            MethodKind::MixBct => MethodConfig::MixBCT {
                alpha: self.alpha,
                denoise: self.denoise,
                exclusion_fraction: self.exclusion_fraction,
            },
            MethodKind::L2Bct => MethodConfig::L2BCT { lambda: self.lambda },
            MethodKind::ProtoBct => MethodConfig::ProtoBCT { weight: self.weight },
        }
    }
}

/// Evaluation protocol and reporting knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBlock {
    pub holdout: f64,
    pub distractors: f64,
    pub pairs_per_class: usize,
    pub fars: Vec<f64>,
    pub fpirs: Vec<f64>,
    /// Constraint-audit triplet count; 0 disables the audit.
    pub audit_trials: usize,
    /// Label permutations for the chance baseline; 0 disables it.
    pub chance_permutations: usize,
}

/// Grids for the two ablations.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationBlock {
    pub alphas: Vec<f64>,
    /// Fraction of cache rows corrupted before the denoise on/off comparison.
    pub cache_noise: f64,
}

/// Class-fraction boundaries for the three-model chain: the first model
/// trains on the first fraction of classes, the second on the second, the
/// third on all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialBlock {
    pub fractions: (f64, f64),
}

/// The complete, flat configuration of a run. One of these plus the master
/// seed determines every output byte.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub scenario: Scenario,
    pub fraction: f64,
    pub dataset: DatasetConfig,
    pub old: ModelConfig,
    pub new: ModelConfig,
    pub method: MethodBlock,
    pub eval: EvalBlock,
    pub ablation: AblationBlock,
    pub sequential: SequentialBlock,
}

impl Default for RunConfig {
    /// The headline desk-scale configuration: a narrow softmax old model in
    /// the low-quality regime, a wider angular-loss upgrade, batch mixing
    /// with denoising.
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            scenario: Scenario::OpenClass,
            fraction: 0.3,
            dataset: DatasetConfig {
                generator: GeneratorConfig {
                    classes: 50,
                    per_class: 60,
                    dim: 16,
                    radius: 4.0,
                    std: 0.55,
                },
                file: None,
                eval_per_class: 20,
            },
            old: ModelConfig {
                widths: vec![16, 12, 8],
                loss: LossKind::Softmax,
                scale: 30.0,
                margin: 0.3,
                lr0: 0.1,
                momentum: 0.9,
                weight_decay: 5e-4,
                epochs: 5,
                batch: 64,
            },
            new: ModelConfig {
                widths: vec![16, 64, 64, 8],
                loss: LossKind::Arcface,
                scale: 30.0,
                margin: 0.3,
                lr0: 0.1,
                momentum: 0.9,
                weight_decay: 5e-4,
                epochs: 30,
                batch: 16,
            },
            method: MethodBlock {
                kind: MethodKind::MixBct,
                alpha: 0.3,
                denoise: true,
                exclusion_fraction: 0.1,
                lambda: 5.0,
                weight: 2.0,
            },
            eval: EvalBlock {
                holdout: 1.0,
                distractors: 0.2,
                pairs_per_class: 20,
                fars: vec![0.01, 0.1],
                fpirs: vec![0.01, 0.1],
                audit_trials: 10_000,
                chance_permutations: 200,
            },
            ablation: AblationBlock {
                alphas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
                cache_noise: 0.2,
            },
            sequential: SequentialBlock { fractions: (0.3, 0.7) },
        }
    }
}

fn bad_value(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("key {key}: cannot parse {value:?} as {want}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| bad_value(key, value, want))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(bad_value(key, value, "bool")),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = value
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| bad_value(key, value, want)))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("key {key}: empty list")));
    }
    Ok(items)
}

fn parse_scenario(key: &str, value: &str) -> Result<Scenario> {
    match value.trim() {
        "extended_data" => Ok(Scenario::ExtendedData),
        "extended_class" => Ok(Scenario::ExtendedClass),
        "open_data" => Ok(Scenario::OpenData),
        "open_class" => Ok(Scenario::OpenClass),
        _ => Err(bad_value(key, value, "scenario name")),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` override. Unknown keys are config errors so
    /// typos never pass silently.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, value, "u64")?,
            "out" => self.out = PathBuf::from(value),
            "scenario" => self.scenario = parse_scenario(key, value)?,
            "fraction" => self.fraction = parse_num(key, value, "f64")?,

            "dataset.classes" => self.dataset.generator.classes = parse_num(key, value, "u32")?,
            "dataset.per_class" => {
                self.dataset.generator.per_class = parse_num(key, value, "usize")?
            }
            "dataset.dim" => self.dataset.generator.dim = parse_num(key, value, "usize")?,
            "dataset.radius" => self.dataset.generator.radius = parse_num(key, value, "f64")?,
            "dataset.std" => self.dataset.generator.std = parse_num(key, value, "f64")?,
            "dataset.file" => {
                self.dataset.file =
                    if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            "dataset.eval_per_class" => {
                self.dataset.eval_per_class = parse_num(key, value, "usize")?
            }

            _ if key.starts_with("old.") => Self::apply_model(&mut self.old, key, value)?,
            _ if key.starts_with("new.") => Self::apply_model(&mut self.new, key, value)?,

            "method.kind" => {
                self.method.kind = match value {
                    "nocompat" => MethodKind::NoCompat,
                    "mixbct" => MethodKind::MixBct,
                    "l2bct" => MethodKind::L2Bct,
                    "protobct" => MethodKind::ProtoBct,
                    _ => return Err(bad_value(key, value, "method kind")),
                }
            }
            "method.alpha" => self.method.alpha = parse_num(key, value, "f64")?,
            "method.denoise" => self.method.denoise = parse_bool(key, value)?,
            "method.exclusion_fraction" => {
                self.method.exclusion_fraction = parse_num(key, value, "f64")?
            }
            "method.lambda" => self.method.lambda = parse_num(key, value, "f64")?,
            "method.weight" => self.method.weight = parse_num(key, value, "f64")?,

            "eval.holdout" => self.eval.holdout = parse_num(key, value, "f64")?,
            "eval.distractors" => self.eval.distractors = parse_num(key, value, "f64")?,
            "eval.pairs_per_class" => self.eval.pairs_per_class = parse_num(key, value, "usize")?,
            "eval.fars" => self.eval.fars = parse_list(key, value, "f64")?,
            "eval.fpirs" => self.eval.fpirs = parse_list(key, value, "f64")?,
            "eval.audit_trials" => self.eval.audit_trials = parse_num(key, value, "usize")?,
            "eval.chance_permutations" => {
                self.eval.chance_permutations = parse_num(key, value, "usize")?
            }

            "ablation.alphas" => self.ablation.alphas = parse_list(key, value, "f64")?,
            "ablation.cache_noise" => self.ablation.cache_noise = parse_num(key, value, "f64")?,

            "sequential.fractions" => {
                let v: Vec<f64> = parse_list(key, value, "f64")?;
                if v.len() != 2 {
                    return Err(Error::Config(format!(
                        "key {key}: expected exactly two fractions, got {}",
                        v.len()
                    )));
                }
                self.sequential.fractions = (v[0], v[1]);
            }

            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn apply_model(model: &mut ModelConfig, key: &str, value: &str) -> Result<()> {
        let field = key.split_once('.').map(|(_, f)| f).unwrap_or("");
        match field {
            "widths" => {
                model.widths = parse_list(key, value, "usize")?;
                if model.widths.len() < 2 {
                    return Err(Error::Config(format!(
                        "key {key}: need at least input and embedding widths"
                    )));
                }
            }
            "loss" => {
                model.loss = match value {
                    "softmax" => LossKind::Softmax,
                    "arcface" => LossKind::Arcface,
                    _ => return Err(bad_value(key, value, "loss kind")),
                }
            }
            "scale" => model.scale = parse_num(key, value, "f64")?,
            "margin" => model.margin = parse_num(key, value, "f64")?,
            "lr0" => model.lr0 = parse_num(key, value, "f64")?,
            "momentum" => model.momentum = parse_num(key, value, "f64")?,
            "weight_decay" => model.weight_decay = parse_num(key, value, "f64")?,
            "epochs" => model.epochs = parse_num(key, value, "usize")?,
            "batch" => model.batch = parse_num(key, value, "usize")?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a whole config file: `key = value` lines, `#` comments, blank
    /// lines. Later lines win over earlier ones.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    /// Builds the effective configuration: defaults, then the optional file,
    /// then `--set key=value` pairs in order.
    pub fn load(file: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            cfg.apply_text(&text)?;
        }
        for pair in sets {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects key=value, got {pair:?}"))
            })?;
            cfg.apply(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that do not need the data: dimensions line up and
    /// fractions sit in their ranges. Deeper validation happens in the ops.
    pub fn validate(&self) -> Result<()> {
        if self.old.embed_dim() != self.new.embed_dim() {
            return Err(Error::Config(format!(
                "old and new models must share one embedding space: {} vs {}",
                self.old.embed_dim(),
                self.new.embed_dim()
            )));
        }
        if self.dataset.file.is_none() {
            let dim = self.dataset.generator.dim;
            for (name, m) in [("old", &self.old), ("new", &self.new)] {
                if m.widths[0] != dim {
                    return Err(Error::Config(format!(
                        "{name}.widths starts at {} but the generated data has dim {dim}",
                        m.widths[0]
                    )));
                }
            }
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!(
                "fraction must lie in (0,1), got {}",
                self.fraction
            )));
        }
        for (name, list) in [("eval.fars", &self.eval.fars), ("eval.fpirs", &self.eval.fpirs)] {
            for &v in list.iter() {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!("{name} entries must lie in (0,1]: {v}")));
                }
            }
        }
        let (f1, f2) = self.sequential.fractions;
        if !(f1 > 0.0 && f1 < f2 && f2 < 1.0) {
            return Err(Error::Config(format!(
                "sequential.fractions must satisfy 0 < {f1} < {f2} < 1"
            )));
        }
        Ok(())
    }

    /// Renders every key in a fixed order. Parsing this text back yields an
    /// equal configuration, and equal configurations render identically.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("scenario", self.scenario.name().to_string());
        kv("fraction", self.fraction.to_string());
        kv("dataset.classes", self.dataset.generator.classes.to_string());
        kv("dataset.per_class", self.dataset.generator.per_class.to_string());
        kv("dataset.dim", self.dataset.generator.dim.to_string());
        kv("dataset.radius", self.dataset.generator.radius.to_string());
        kv("dataset.std", self.dataset.generator.std.to_string());
        if let Some(f) = &self.dataset.file {
            kv("dataset.file", f.display().to_string());
        }
        kv("dataset.eval_per_class", self.dataset.eval_per_class.to_string());
        for (prefix, m) in [("old", &self.old), ("new", &self.new)] {
            kv(&format!("{prefix}.widths"), join(&m.widths));
            kv(
                &format!("{prefix}.loss"),
                match m.loss {
                    LossKind::Softmax => "softmax".into(),
                    LossKind::Arcface => "arcface".into(),
                },
            );
            kv(&format!("{prefix}.scale"), m.scale.to_string());
            kv(&format!("{prefix}.margin"), m.margin.to_string());
            kv(&format!("{prefix}.lr0"), m.lr0.to_string());
            kv(&format!("{prefix}.momentum"), m.momentum.to_string());
            kv(&format!("{prefix}.weight_decay"), m.weight_decay.to_string());
            kv(&format!("{prefix}.epochs"), m.epochs.to_string());
            kv(&format!("{prefix}.batch"), m.batch.to_string());
        }
        kv(
            "method.kind",
            match self.method.kind {
                MethodKind::NoCompat => "nocompat".into(),
                MethodKind::MixBct => "mixbct".into(),
                MethodKind::L2Bct => "l2bct".into(),
                MethodKind::ProtoBct => "protobct".into(),
            },
        );
        kv("method.alpha", self.method.alpha.to_string());
        kv("method.denoise", self.method.denoise.to_string());
        kv("method.exclusion_fraction", self.method.exclusion_fraction.to_string());
        kv("method.lambda", self.method.lambda.to_string());
        kv("method.weight", self.method.weight.to_string());
        kv("eval.holdout", self.eval.holdout.to_string());
        kv("eval.distractors", self.eval.distractors.to_string());
        kv("eval.pairs_per_class", self.eval.pairs_per_class.to_string());
        kv("eval.fars", join(&self.eval.fars));
        kv("eval.fpirs", join(&self.eval.fpirs));
        kv("eval.audit_trials", self.eval.audit_trials.to_string());
        kv("eval.chance_permutations", self.eval.chance_permutations.to_string());
        kv("ablation.alphas", join(&self.ablation.alphas));
        kv("ablation.cache_noise", self.ablation.cache_noise.to_string());
        kv(
            "sequential.fractions",
            format!("{},{}", self.sequential.fractions.0, self.sequential.fractions.1),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_a_resolve_parse_round_trip() {
        let cfg = RunConfig::default();
        let mut reparsed = RunConfig::default();
        reparsed.apply_text(&cfg.resolved_text()).expect("resolved text must parse");
        assert_eq!(cfg, reparsed);
        assert_eq!(cfg.resolved_text(), reparsed.resolved_text());
    }

    #[test]
    fn set_overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 7\nnew.epochs = 3   # trimmed for testing\n").unwrap();
        let cfg =
            RunConfig::load(Some(&path), &["seed=9".into(), "method.kind=l2bct".into()]).unwrap();
        assert_eq!(cfg.seed, 9, "--set wins over the file");
        assert_eq!(cfg.new.epochs, 3, "file wins over the default");
        assert_eq!(cfg.method.kind, MethodKind::L2Bct);
        assert!(matches!(cfg.method.method(), MethodConfig::L2BCT { .. }));
    }

    #[test]
    fn unknown_and_malformed_keys_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.apply("no.such.key", "1").unwrap_err().exit_code(), 2);
        assert_eq!(cfg.apply("seed", "pony").unwrap_err().exit_code(), 2);
        assert_eq!(cfg.apply_text("just some words\n").unwrap_err().exit_code(), 2);
        assert_eq!(
            RunConfig::load(None, &["seed 7".into()]).unwrap_err().exit_code(),
            2,
            "--set without an equals sign is rejected"
        );
    }

    #[test]
    fn validation_catches_dimension_mismatches() {
        let mut cfg = RunConfig::default();
        cfg.apply("new.widths", "16,64,64,4").unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("embedding space"));

        let mut cfg = RunConfig::default();
        cfg.apply("dataset.dim", "24").unwrap();
        assert!(cfg.validate().is_err(), "generator dim must match the input widths");
    }

    #[test]
    fn method_knobs_flow_into_the_selected_variant() {
        let mut cfg = RunConfig::default();
        cfg.apply("method.alpha", "0.4").unwrap();
        cfg.apply("method.denoise", "off").unwrap();
        match cfg.method.method() {
            MethodConfig::MixBCT { alpha, denoise, .. } => {
                assert_eq!(alpha, 0.4);
                assert!(!denoise);
            }
            other => panic!("expected the mix method, got {other:?}"),
        }
        let kind = cfg.new.classifier_kind();
        assert!(matches!(kind, ClassifierKind::AngularMargin { scale, margin }
            if scale == 30.0 && margin == 0.3));
        let tc = cfg.old.train_config(5);
        assert_eq!((tc.epochs, tc.batch_size, tc.seed), (5, 64, 5));
    }
}
