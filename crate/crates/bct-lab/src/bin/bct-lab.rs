//! Batch driver for the compatible-training laboratory.
//!
//! Every subcommand resolves one configuration from defaults → `--config`
//! file → repeated `--set key=value` overrides, then runs a library pipeline.
//! Exit codes: 0 success, 2 config/usage error, 3 numeric fault, 4 io error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bct_lab::data::{load_dataset, save_dataset};
use bct_lab::error::Result;
use bct_lab::eval::{build_eval_protocol, run_eval, write_report_files};
use bct_lab::lab::{
    export_scatter, run_ablation_alpha, run_ablation_denoise, run_scenario, run_sequential,
    RunConfig,
};
use bct_lab::model::{extract_features, load_model};

#[derive(Parser)]
#[command(name = "bct-lab", version, about = "Backward-compatible embedding training laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. `--seed` and `--out` are shorthands
/// that win over both the file and `--set`.
#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Individual key override, repeatable: --set new.epochs=10
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.sets)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset and write it to disk.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Run one full scenario: old model, cache, compatible new model, bounds,
    /// evaluation report.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the batch-replacement ratio over the configured alpha grid.
    AblateAlpha {
        #[command(flatten)]
        common: Common,
    },
    /// Compare denoising on vs off against a deliberately corrupted cache.
    AblateDenoise {
        #[command(flatten)]
        common: Common,
    },
    /// Train the three-generation chain and emit its cross-scoring matrix.
    Sequential {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate two existing model files against a stored dataset.
    EvalOnly {
        #[command(flatten)]
        common: Common,
        /// Gallery-side model file.
        #[arg(long)]
        old: PathBuf,
        /// Query-side model file.
        #[arg(long)]
        new: PathBuf,
        /// Dataset file the protocol is built over.
        #[arg(long)]
        data: PathBuf,
    },
    /// Project a model's embeddings of a stored dataset to 2-D and write an
    /// SVG scatter.
    Scatter {
        #[command(flatten)]
        common: Common,
        /// Model whose embeddings are plotted; omitted = plot raw features.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset file to embed.
        #[arg(long)]
        data: PathBuf,
    },
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let g = &cfg.dataset.generator;
    let ds = bct_lab::data::generate_synthetic(
        g.classes,
        g.per_class,
        g.dim,
        g.radius,
        g.std,
        cfg.seed,
    )?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("dataset.bctd");
    save_dataset(&ds, &path)?;
    println!("wrote {} samples in {} classes to {}", ds.len(), ds.num_classes(), path.display());
    Ok(())
}

fn eval_only(cfg: &RunConfig, old: &PathBuf, new: &PathBuf, data: &PathBuf) -> Result<()> {
    let (old_bb, _) = load_model(old)?;
    let (new_bb, _) = load_model(new)?;
    let ds = load_dataset(data)?;
    let protocol = build_eval_protocol(
        &ds,
        cfg.eval.holdout,
        cfg.eval.distractors,
        cfg.eval.pairs_per_class,
        cfg.seed,
    )?;
    let report = run_eval(&old_bb, &new_bb, &protocol, &ds, &cfg.eval.fars, &cfg.eval.fpirs)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_report_files(&cfg.out, &[("eval", &report)])?;
    println!(
        "cross-test TAR@{} = {:.4}; report in {}",
        cfg.eval.fars[0],
        report.cross_test.verification[0].value,
        cfg.out.display()
    );
    Ok(())
}

fn scatter(cfg: &RunConfig, model: Option<&PathBuf>, data: &PathBuf) -> Result<()> {
    let ds = load_dataset(data)?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("scatter.svg");
    match model {
        Some(m) => {
            let (bb, _) = load_model(m)?;
            let rows: Vec<usize> = (0..ds.len()).collect();
            let feats = extract_features(&bb, &ds, &rows)?;
            export_scatter(feats.view(), ds.labels(), &path)?;
        }
        None => export_scatter(ds.features().view(), ds.labels(), &path)?,
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { common } => gen_data(&common.resolve()?),
        Command::Run { common } => {
            let cfg = common.resolve()?;
            let outcome = run_scenario(&cfg)?;
            println!(
                "lower self TAR@{far} = {lower:.4}; {name} cross = {cross:.4}, self = {selft:.4}; \
                 upper self = {upper:.4}; report in {dir}",
                far = cfg.eval.fars[0],
                lower = outcome.lower.self_test.verification[0].value,
                name = cfg.method.method().name(),
                cross = outcome.method.cross_test.verification[0].value,
                selft = outcome.method.self_test.verification[0].value,
                upper = outcome.upper.self_test.verification[0].value,
                dir = outcome.run_dir.display()
            );
            Ok(())
        }
        Command::AblateAlpha { common } => {
            let cfg = common.resolve()?;
            let points = run_ablation_alpha(&cfg)?;
            report_grid(&points);
            Ok(())
        }
        Command::AblateDenoise { common } => {
            let cfg = common.resolve()?;
            let points = run_ablation_denoise(&cfg)?;
            report_grid(&points);
            Ok(())
        }
        Command::Sequential { common } => {
            let cfg = common.resolve()?;
            let outcome = run_sequential(&cfg)?;
            println!("gallery-by-query TAR matrix at FAR={}:", cfg.eval.fars[0]);
            for (i, row) in outcome.tar.iter().enumerate() {
                println!("  phi{}: {:.4} {:.4} {:.4}", i + 1, row[0], row[1], row[2]);
            }
            println!("details in {}", outcome.run_dir.display());
            Ok(())
        }
        Command::EvalOnly { common, old, new, data } => {
            eval_only(&common.resolve()?, old, new, data)
        }
        Command::Scatter { common, model, data } => {
            scatter(&common.resolve()?, model.as_ref(), data)
        }
    }
}

fn report_grid(points: &[bct_lab::lab::AblationPoint]) {
    for p in points {
        match &p.report {
            Ok(r) => println!(
                "{}: cross = {:.4}, self = {:.4}, avg = {:.4}",
                p.label,
                r.cross_test.verification[0].value,
                r.self_test.verification[0].value,
                r.avg
            ),
            Err(e) => println!("{}: failed ({e})", p.label),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
