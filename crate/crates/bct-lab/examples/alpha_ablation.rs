//! Sweeps the mix ratio — the fraction of each batch's embeddings replaced by
//! cached old features — and prints how the cross-test/self-test balance
//! moves. Uses the same grid driver as `bct-lab ablate-alpha`, so the run
//! directory it reports contains the full per-point artifacts.
//!
//! Run with `cargo run --release --example alpha_ablation`.

use bct_lab::lab::{run_ablation_alpha, RunConfig};
use bct_lab::Result;

fn main() -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.out = std::env::temp_dir().join("bct-lab-examples/alpha");
    cfg.ablation.alphas = vec![0.0, 0.1, 0.3, 0.5];
    cfg.eval.audit_trials = 0;
    cfg.eval.chance_permutations = 0;

    println!("sweeping alpha over {:?} (plus a no-compatibility reference)\n", cfg.ablation.alphas);
    let points = run_ablation_alpha(&cfg)?;

    println!("{:<10} {:>10} {:>10}", "point", "cross", "self");
    for p in &points {
        match &p.report {
            Ok(r) => println!(
                "{:<10} {:>10.4} {:>10.4}",
                p.label,
                r.cross_test.verification[0].value,
                r.self_test.verification[0].value
            ),
            Err(e) => println!("{:<10} failed: {e}", p.label),
        }
    }

    println!("\nalpha-0 must match the nocompat reference exactly (mixing nothing");
    println!("is the same training run); larger ratios buy cross-test accuracy");
    println!("until replaced batches crowd out the new data's own signal.");
    println!("\nartifacts: {}", cfg.out.join(format!("ablate-alpha-s{}", cfg.seed)).display());
    Ok(())
}
