//! Chains three model generations — each trained compatibly against its
//! predecessor only — and measures every gallery/query pairing, including the
//! skip-generation one (third-generation queries against the first
//! generation's gallery) that transitivity has to earn.
//!
//! Run with `cargo run --release --example sequential_chain`.

use bct_lab::lab::{run_sequential, RunConfig};
use bct_lab::Result;

fn main() -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.out = std::env::temp_dir().join("bct-lab-examples/sequential");
    // Generation 1 sees the first 30% of classes, generation 2 the first
    // 70%, generation 3 all of them; each trains against the previous one.
    cfg.sequential.fractions = (0.3, 0.7);
    cfg.eval.audit_trials = 0;
    cfg.eval.chance_permutations = 0;

    let out = run_sequential(&cfg)?;

    println!("TAR@FAR=0.01, rows = gallery generation, columns = query generation\n");
    println!("{:>8} {:>8} {:>8} {:>8}", "", "phi1", "phi2", "phi3");
    for (g, row) in out.tar.iter().enumerate() {
        print!("{:>8}", format!("phi{}", g + 1));
        for v in row {
            print!(" {v:>8.4}");
        }
        println!();
    }

    let direct = out.tar[0][0];
    let skip = out.tar[0][2];
    println!("\nphi1 self-test {direct:.4} vs phi3 queries on the phi1 gallery {skip:.4}");
    println!(
        "two upgrades later, old galleries {} usable without backfill",
        if skip > direct { "remain" } else { "are no longer" }
    );
    println!("\nartifacts: {}", out.run_dir.display());
    Ok(())
}
