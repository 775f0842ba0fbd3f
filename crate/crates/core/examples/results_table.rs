//! Trains a few short runs into a directory tree and aggregates them into a results table.

use dfmdp::harness::{build_table, collect_results, generate_file, train_run, GenerateConfig, RunConfig, TABLE_METHODS};
use dfmdp::mdp::{Domain, EnvSpec, Regime};
use dfmdp::training::{Method, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("dfmdp-table-example");
    let data = root.join("gridworld.json");
    std::fs::create_dir_all(&root)?;
    let gen = GenerateConfig { trajectories: 40, ..GenerateConfig::new(EnvSpec::default_for(Domain::Gridworld), Regime::Random, 0) };
    generate_file(&gen, &data, true)?;

    for method in [Method::Ts, Method::PgId] {
        for seed in 0..2 {
            let cfg = RunConfig::train(&data, TrainConfig { epochs: 2, k: 20, ..TrainConfig::new(method, seed) })?;
            train_run(&cfg, &root.join(format!("{method}/seed-{seed}")), true)?;
        }
    }
    let results: Vec<_> = collect_results(&root)?.into_iter().map(|(_, r)| r).collect();
    println!("{:<10} {:<8} {:<11} {:>3} {:>9} {:>8}", "domain", "regime", "method", "n", "mean", "stderr");
    for r in build_table(&results, &TABLE_METHODS) {
        let flag = if r.missing { "  (missing)" } else { "" };
        println!("{:<10} {:<8} {:<11} {:>3} {:>9.3} {:>8.3}{flag}", r.domain, r.regime, r.method, r.n_seeds, r.mean, r.stderr);
    }
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
