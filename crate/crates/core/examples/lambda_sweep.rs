//! Sweeps the predictive-loss weight λ for Bellman-W on a small snare dataset.

use dfmdp::harness::{generate_dataset, select_by_validation, sweep, GenerateConfig, SweepParam};
use dfmdp::mdp::{Domain, EnvSpec, Regime};
use dfmdp::training::{Method, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = EnvSpec { size: 8, horizon: 10, ..EnvSpec::default_for(Domain::Snare) };
    let gen = GenerateConfig { n_train: 3, n_test: 1, trajectories: 50, ..GenerateConfig::new(spec, Regime::Random, 1) };
    let ds = generate_dataset(&gen)?;
    let base = TrainConfig { epochs: 3, k: 30, ..TrainConfig::new(Method::BellmanW, 1) };
    let rows = sweep(&ds, &base, SweepParam::Lambda, &[0.0, 0.1, 1.0, 10.0])?;
    for r in &rows {
        println!("λ = {:<5} val {:>8.3}  test {:>8.3}", r.value, r.val_ope.unwrap_or(f64::NAN), r.test_mean);
    }
    if let Some(best) = select_by_validation(&rows) {
        println!("validation picks λ = {}", best.value);
    }
    Ok(())
}
