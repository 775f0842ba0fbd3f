//! Two-stage and decision-focused training on gridworld, with per-epoch validation scores.
//!
//! cargo run --release --example train_gridworld -- [seed] [epochs]

use dfmdp::harness::{generate_dataset, GenerateConfig};
use dfmdp::mdp::{Domain, EnvSpec, Regime, Split};
use dfmdp::training::{evaluate_split, train, Method, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let epochs: usize = args.next().map_or(Ok(30), |s| s.parse())?;
    let ds = generate_dataset(&GenerateConfig::new(EnvSpec::default_for(Domain::Gridworld), Regime::NearOptimal, seed))?;

    for (method, c) in [(Method::Ts, 1.0), (Method::PgW, 0.1)] {
        let cfg = TrainConfig { epochs, c, ..TrainConfig::new(method, seed) };
        let out = train(&ds, &cfg)?;
        let val: Vec<String> =
            (1..=epochs).step_by((epochs / 6).max(1)).map(|e| format!("{e}:{:.2}", out.log.mean_ope(e, Split::Val).unwrap_or(f64::NAN))).collect();
        let test = evaluate_split(&out.model, &ds, Split::Test, cfg.lambda_ess)?;
        println!("{method:>6}: validation {}", val.join(" "));
        println!("{method:>6}: epoch {} chosen, test {:.3} ± {:.3}", out.log.chosen_epoch, test.mean, test.stderr);
    }
    Ok(())
}
