//! Trains several methods on one generated dataset and prints test scores.
//!
//! cargo run --release --example compare_methods -- gridworld near_optimal 3 20 ts,pg-w [lambda] [c]

use std::time::Instant;

use dfmdp::harness::{generate_dataset, GenerateConfig};
use dfmdp::mdp::{Domain, EnvSpec, Regime, Split};
use dfmdp::training::{evaluate_split, train, Method, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let domain: Domain = args.first().map_or("gridworld", String::as_str).parse()?;
    let regime: Regime = args.get(1).map_or("near_optimal", String::as_str).parse()?;
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;
    let epochs: usize = args.get(3).map_or(Ok(10), |s| s.parse())?;
    let methods: Vec<Method> =
        args.get(4).map_or("ts,pg-w", String::as_str).split(',').map(str::parse).collect::<Result<_, _>>()?;

    let start = Instant::now();
    let ds = generate_dataset(&GenerateConfig::new(EnvSpec::default_for(domain), regime, seed))?;
    println!("{domain} {} dataset in {:.1?}", regime.name(), start.elapsed());

    for m in methods {
        let mut cfg = TrainConfig { epochs, ..TrainConfig::new(m, seed) };
        if let Some(l) = args.get(5) {
            cfg.lambda = l.parse()?;
        }
        if let Some(c) = args.get(6) {
            cfg.c = c.parse()?;
        }
        let start = Instant::now();
        let out = train(&ds, &cfg)?;
        let elapsed = start.elapsed();
        let test = evaluate_split(&out.model, &ds, Split::Test, cfg.lambda_ess)?;
        let first = out.log.mean_loss(1, Split::Train).unwrap_or(f64::NAN);
        let last = out.log.mean_loss(epochs, Split::Train).unwrap_or(f64::NAN);
        println!(
            "{m:>12}: test {:.3} ± {:.3}  (epoch {} chosen, loss {first:.3} -> {last:.3}, {:.1?}, {} warnings)",
            test.mean,
            test.stderr,
            out.log.chosen_epoch,
            elapsed,
            out.log.warnings.len()
        );
        for e in (1..=epochs).step_by((epochs / 10).max(1)) {
            println!(
                "    epoch {e:3}: train ope {:.3}  val ope {:.3}",
                out.log.mean_ope(e, Split::Train).unwrap_or(f64::NAN),
                out.log.mean_ope(e, Split::Val).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
