//! Backward-pass wall clock against policy size for each Hessian strategy.
//!
//! `cargo run --release --example runtime_scaling -- [sides...]`

use dfmdp::diffmdp::Strategy;
use dfmdp::harness::{loglog_slope, runtime, RuntimeConfig};
use dfmdp::mdp::Domain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sides: Vec<usize> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    if sides.is_empty() {
        sides = vec![4, 6, 8, 12, 16];
    }
    let cfg = RuntimeConfig::new(Domain::Gridworld, vec![Strategy::Full, Strategy::Identity, Strategy::Woodbury], sides);
    let rows = runtime(&cfg)?;
    println!("{:<9} {:>5} {:>6} {:>12}  status", "strategy", "side", "n", "median_ms");
    for r in &rows {
        let ms = r.median_ms.map_or("-".to_string(), |m| format!("{m:.2}"));
        println!("{:<9} {:>5} {:>6} {:>12}  {}", format!("{:?}", r.strategy), r.size, r.n, ms, r.status);
    }
    for s in [Strategy::Full, Strategy::Identity, Strategy::Woodbury] {
        if let Some(b) = loglog_slope(&rows, s) {
            println!("{s:?}: time ~ n^{b:.2}");
        }
    }
    Ok(())
}
