//! One decision-focused backward pass on a gridworld instance with each Hessian strategy.

use std::time::Instant;

use dfmdp::diffmdp::{sample_stats, theta_gradient, BackwardConfig, Mode, Strategy};
use dfmdp::env::{Env, UniformPolicy};
use dfmdp::mdp::{Domain, EnvSpec};
use dfmdp::ope::{eval_grad, OpeConfig};
use dfmdp::solver::{solve, SolverSettings};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn main() -> Result<(), dfmdp::Error> {
    let env = Env::from_spec(&EnvSpec::default_for(Domain::Gridworld));
    let theta = env.generate_params(&mut dfmdp::seed::rng(2));
    let policy = solve(&env, &theta, &SolverSettings::forward(Domain::Gridworld), 0, None)?.policy;
    let logged = env.simulate(&theta, &UniformPolicy(env.n_actions()), 100, 9, false)?;
    let (eval, g_pi) = eval_grad(&logged, &policy, &OpeConfig::new(env.gamma(), 1.0))?;
    println!("eval {eval:.3}; policy has {} parameters, θ has {}", policy.n_params(), theta.len());

    for mode in [Mode::Pg, Mode::Bellman] {
        let batch = sample_stats(&env, &theta, &policy, 100, 11, mode)?;
        let mut reference = None;
        for strategy in [Strategy::Full, Strategy::Woodbury, Strategy::Identity] {
            let cfg = BackwardConfig::new(mode, strategy);
            let start = Instant::now();
            let r = theta_gradient(&g_pi, &batch, &theta, &policy, &cfg)?;
            let t = start.elapsed();
            let full = reference.get_or_insert_with(|| r.g_theta.clone());
            println!(
                "{mode:?} {strategy:?}: {t:.2?}, |dEval/dθ| {:.3e}, cosine to full {:+.3}{}",
                r.g_theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
                cosine(&r.g_theta, full),
                if r.ridged { " (regularized)" } else { "" }
            );
        }
    }
    Ok(())
}
