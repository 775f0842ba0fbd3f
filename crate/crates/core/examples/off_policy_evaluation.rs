//! CWPDIS value, effective sample size and policy gradient of the off-policy score.

use dfmdp::env::{Env, UniformPolicy};
use dfmdp::mdp::{Domain, EnvSpec};
use dfmdp::ope::{eval_grad, eval_metric, OpeConfig};
use dfmdp::solver::{solve, SolverSettings};

fn main() -> Result<(), dfmdp::Error> {
    let env = Env::from_spec(&EnvSpec::default_for(Domain::Gridworld));
    let theta = env.generate_params(&mut dfmdp::seed::rng(4));
    let logged = env.simulate(&theta, &UniformPolicy(env.n_actions()), 100, 5, false)?;
    let cfg = OpeConfig::new(env.gamma(), 1.0);

    let planned = solve(&env, &theta, &SolverSettings::forward(Domain::Gridworld), 0, None)?.policy;
    // all-zero Q gives the uniform softmax, so every ratio is one
    let uniform = planned.with_params(&vec![0.0; planned.n_params()]);

    for (name, pi) in [("uniform", &uniform), ("planned", &planned)] {
        let r = eval_metric(&logged, pi, &cfg)?;
        println!(
            "{name:>8}: value {:.3}  ess {:.1} / {}  eval {:.3}  ratios [{:.2e}, {:.2e}]",
            r.cwpdis_value,
            r.ess,
            logged.len() * env.horizon(),
            r.eval,
            r.min_ratio,
            r.max_ratio
        );
    }
    let (value, grad): (f64, Vec<f64>) = eval_grad(&logged, &planned, &cfg)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("dEval/dπ at the planned policy: |g| = {norm:.4} over {} Q entries (eval {value:.3})", grad.len());
    Ok(())
}
