//! Reverse-mode gradient of a small network loss, checked against central differences.

use dfmdp::autodiff::{finite_diff_slice, Tape, Tensor};
use dfmdp::nn::Mlp;

fn loss(net: &Mlp, weights: &[f64], x: &Tensor, target: &[f64]) -> f64 {
    let mut probe = net.clone();
    probe.params.values_mut().copy_from_slice(weights);
    let y = probe.forward(x);
    y.data.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / target.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = Mlp::new(&[3, 8, 8, 2], &mut dfmdp::seed::rng(7));
    // three samples as columns
    let x = Tensor::new(3, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7, 1.5, 0.0, -0.2]);
    let target = [1.0, -1.0, 0.5, 0.0, 2.0, 1.0];

    let mut tape = Tape::new();
    let vars = tape.params(&net.params);
    let input = tape.leaf(x.clone());
    let y = net.record(&mut tape, &vars, input)?;
    let t = tape.leaf(Tensor::new(2, 3, target.to_vec()));
    let diff = tape.sub(y, t)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    let l = tape.scale(total, 1.0 / target.len() as f64);
    let grads = tape.backward(l)?;
    let g = vars.flat_grad(&grads);

    let fd = finite_diff_slice(|w| loss(&net, w, &x, &target), net.params.values(), 1e-6)?;
    let worst = g.iter().zip(&fd).map(|(a, b)| (a - b).abs() / b.abs().max(1e-8)).fold(0.0, f64::max);
    println!("loss {:.6}, {} parameters, {} tape nodes", tape.scalar_value(l), g.len(), tape.len());
    println!("max relative error vs central differences: {worst:.2e}");
    Ok(())
}
