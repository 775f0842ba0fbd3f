//! Solves (UVᵀ + cI)y = g through the k × k Woodbury core and compares with a dense LU solve.

use dfmdp::diffmdp::{woodbury_solve, LowRankHessian};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = dfmdp::seed::rng(3);
    let (n, k) = (400, 20);
    let mut draw = |r, c| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0) / (n as f64).sqrt());
    let u = draw(n, k);
    let v = draw(n, k);
    let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();

    for c in [-1.0, 0.5, 2.0] {
        let h = LowRankHessian::new(u.clone(), Some(v.clone()), c)?;
        let start = std::time::Instant::now();
        let r = woodbury_solve(&h, &g)?;
        let t_w = start.elapsed();
        let start = std::time::Instant::now();
        let dense = h.dense().lu().solve(&DVector::from_column_slice(&g)).ok_or("singular")?;
        let t_d = start.elapsed();
        let diff = r.y.iter().zip(dense.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("c = {c:+}: max |Δy| {diff:.1e}, core condition {:.1}, woodbury {t_w:.2?}, dense {t_d:.2?}", r.condition);
    }
    Ok(())
}
