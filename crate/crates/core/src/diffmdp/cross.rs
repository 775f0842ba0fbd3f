use super::{CrossVariant, DiffError, StatsBatch, TrajStats};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (o, v) in out.iter_mut().zip(x) {
            *o += a * v;
        }
    }
}

/// yᵀ ∇²_{θπ}J as a length-`d` vector, from first-order statistics only.
pub fn cross_vjp(batch: &StatsBatch, y: &[f64], d: usize, variant: CrossVariant) -> Result<Vec<f64>, DiffError> {
    let n = batch.policy_dim();
    if y.len() != n {
        return Err(DiffError::Dimension(format!("y has length {} but the policy has {n} parameters", y.len())));
    }
    let mut out = vec![0.0; d];
    for (s, &w) in batch.stats.iter().zip(&batch.weights) {
        match s {
            TrajStats::Pg(p) => {
                if p.g_logp_theta.len() != d {
                    return Err(DiffError::Dimension(format!("θ gradient length {} != {d}", p.g_logp_theta.len())));
                }
                axpy(&mut out, w * dot(y, &p.g_phi), &p.g_logp_theta);
                // Σ_i (y·∇log π_i) ∇_θ c_i = Σ_j γ^j e_{r_j} Σ_{i≤j} (y·∇log π_i)
                let mut running = 0.0;
                for (j, rp) in p.reward_params.iter().enumerate() {
                    if let Some(g) = p.step_grads.get(j) {
                        running += dot(y, g);
                    }
                    if let Some(r) = rp {
                        if *r >= d {
                            return Err(DiffError::Dimension(format!("reward parameter {r} out of range {d}")));
                        }
                        out[*r] += w * running * p.gamma.powi(j as i32 + 1);
                    }
                }
            }
            TrajStats::Bellman(b) => {
                if b.g_delta_theta.len() != d || b.g_logp_theta.len() != d {
                    return Err(DiffError::Dimension(format!("θ gradient length {} != {d}", b.g_delta_theta.len())));
                }
                let yd = dot(y, &b.g_delta_pi);
                axpy(&mut out, w * yd, &b.g_delta_theta);
                if variant == CrossVariant::WithDelta {
                    axpy(&mut out, w * yd * b.delta, &b.g_logp_theta);
                    axpy(&mut out, w * dot(y, &b.g_logp_pi) * b.delta, &b.g_delta_theta);
                }
            }
        }
    }
    Ok(out)
}
