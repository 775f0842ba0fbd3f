use super::params::ParamVector;
use super::AutodiffError;

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(f: F, x: &ParamVector, step: f64) -> Result<Vec<f64>, AutodiffError>
where
    F: Fn(&ParamVector) -> f64,
{
    let mut probe = x.clone();
    finite_diff_slice(
        |v| {
            probe.values_mut().copy_from_slice(v);
            f(&probe)
        },
        x.values(),
        step,
    )
}

/// Same as [`finite_diff_grad`] over a bare slice.
pub fn finite_diff_slice<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>, AutodiffError>
where
    F: FnMut(&[f64]) -> f64,
{
    if step.is_nan() || step <= 0.0 || step.is_infinite() {
        return Err(AutodiffError::InvalidStep(step));
    }
    let mut v = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = v[i];
        v[i] = orig + step;
        let fp = f(&v);
        v[i] = orig - step;
        let fm = f(&v);
        v[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(AutodiffError::NonFinite { coordinate: i });
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}
