use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DiffError, Mode, StatsBatch, TrajStats};

/// Condition number of the k×k core above which a ridge is added.
pub const MAX_CORE_CONDITION: f64 = 1e12;
pub const CORE_RIDGE: f64 = 1e-6;

/// UVᵀ + cI with U, V of shape n × k.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankHessian {
    pub u: DMatrix<f64>,
    /// `None` when V = U.
    v: Option<DMatrix<f64>>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub y: Vec<f64>,
    pub condition: f64,
    pub ridged: bool,
}

impl LowRankHessian {
    pub fn new(u: DMatrix<f64>, v: Option<DMatrix<f64>>, c: f64) -> Result<Self, DiffError> {
        if let Some(v) = &v {
            if v.shape() != u.shape() {
                return Err(DiffError::Dimension(format!("U is {:?} but V is {:?}", u.shape(), v.shape())));
            }
        }
        Ok(LowRankHessian { u, v, c })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        self.v.as_ref().unwrap_or(&self.u)
    }

    pub fn shares_columns(&self) -> bool {
        self.v.is_none()
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// UVᵀ + cI as a dense matrix; tests only.
    pub fn dense(&self) -> DMatrix<f64> {
        &self.u * self.v().transpose() + DMatrix::identity(self.dim(), self.dim()) * self.c
    }

    /// The transpose VUᵀ + cI.
    pub fn transpose(&self) -> LowRankHessian {
        match &self.v {
            None => self.clone(),
            Some(v) => LowRankHessian { u: v.clone(), v: Some(self.u.clone()), c: self.c },
        }
    }
}

/// Stacks per-trajectory columns, scaled by √w_i (w_i = 1/k for samples).
pub fn build_lowrank(batch: &StatsBatch, mode: Mode, c_mag: f64) -> Result<LowRankHessian, DiffError> {
    let k = batch.stats.len();
    if k == 0 {
        return Err(DiffError::Empty);
    }
    let n = batch.policy_dim();
    let mut u = DMatrix::zeros(n, k);
    let mut v = DMatrix::zeros(n, k);
    for (i, (s, w)) in batch.stats.iter().zip(&batch.weights).enumerate() {
        let sw = w.sqrt();
        let (ucol, vcol) = match (mode, s) {
            (Mode::Pg, TrajStats::Pg(p)) => (&p.g_phi, &p.g_logp_pi),
            (Mode::Bellman, TrajStats::Bellman(b)) => (&b.g_delta_pi, &b.g_delta_pi),
            _ => return Err(DiffError::ModeMismatch),
        };
        if ucol.len() != n || vcol.len() != n {
            return Err(DiffError::Dimension(format!("trajectory {i} has gradient length {} != {n}", ucol.len())));
        }
        u.set_column(i, &(DVector::from_column_slice(ucol) * sw));
        if mode == Mode::Pg {
            v.set_column(i, &(DVector::from_column_slice(vcol) * sw));
        }
    }
    let c = match mode {
        Mode::Pg => -c_mag.abs(),
        Mode::Bellman => c_mag.abs(),
    };
    LowRankHessian::new(u, if mode == Mode::Pg { Some(v) } else { None }, c)
}

/// y = (UVᵀ + cI)⁻¹ g via (1/c)[g − U(cI_k + VᵀU)⁻¹Vᵀg].
pub fn woodbury_solve(h: &LowRankHessian, g: &[f64]) -> Result<SolveReport, DiffError> {
    if h.c == 0.0 || !h.c.is_finite() {
        return Err(DiffError::ZeroShift);
    }
    if g.len() != h.dim() {
        return Err(DiffError::Dimension(format!("g has length {} but H is {}×{}", g.len(), h.dim(), h.dim())));
    }
    let g = DVector::from_column_slice(g);
    let k = h.rank();
    let v = h.v();
    let mut core = v.transpose() * &h.u;
    for i in 0..k {
        core[(i, i)] += h.c;
    }
    let sv = core.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let ridged = !(condition <= MAX_CORE_CONDITION);
    if ridged {
        let r = CORE_RIDGE * smax.max(1.0);
        for i in 0..k {
            core[(i, i)] += r.copysign(h.c);
        }
    }
    let vg = v.transpose() * &g;
    let z = core.lu().solve(&vg).ok_or(DiffError::Singular)?;
    let y = (g - &h.u * z) / h.c;
    if y.iter().any(|x| !x.is_finite()) {
        return Err(DiffError::Singular);
    }
    Ok(SolveReport { y: y.as_slice().to_vec(), condition, ridged })
}

/// y = g / c with the mode's sign.
pub fn identity_solve(mode: Mode, c_mag: f64, g: &[f64]) -> Result<Vec<f64>, DiffError> {
    if c_mag == 0.0 || !c_mag.is_finite() {
        return Err(DiffError::ZeroShift);
    }
    let c = match mode {
        Mode::Pg => -c_mag.abs(),
        Mode::Bellman => c_mag.abs(),
    };
    Ok(g.iter().map(|x| x / c).collect())
}
