//! Reverse-mode gradients over a small, fixed set of primitives.
//!
//! ```
//! use dfmdp::autodiff::{record_and_eval, ParamVector, Tensor};
//!
//! let x = ParamVector::from_segments([("x", Tensor::vector(vec![1.0, 2.0]))]);
//! let rec = record_and_eval(&[&x], |tape, p| {
//!     let sq = tape.square(p[0].vars[0]);
//!     Ok(tape.sum(sq))
//! })
//! .unwrap();
//! assert_eq!(rec.value().data, vec![5.0]);
//! let g = rec.backward().unwrap();
//! assert_eq!(g[0].values(), &[2.0, 4.0]);
//! ```

mod fd;
mod params;
mod tape;
mod tensor;

pub use fd::{finite_diff_grad, finite_diff_slice};
pub use params::{ParamVector, Segment};
pub use tape::{Gradients, ParamVars, Tape, Var};
pub use tensor::{log_softmax, softmax, Tensor};

pub(crate) use tensor::affine_forward;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: (usize, usize) },
    #[error("function value is not finite at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("parameter layout: {0}")]
    Layout(String),
}

/// A recorded program together with its inputs' leaf handles.
#[derive(Debug, Clone)]
pub struct Recording {
    pub tape: Tape,
    pub output: Var,
    pub inputs: Vec<ParamVars>,
}

impl Recording {
    pub fn value(&self) -> &Tensor {
        self.tape.value(self.output)
    }

    /// Gradient of the (scalar) output w.r.t. each input, in the inputs' layouts.
    pub fn backward(&self) -> Result<Vec<ParamVector>, AutodiffError> {
        let grads = self.tape.backward(self.output)?;
        Ok(self.inputs.iter().map(|p| p.grad(&grads)).collect())
    }
}

/// Records `program` on a fresh tape with one leaf set per input vector.
pub fn record_and_eval<F>(inputs: &[&ParamVector], program: F) -> Result<Recording, AutodiffError>
where
    F: FnOnce(&mut Tape, &[ParamVars]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<ParamVars> = inputs.iter().map(|p| tape.params(p)).collect();
    let output = program(&mut tape, &vars)?;
    Ok(Recording { tape, output, inputs: vars })
}

/// Shorthand for recording and differentiating a single-input program.
pub fn backward_grad<F>(input: &ParamVector, program: F) -> Result<(f64, ParamVector), AutodiffError>
where
    F: FnOnce(&mut Tape, &ParamVars) -> Result<Var, AutodiffError>,
{
    let rec = record_and_eval(&[input], |t, p| program(t, &p[0]))?;
    let out = rec.value().clone();
    if !out.is_scalar() {
        return Err(AutodiffError::NonScalarOutput { shape: out.shape() });
    }
    let mut g = rec.backward()?;
    Ok((out.data[0], g.remove(0)))
}

#[cfg(test)]
mod tests;
