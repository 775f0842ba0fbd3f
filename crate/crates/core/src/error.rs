use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::diffmdp::DiffError;
use crate::env::EnvError;
use crate::harness::HarnessError;
use crate::mdp::MdpError;
use crate::ope::OpeError;
use crate::solver::SolverError;
use crate::training::TrainError;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ope(#[from] OpeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
