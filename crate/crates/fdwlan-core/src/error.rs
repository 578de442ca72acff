use thiserror::Error;

use crate::model::FixedPointSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("annulus index ({i}, {j}) out of range 1..={annuli}")]
    IndexOutOfRange { i: usize, j: usize, annuli: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<FixedPointSolution>,
    },

    #[error("success probability undefined: no transmission probability mass (P_t = 0)")]
    UndefinedConditional,
}
