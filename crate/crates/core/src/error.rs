use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcqpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("constraint matrix is rank deficient (pivot {pivot:.3e} below tolerance {tol:.3e})")]
    RankDeficient { pivot: f64, tol: f64 },

    #[error("instance is infeasible")]
    Infeasible,

    #[error("singular linear system")]
    Singular,

    #[error("conjugate gradient breakdown at iteration {iteration} (residual {residual:.3e})")]
    Breakdown { iteration: usize, residual: f64 },

    #[error("inner solve did not converge (residual {residual:.3e})")]
    InnerNotConverged { residual: f64 },

    #[error(
        "interior-point method did not converge in {iterations} iterations \
         (primal {primal:.3e}, dual {dual:.3e}, comp {comp:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
        comp: f64,
    },

    #[error("instance too large for enumeration: n = {n} > {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T> = std::result::Result<T, LcqpError>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(LcqpError::Dimension(format!(
            "{what}: length {got}, expected {want}"
        )));
    }
    Ok(())
}
