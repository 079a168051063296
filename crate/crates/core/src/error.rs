use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input point or parameter was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its contract (wrong order, wrong dimension, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A simulated coordinate became non-finite.
    #[error("trajectory exploded at step {step} (t = {time})")]
    Explosion { step: u64, time: f64 },

    /// Step-halving refinement did not reach the requested tolerance.
    #[error("flow refinement did not converge: last difference {difference:e} after {halvings} halvings (tol {tol:e})")]
    Accuracy {
        difference: f64,
        halvings: usize,
        tol: f64,
    },

    /// A fixed-point iteration hit its iteration cap.
    #[error("fixed point not reached after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The density grid does not reach the region where the Gibbs weight lives.
    #[error("grid coverage error: {0}")]
    GridCoverage(String),

    /// The contracted level-set domain is empty; a smaller window half-width is needed.
    #[error("contracted domain is empty: exit cost {exit_cost} minus delta/2 = {level} <= 0")]
    EmptyContraction { exit_cost: f64, level: f64 },

    /// The estimated Euler step count exceeds the configured budget.
    #[error("step budget exceeded: {estimated:.3e} estimated steps > cap {cap:.3e}")]
    Budget { estimated: f64, cap: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} = {x:?}")))
    }
}
