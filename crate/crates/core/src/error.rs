//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({0}, {1}) lies outside the mesh domain")]
    OutOfDomain(f64, f64),

    #[error("point ({0}, {1}) lies outside the active patch")]
    OutOfPatch(f64, f64),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("Newton did not converge after {iterations} iterations (last update norm {update_norm:.3e})")]
    NonConvergence { iterations: usize, update_norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("slab {slab}: {source}")]
    Slab {
        slab: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attaches the slab index to a failure inside the time-marching loop.
    pub fn at_slab(slab: usize, source: Error) -> Error {
        Error::Slab { slab, source: Box::new(source) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
