//! Crate-wide error type.

use thiserror::Error;

/// Identifies one emitter in diagnostics: the impurity or a lattice atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    Impurity,
    Lattice(usize),
}

impl std::fmt::Display for Body {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Body::Impurity => write!(f, "impurity"),
            Body::Lattice(i) => write!(f, "lattice atom {i}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read config file `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse config file `{path}`: {detail}")]
    Parse { path: String, detail: String },

    #[error("invalid config field `{field}`: {detail}")]
    Validation { field: String, detail: String },

    #[error("unknown config key `{key}` in override")]
    UnknownKey { key: String },

    #[error("invalid override `{entry}`: expected key=value")]
    BadOverride { entry: String },

    #[error("emitter separation {separation:.3e} is below the {limit:.3e} singularity cutoff")]
    TooClose { separation: f64, limit: f64 },

    #[error("coincident emitters {a} and {b} (separation {separation:.3e})")]
    CoincidentEmitters { a: Body, b: Body, separation: f64 },

    #[error("spin state has {got} amplitudes but the Hamiltonian is {expected}-dimensional")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bodies {a} and {b} collided at t = {time:.6} (separation {separation:.3e})")]
    Collision {
        a: Body,
        b: Body,
        separation: f64,
        time: f64,
    },

    #[error("state became non-finite at t = {time:.6}")]
    NonFinite { time: f64 },

    #[error("record holds {got} samples but at least {need} are required")]
    TooFewSamples { got: usize, need: usize },

    #[error("lattice response matrix is near-singular (condition estimate {cond:.3e})")]
    NearSingular { cond: f64 },

    #[error("cannot write output `{path}`: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
