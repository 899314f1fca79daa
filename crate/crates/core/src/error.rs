use std::io;

use thiserror::Error;

use crate::poly::MultilinearPolynomial;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("randomness string has {got} bits but the tree has {expected} stochastic nodes")]
    RandomnessLength { expected: usize, got: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("tree is not stochastic-leaf")]
    NotStochasticLeaf,

    #[error("{0} variables requested; at most {max} are supported", max = crate::MAX_VARIABLES)]
    TooManyVariables(usize),

    #[error("input has {got} variables, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exact enumeration over 2^{n} inputs exceeds the cap of 2^{cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("{features} monomial features exceed the configured cap of {cap}")]
    FeatureCap { features: usize, cap: usize },

    #[error("linear program did not finish within {seconds} s")]
    LpTimeLimit {
        seconds: f64,
        incumbent: Option<Box<MultilinearPolynomial>>,
    },

    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("least-squares solve failed: {0}")]
    LinearAlgebra(String),

    #[error("infeasible budget: {0}")]
    Budget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
