use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("variable index {index} out of range for {n} variables")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("weight table entry must be strictly positive (got {value})")]
    NonPositiveWeight { value: f64 },

    #[error("constraint arity {tuple} does not match weight table arity {table}")]
    ArityMismatch { tuple: usize, table: usize },

    #[error("{what} must be nonempty")]
    EmptySet { what: &'static str },

    #[error("enumeration budget exceeded: need {need} states, budget {budget}")]
    BudgetExceeded { need: u128, budget: u128 },

    #[error("partition function is zero: no configuration survives the hard constraints")]
    ZeroSupport,

    #[error("normalizer is zero for {what}")]
    ZeroNormalizer { what: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("coupling does not reproduce the prescribed marginals (max defect {defect:.3e})")]
    MarginalMismatch { defect: f64 },

    #[error("measure is not normalized (sum {sum})")]
    Unnormalized { sum: f64 },

    #[error("message sets live on different graphs")]
    GraphMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear program is infeasible (phase-1 objective {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("linear program is unbounded")]
    Unbounded,
}

pub type Result<T> = std::result::Result<T, Error>;
