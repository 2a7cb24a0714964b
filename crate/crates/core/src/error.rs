use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("design point {index} is outside the feasible region of the cumulative logit model")]
    InfeasiblePoint { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid factor space: {0}")]
    InvalidSpace(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("linear predictor {eta} is outside the domain of the {link} link")]
    Domain { link: &'static str, eta: f64 },
    #[error("reference design has a singular information matrix")]
    SingularReference,
    #[error("design has a singular information matrix")]
    SingularDesign,
    #[error("starting allocation has a singular information matrix")]
    SingularStart,
    #[error("no full-rank set of {p} points found after {tries} draws")]
    RankDeficientSpace { p: usize, tries: usize },
    #[error("could not build a nonsingular initial design after {tries} draws (best rank {best_rank} of {p})")]
    InitFailure {
        tries: usize,
        best_rank: usize,
        p: usize,
    },
    #[error("every start of the box search has an infeasible objective")]
    AllStartsInvalid,
    #[error("{count} discrete level combinations exceed the cap of {cap}")]
    ComboExplosion { count: f64, cap: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
