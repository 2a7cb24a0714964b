//! Locally D-optimal approximate designs for experiments that mix continuous
//! and discrete factors, under generalized linear models and multinomial
//! logit models.

pub mod boxopt;
pub mod design;
pub mod error;
pub mod expr;
pub mod glm;
pub mod liftone;
pub mod linalg;
pub mod mlm;
pub mod model;
pub mod solver;

pub use design::{Design, DesignPoint, DistanceMetric, FactorSpace};
pub use error::{Error, Result};
pub use expr::{Expr, Predictors};
pub use glm::{GlmSpec, Link};
pub use linalg::FisherMatrix;
pub use mlm::{LogitFamily, MlmSpec};
pub use model::ModelSpec;
pub use solver::{solve, verify_optimality, InitStrategy, SolveReport, SolverConfig};
