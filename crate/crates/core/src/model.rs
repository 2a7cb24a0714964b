use nalgebra::DMatrix;

use crate::error::Result;
use crate::glm::GlmSpec;
use crate::linalg::FisherMatrix;
use crate::mlm::{LogitFamily, MlmSpec};

/// A parametric model whose per-point information drives the design search.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Glm(GlmSpec),
    Mlm(MlmSpec),
}

impl ModelSpec {
    pub fn num_params(&self) -> usize {
        match self {
            ModelSpec::Glm(g) => g.p(),
            ModelSpec::Mlm(m) => m.p(),
        }
    }

    /// Number of factors a design point must have.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Glm(g) => g.dim(),
            ModelSpec::Mlm(m) => m.dim(),
        }
    }

    pub fn is_glm(&self) -> bool {
        matches!(self, ModelSpec::Glm(_))
    }

    pub fn is_cumulative(&self) -> bool {
        matches!(self, ModelSpec::Mlm(m) if m.family() == LogitFamily::Cumulative)
    }

    /// Whether `x` lies in the model's feasible region (always true except
    /// for cumulative logit models and out-of-domain GLM links).
    pub fn feasible(&self, x: &[f64]) -> bool {
        match self {
            ModelSpec::Glm(g) => g.link().nu(g.eta(x)).is_ok(),
            ModelSpec::Mlm(m) => m.feasible(x),
        }
    }

    pub fn fisher_at_point(&self, x: &[f64]) -> Result<FisherMatrix> {
        match self {
            ModelSpec::Glm(g) => g.fisher_at_point(x),
            ModelSpec::Mlm(m) => m.fisher_at_point(x),
        }
    }

    /// `d(x, xi) = tr(A F_x)` with `A = F(xi)^{-1}`.
    pub fn sensitivity(&self, x: &[f64], a: &DMatrix<f64>) -> Result<f64> {
        match self {
            ModelSpec::Glm(g) => g.sensitivity(x, a),
            ModelSpec::Mlm(m) => m.sensitivity(x, a),
        }
    }

    /// Sensitivity and its gradient over the first `k` coordinates.
    pub fn sensitivity_with_gradient(
        &self,
        x: &[f64],
        a: &DMatrix<f64>,
        k: usize,
    ) -> Result<(f64, Vec<f64>)> {
        match self {
            ModelSpec::Glm(g) => g.sensitivity_with_gradient(x, a, k),
            ModelSpec::Mlm(m) => m.sensitivity_with_gradient(x, a, k),
        }
    }
}

impl From<GlmSpec> for ModelSpec {
    fn from(g: GlmSpec) -> Self {
        ModelSpec::Glm(g)
    }
}

impl From<MlmSpec> for ModelSpec {
    fn from(m: MlmSpec) -> Self {
        ModelSpec::Mlm(m)
    }
}
