//! Generalized linear model kernels: the information weight `nu` per link,
//! per-point information, sensitivity and its gradient, and minimally
//! supported starting designs.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::design::{Design, DesignPoint, FactorSpace};
use crate::error::{Error, Result};
use crate::expr::{Expr, Predictors};
use crate::linalg::{extends_basis, FisherMatrix};

/// Above this many vertices the vertex set is sampled rather than enumerated.
pub const VERTEX_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "link", rename_all = "kebab-case")]
pub enum Link {
    Logit,
    Probit,
    Cloglog,
    /// `log(-log mu)`; its `nu` coincides with cloglog.
    Loglog,
    /// The strictly increasing variant `-log(-log mu)`.
    LoglogAlt,
    Cauchit,
    T { df: f64 },
    PoissonLog,
    GammaReciprocal { kappa: f64 },
    NormalIdentity { sigma2: f64 },
    InverseGaussian { lambda: f64 },
}

impl Link {
    pub fn name(&self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
            Link::Loglog => "loglog",
            Link::LoglogAlt => "loglog-alt",
            Link::Cauchit => "cauchit",
            Link::T { .. } => "t",
            Link::PoissonLog => "poisson-log",
            Link::GammaReciprocal { .. } => "gamma-reciprocal",
            Link::NormalIdentity { .. } => "normal-identity",
            Link::InverseGaussian { .. } => "inverse-gaussian",
        }
    }

    /// Checks the link's own parameter (degrees of freedom, shape, ...).
    pub fn validate(&self) -> Result<()> {
        let (what, v) = match *self {
            Link::T { df } => ("df", df),
            Link::GammaReciprocal { kappa } => ("kappa", kappa),
            Link::NormalIdentity { sigma2 } => ("sigma2", sigma2),
            Link::InverseGaussian { lambda } => ("lambda", lambda),
            _ => return Ok(()),
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "{} link needs {what} > 0, got {v}",
                self.name()
            )))
        }
    }

    fn check_domain(&self, eta: f64) -> Result<()> {
        let positive_only = matches!(self, Link::GammaReciprocal { .. } | Link::InverseGaussian { .. });
        if !eta.is_finite() || (positive_only && eta <= 0.0) {
            return Err(Error::Domain {
                link: self.name(),
                eta,
            });
        }
        Ok(())
    }

    /// Information weight `nu(eta) = ((g^{-1})'(eta))^2 / Var(Y)`.
    pub fn nu(&self, eta: f64) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match *self {
            Link::Logit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Link::Probit => {
                let (phi, cdf) = normal_parts(eta);
                bernoulli_nu(phi, cdf)
            }
            Link::Cloglog | Link::Loglog => cloglog_nu(eta),
            Link::LoglogAlt => cloglog_nu(-eta),
            Link::Cauchit => {
                let q = cauchit_q(eta);
                4.0 / ((1.0 + eta * eta).powi(2) * q)
            }
            Link::T { df } => {
                let (f, cdf) = t_parts(eta, df);
                bernoulli_nu(f, cdf)
            }
            Link::PoissonLog => eta.exp(),
            Link::GammaReciprocal { kappa } => kappa / (eta * eta),
            Link::NormalIdentity { sigma2 } => 1.0 / sigma2,
            Link::InverseGaussian { lambda } => 0.25 * lambda * eta.powf(-1.5),
        })
    }

    /// `d nu / d eta`.
    pub fn nu_prime(&self, eta: f64) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match *self {
            Link::Logit => -self.nu(eta)? * (0.5 * eta).tanh(),
            Link::Probit => {
                let (phi, cdf) = normal_parts(eta);
                let nu = bernoulli_nu(phi, cdf);
                if nu == 0.0 {
                    0.0
                } else {
                    nu * (-2.0 * eta + phi * (2.0 * cdf - 1.0) / (cdf * (1.0 - cdf)))
                }
            }
            Link::Cloglog | Link::Loglog => cloglog_nu_prime(eta),
            Link::LoglogAlt => -cloglog_nu_prime(-eta),
            Link::Cauchit => {
                let q = cauchit_q(eta);
                let a = eta.atan();
                let nu = 4.0 / ((1.0 + eta * eta).powi(2) * q);
                nu * (-4.0 * eta + 8.0 * a / q) / (1.0 + eta * eta)
            }
            Link::T { df } => {
                let (f, cdf) = t_parts(eta, df);
                let nu = bernoulli_nu(f, cdf);
                if nu == 0.0 {
                    0.0
                } else {
                    // f'/f = -(df + 1) eta / (df + eta^2) for the t density
                    nu * (-2.0 * (df + 1.0) * eta / (df + eta * eta)
                        + f * (2.0 * cdf - 1.0) / (cdf * (1.0 - cdf)))
                }
            }
            Link::PoissonLog => eta.exp(),
            Link::GammaReciprocal { kappa } => -2.0 * kappa / (eta * eta * eta),
            Link::NormalIdentity { .. } => 0.0,
            Link::InverseGaussian { lambda } => -0.375 * lambda * eta.powf(-2.5),
        })
    }
}

fn bernoulli_nu(density: f64, cdf: f64) -> f64 {
    let v = cdf * (1.0 - cdf);
    if v <= 0.0 {
        0.0
    } else {
        density * density / v
    }
}

/// `(phi(eta), Phi(eta))` with the smaller tail computed directly.
fn normal_parts(eta: f64) -> (f64, f64) {
    let phi = (-0.5 * eta * eta).exp() / (2.0 * PI).sqrt();
    let tail = 0.5 * statrs::function::erf::erfc(eta.abs() / std::f64::consts::SQRT_2);
    let cdf = if eta < 0.0 { tail } else { 1.0 - tail };
    (phi, cdf)
}

fn t_parts(eta: f64, df: f64) -> (f64, f64) {
    let t = StudentsT::new(0.0, 1.0, df).expect("df validated positive");
    let tail = t.cdf(-eta.abs());
    let cdf = if eta < 0.0 { tail } else { 1.0 - tail };
    (t.pdf(eta), cdf)
}

fn cloglog_nu(eta: f64) -> f64 {
    let t = eta.exp();
    if t == 0.0 {
        // nu ~ e^eta as eta -> -inf
        return t;
    }
    (2.0 * eta - t - (-(-t).exp_m1()).ln()).exp()
}

fn cloglog_nu_prime(eta: f64) -> f64 {
    let t = eta.exp();
    if t == 0.0 {
        return 0.0;
    }
    let nu = cloglog_nu(eta);
    if nu == 0.0 {
        return 0.0;
    }
    nu * (2.0 - t / (-(-t).exp_m1()))
}

/// `pi^2 - 4 atan^2(eta)`, written to avoid cancellation for large `|eta|`.
fn cauchit_q(eta: f64) -> f64 {
    let a = eta.atan().abs();
    let gap = if eta == 0.0 { FRAC_PI_2 } else { (1.0 / eta.abs()).atan() };
    4.0 * gap * (FRAC_PI_2 + a)
}

/// A GLM with linear predictor `eta = beta' h(x)`.
#[derive(Debug, Clone)]
pub struct GlmSpec {
    predictors: Predictors,
    beta: Vec<f64>,
    link: Link,
    main_effects_prefix: Option<usize>,
}

impl GlmSpec {
    pub fn new(predictors: Predictors, beta: Vec<f64>, link: Link) -> Result<Self> {
        if predictors.is_empty() {
            return Err(Error::InvalidModel("a GLM needs at least one predictor".into()));
        }
        if predictors.len() != beta.len() {
            return Err(Error::InvalidModel(format!(
                "{} predictors but {} coefficients",
                predictors.len(),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel("coefficients must be finite".into()));
        }
        link.validate()?;
        Ok(Self {
            predictors,
            beta,
            link,
            main_effects_prefix: None,
        })
    }

    /// Declares that `h_i(x) = x_i` for the first `kp` predictors and that the
    /// remaining predictors ignore all `k` continuous coordinates. The
    /// structure is checked symbolically.
    pub fn with_main_effects_prefix(mut self, kp: usize, k: usize) -> Result<Self> {
        if kp > k || kp > self.p() {
            return Err(Error::InvalidModel(format!(
                "main-effects prefix {kp} exceeds the {k} continuous factors or {} predictors",
                self.p()
            )));
        }
        let exprs = self.predictors.exprs();
        for (i, e) in exprs.iter().enumerate().take(kp) {
            if *e != Expr::Var(i) {
                return Err(Error::InvalidModel(format!(
                    "main-effects prefix requires predictor {} to be coordinate {}, found `{e}`",
                    i + 1,
                    i + 1
                )));
            }
        }
        for (j, e) in exprs.iter().enumerate().skip(kp) {
            if (0..k).any(|i| e.depends_on(i)) {
                return Err(Error::InvalidModel(format!(
                    "main-effects prefix requires predictor {} (`{e}`) to ignore continuous factors",
                    j + 1
                )));
            }
        }
        self.main_effects_prefix = Some(kp);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn dim(&self) -> usize {
        self.predictors.dim()
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn predictors(&self) -> &Predictors {
        &self.predictors
    }

    pub fn main_effects_prefix(&self) -> Option<usize> {
        self.main_effects_prefix
    }

    pub fn h(&self, x: &[f64]) -> Vec<f64> {
        self.predictors.eval(x)
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        self.h(x).iter().zip(&self.beta).map(|(h, b)| h * b).sum()
    }

    /// `nu(eta) h h'`.
    pub fn fisher_at_point(&self, x: &[f64]) -> Result<FisherMatrix> {
        let h = DVector::from_vec(self.h(x));
        let nu = self.link.nu(h.dot(&DVector::from_column_slice(&self.beta)))?;
        Ok(FisherMatrix::new(&h * h.transpose() * nu))
    }

    /// `d(x, xi) = nu(eta) h' A h` with `A = F(xi)^{-1}`.
    pub fn sensitivity(&self, x: &[f64], a: &DMatrix<f64>) -> Result<f64> {
        let h = DVector::from_vec(self.h(x));
        let nu = self.link.nu(h.dot(&DVector::from_column_slice(&self.beta)))?;
        Ok(nu * (a * &h).dot(&h))
    }

    /// Gradient of the sensitivity with respect to the first `k` coordinates.
    pub fn sensitivity_gradient(&self, x: &[f64], a: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
        Ok(self.sensitivity_with_gradient(x, a, k)?.1)
    }

    /// Sensitivity and its gradient in one pass.
    pub fn sensitivity_with_gradient(
        &self,
        x: &[f64],
        a: &DMatrix<f64>,
        k: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let h = DVector::from_vec(self.h(x));
        let eta: f64 = h.iter().zip(&self.beta).map(|(h, b)| h * b).sum();
        let nu = self.link.nu(eta)?;
        let nu1 = self.link.nu_prime(eta)?;
        let ah = a * &h;
        let hah = ah.dot(&h);
        let grad = match self.main_effects_prefix {
            Some(kp) => (0..k)
                .map(|i| {
                    if i < kp {
                        nu1 * hah * self.beta[i] + 2.0 * nu * ah[i]
                    } else {
                        0.0
                    }
                })
                .collect(),
            None => (0..k)
                .map(|i| {
                    let dh = self.predictors.partial(x, i);
                    let dh_beta: f64 = dh.iter().zip(&self.beta).map(|(d, b)| d * b).sum();
                    let dh_ah: f64 = dh.iter().zip(ah.iter()).map(|(d, v)| d * v).sum();
                    nu1 * hah * dh_beta + 2.0 * nu * dh_ah
                })
                .collect(),
        };
        Ok((nu * hah, grad))
    }

    /// `sqrt(nu) h(x)`, or `None` when `x` carries no information.
    fn weighted_row(&self, x: &[f64]) -> Option<Vec<f64>> {
        let h = self.h(x);
        let eta: f64 = h.iter().zip(&self.beta).map(|(h, b)| h * b).sum();
        let nu = self.link.nu(eta).ok()?;
        if !(nu > 0.0 && nu.is_finite()) {
            return None;
        }
        let s = nu.sqrt();
        Some(h.into_iter().map(|v| v * s).collect())
    }
}

/// Vertex set `prod_j {a_j, b_j}`; sampled uniformly when larger than [`VERTEX_CAP`].
pub fn vertices(space: &FactorSpace, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let d = space.dim();
    let ranges: Vec<(f64, f64)> = (0..d).map(|i| space.range(i)).collect();
    let vertex = |bits: u64| -> Vec<f64> {
        ranges
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| if bits >> i & 1 == 1 { hi } else { lo })
            .collect()
    };
    if d < 13 {
        (0..1u64 << d).map(vertex).collect()
    } else {
        (0..VERTEX_CAP)
            .map(|_| {
                ranges
                    .iter()
                    .map(|&(lo, hi)| if rng.gen_bool(0.5) { hi } else { lo })
                    .collect()
            })
            .collect()
    }
}

/// Uniform draw from the factor space.
pub fn random_point(space: &FactorSpace, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = space
        .continuous_bounds()
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..=hi))
        .collect();
    x.extend(
        space
            .discrete_levels()
            .iter()
            .map(|levels| levels[rng.gen_range(0..levels.len())]),
    );
    x
}

/// `p` points with a full-rank model matrix, each weighted `1/p`.
///
/// Vertices are tried first (in a seeded random order); when they cannot
/// reach rank `p`, up to `max_tries` random points of the full space are drawn.
pub fn minimally_supported_initial(
    spec: &GlmSpec,
    space: &FactorSpace,
    seed: u64,
    max_tries: usize,
) -> Result<Design> {
    let p = spec.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts = vertices(space, &mut rng);
    verts.shuffle(&mut rng);

    let mut basis = Vec::with_capacity(p);
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(p);
    for v in verts {
        if chosen.len() == p {
            break;
        }
        if chosen.contains(&v) {
            continue;
        }
        if let Some(row) = spec.weighted_row(&v) {
            if extends_basis(&mut basis, &row, 1e-8) {
                chosen.push(v);
            }
        }
    }
    if chosen.len() < p {
        log::debug!("vertices reach rank {} of {p}; sampling the full space", chosen.len());
        basis.clear();
        chosen.clear();
        for _ in 0..max_tries {
            if chosen.len() == p {
                break;
            }
            let v = random_point(space, &mut rng);
            if let Some(row) = spec.weighted_row(&v) {
                if extends_basis(&mut basis, &row, 1e-8) {
                    chosen.push(v);
                }
            }
        }
        if chosen.len() < p {
            return Err(Error::RankDeficientSpace { p, tries: max_tries });
        }
    }
    Design::uniform(chosen.into_iter().map(DesignPoint::new).collect())
}
