//! Multinomial logit model kernels: model matrices, category probabilities
//! for the four logit families, the `U` matrix, per-point information,
//! sensitivity and its analytic gradient.
//!
//! Category indices are 0-based here; category `J - 1` is the reference
//! category whose linear predictor is fixed at zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Predictors;
use crate::linalg::FisherMatrix;

/// Minimum gap between consecutive cumulative linear predictors.
pub const CUMULATIVE_MARGIN: f64 = 1e-12;
const ETA_CLIP: f64 = 700.0;
const PI_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogitFamily {
    BaselineCategory,
    Cumulative,
    AdjacentCategories,
    ContinuationRatio,
}

impl LogitFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LogitFamily::BaselineCategory => "baseline-category",
            LogitFamily::Cumulative => "cumulative",
            LogitFamily::AdjacentCategories => "adjacent-categories",
            LogitFamily::ContinuationRatio => "continuation-ratio",
        }
    }
}

impl std::str::FromStr for LogitFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-category" | "baseline" => Ok(Self::BaselineCategory),
            "cumulative" => Ok(Self::Cumulative),
            "adjacent-categories" | "adjacent" => Ok(Self::AdjacentCategories),
            "continuation-ratio" => Ok(Self::ContinuationRatio),
            other => Err(Error::Parse(format!("unknown logit family `{other}`"))),
        }
    }
}

/// Category probabilities at one design point.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProbabilities {
    /// `pi_0 .. pi_{J-1}`.
    pub pi: Vec<f64>,
    /// Cumulative sums `gamma_j = pi_0 + .. + pi_j` for `j < J - 1`.
    pub gamma: Vec<f64>,
    /// `1 - gamma_j`, summed from the upper tail to keep precision.
    pub rest: Vec<f64>,
}

impl CategoryProbabilities {
    fn from_pi(pi: Vec<f64>) -> Self {
        let j = pi.len();
        let mut gamma = Vec::with_capacity(j - 1);
        let mut acc = 0.0;
        for &p in &pi[..j - 1] {
            acc += p;
            gamma.push(acc);
        }
        let mut rest = vec![0.0; j - 1];
        let mut tail = 0.0;
        for s in (0..j - 1).rev() {
            tail += pi[s + 1];
            rest[s] = tail;
        }
        Self { pi, gamma, rest }
    }

    pub fn j(&self) -> usize {
        self.pi.len()
    }

    /// `gamma_s` with the conventions `gamma_{-1} = 0` and `gamma_{J-1} = 1`.
    fn g(&self, s: isize) -> f64 {
        if s < 0 {
            0.0
        } else if s as usize >= self.gamma.len() {
            1.0
        } else {
            self.gamma[s as usize]
        }
    }

    /// `1 - gamma_s` with the same conventions.
    fn r(&self, s: isize) -> f64 {
        if s < 0 {
            1.0
        } else if s as usize >= self.rest.len() {
            0.0
        } else {
            self.rest[s as usize]
        }
    }

    fn p(&self, s: usize) -> f64 {
        self.pi[s].max(PI_FLOOR)
    }
}

/// Multinomial logit model `eta = X_x theta` with per-category predictors
/// `h_j` and shared predictors `h_c`.
#[derive(Debug, Clone)]
pub struct MlmSpec {
    family: LogitFamily,
    category: Vec<Predictors>,
    shared: Predictors,
    theta: Vec<f64>,
    // offsets[j] = first column of block j; offsets[J-1] = first shared column
    offsets: Vec<usize>,
    dim: usize,
}

impl MlmSpec {
    pub fn new(
        family: LogitFamily,
        category: Vec<Predictors>,
        shared: Predictors,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if category.is_empty() {
            return Err(Error::InvalidModel(
                "an MLM needs J >= 2 categories (at least one category predictor list)".into(),
            ));
        }
        let dim = shared.dim();
        if category.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidModel("predictor lists disagree on the number of factors".into()));
        }
        let mut offsets = Vec::with_capacity(category.len() + 1);
        let mut p = 0;
        for c in &category {
            offsets.push(p);
            p += c.len();
        }
        offsets.push(p);
        p += shared.len();
        if p == 0 {
            return Err(Error::InvalidModel("the model has no parameters".into()));
        }
        if theta.len() != p {
            return Err(Error::InvalidModel(format!(
                "predictor structure needs {p} parameters but theta has {}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        Ok(Self {
            family,
            category,
            shared,
            theta,
            offsets,
            dim,
        })
    }

    pub fn family(&self) -> LogitFamily {
        self.family
    }

    /// Number of response categories `J`.
    pub fn j(&self) -> usize {
        self.category.len() + 1
    }

    pub fn p(&self) -> usize {
        self.theta.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn category_predictors(&self) -> &[Predictors] {
        &self.category
    }

    pub fn shared_predictors(&self) -> &Predictors {
        &self.shared
    }

    /// The `J x p` model matrix; its last row is zero.
    pub fn model_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        self.assemble(|pred: &Predictors| pred.eval(x))
    }

    /// `d X_x / d x_var`.
    pub fn model_matrix_partial(&self, x: &[f64], var: usize) -> DMatrix<f64> {
        self.assemble(|pred: &Predictors| pred.partial(x, var))
    }

    fn assemble(&self, eval: impl Fn(&Predictors) -> Vec<f64>) -> DMatrix<f64> {
        let jm1 = self.category.len();
        let mut m = DMatrix::zeros(jm1 + 1, self.p());
        let hc = eval(&self.shared);
        let c0 = self.offsets[jm1];
        for (j, pred) in self.category.iter().enumerate() {
            for (l, v) in eval(pred).into_iter().enumerate() {
                m[(j, self.offsets[j] + l)] = v;
            }
            for (l, v) in hc.iter().enumerate() {
                m[(j, c0 + l)] = *v;
            }
        }
        m
    }

    /// Linear predictors `eta_0 .. eta_{J-2}`.
    pub fn eta(&self, x: &[f64]) -> Vec<f64> {
        let xm = self.model_matrix(x);
        let th = DVector::from_column_slice(&self.theta);
        let eta = xm * th;
        eta.iter().take(self.category.len()).copied().collect()
    }

    /// Always true except for cumulative models, which need strictly
    /// increasing linear predictors.
    pub fn feasible(&self, x: &[f64]) -> bool {
        self.family != LogitFamily::Cumulative || eta_increasing(&self.eta(x))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<CategoryProbabilities> {
        probabilities_from_eta(self.family, &self.eta(x))
    }

    pub fn u_matrix(&self, probs: &CategoryProbabilities) -> DMatrix<f64> {
        u_matrix(self.family, probs)
    }

    pub fn dpi_deta(&self, probs: &CategoryProbabilities) -> DMatrix<f64> {
        dpi_deta(self.family, probs)
    }

    /// `X_x' U_x X_x`.
    pub fn fisher_at_point(&self, x: &[f64]) -> Result<FisherMatrix> {
        let probs = self.probabilities(x)?;
        let u = self.u_matrix(&probs);
        let xm = self.model_matrix(x);
        let f = xm.transpose() * u * &xm;
        Ok(FisherMatrix::new(symmetrize(f)))
    }

    /// `tr(A F_x)` evaluated directly from the assembled `F_x`.
    pub fn sensitivity_trace(&self, x: &[f64], a: &DMatrix<f64>) -> Result<f64> {
        let f = self.fisher_at_point(x)?;
        Ok(a.component_mul(f.matrix()).sum())
    }

    /// Sensitivity through the block expansion over the blocks `C_st` of `A`.
    pub fn sensitivity(&self, x: &[f64], a: &DMatrix<f64>) -> Result<f64> {
        let probs = self.probabilities(x)?;
        let u = self.u_matrix(&probs);
        let jm1 = self.category.len();
        let h: Vec<Vec<f64>> = self.category.iter().map(|c| c.eval(x)).collect();
        let hc = self.shared.eval(x);
        let sizes: Vec<usize> = self
            .category
            .iter()
            .map(Predictors::len)
            .chain(std::iter::once(self.shared.len()))
            .collect();
        // u' C h forms restricted to blocks
        let quad = |s: usize, t: usize, left: &[f64], right: &[f64]| -> f64 {
            let (r0, c0) = (self.offsets[s], self.offsets[t]);
            let mut acc = 0.0;
            for (i, l) in left.iter().enumerate().take(sizes[s]) {
                for (k, r) in right.iter().enumerate().take(sizes[t]) {
                    acc += l * a[(r0 + i, c0 + k)] * r;
                }
            }
            acc
        };
        let mut d = 0.0;
        let mut usum = 0.0;
        for s in 0..jm1 {
            d += u[(s, s)] * quad(s, s, &h[s], &h[s]);
            for t in s + 1..jm1 {
                d += 2.0 * u[(s, t)] * quad(s, t, &h[s], &h[t]);
            }
            let row: f64 = (0..jm1).map(|t| u[(s, t)]).sum();
            usum += row;
            if !hc.is_empty() {
                d += 2.0 * row * quad(s, jm1, &h[s], &hc);
            }
        }
        if !hc.is_empty() {
            d += usum * quad(jm1, jm1, &hc, &hc);
        }
        Ok(d)
    }

    /// Sensitivity together with its gradient over the first `k` coordinates.
    pub fn sensitivity_with_gradient(
        &self,
        x: &[f64],
        a: &DMatrix<f64>,
        k: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let probs = self.probabilities(x)?;
        let u = self.u_matrix(&probs);
        let du = du_dpi(self.family, &probs);
        let jac = self.dpi_deta(&probs);
        let xm = self.model_matrix(x);
        let b = a * xm.transpose();
        let m = &xm * &b;
        let d = u.component_mul(&m).sum();
        let th = DVector::from_column_slice(&self.theta);
        let mut grad = Vec::with_capacity(k);
        for i in 0..k {
            let dx = self.model_matrix_partial(x, i);
            let deta = &dx * &th;
            let dpi = &jac * deta;
            let mut du_i = DMatrix::zeros(u.nrows(), u.ncols());
            for (kk, mk) in du.iter().enumerate() {
                if dpi[kk] != 0.0 {
                    du_i += mk * dpi[kk];
                }
            }
            let pmat = &dx * &b;
            grad.push(2.0 * u.component_mul(&pmat).sum() + du_i.component_mul(&m).sum());
        }
        Ok((d, grad))
    }

    pub fn sensitivity_gradient(&self, x: &[f64], a: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
        Ok(self.sensitivity_with_gradient(x, a, k)?.1)
    }
}

fn symmetrize(mut f: DMatrix<f64>) -> DMatrix<f64> {
    let p = f.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (f[(i, j)] + f[(j, i)]);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    f
}

fn eta_increasing(eta: &[f64]) -> bool {
    eta.windows(2).all(|w| w[1] - w[0] > CUMULATIVE_MARGIN) && eta.iter().all(|e| e.is_finite())
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softmax_with_zero(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut out: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    out.push((-m).exp());
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Category probabilities from the `J - 1` free linear predictors.
pub fn probabilities_from_eta(family: LogitFamily, eta: &[f64]) -> Result<CategoryProbabilities> {
    if eta.iter().any(|e| e.is_nan()) {
        return Err(Error::InvalidModel("linear predictor is NaN".into()));
    }
    let eta: Vec<f64> = eta.iter().map(|e| e.clamp(-ETA_CLIP, ETA_CLIP)).collect();
    let jm1 = eta.len();
    let pi = match family {
        LogitFamily::BaselineCategory => softmax_with_zero(&eta),
        LogitFamily::AdjacentCategories => {
            let mut scores = vec![0.0; jm1];
            let mut acc = 0.0;
            for j in (0..jm1).rev() {
                acc += eta[j];
                scores[j] = acc;
            }
            softmax_with_zero(&scores)
        }
        LogitFamily::ContinuationRatio => {
            let mut pi = Vec::with_capacity(jm1 + 1);
            let mut survive = 1.0;
            for &e in &eta {
                pi.push(survive * logistic(e));
                survive *= logistic(-e);
            }
            pi.push(survive);
            pi
        }
        LogitFamily::Cumulative => {
            if !eta_increasing(&eta) {
                return Err(Error::InfeasiblePoint { index: 0 });
            }
            let mut pi = Vec::with_capacity(jm1 + 1);
            pi.push(logistic(eta[0]));
            for w in eta.windows(2) {
                // difference of logistics, written to avoid cancellation in the tails
                let (a, b) = (w[0], w[1]);
                let d = if a >= 0.0 {
                    logistic(-a) - logistic(-b)
                } else {
                    logistic(b) - logistic(a)
                };
                pi.push(d);
            }
            pi.push(logistic(-eta[jm1 - 1]));
            pi
        }
    };
    let mut probs = CategoryProbabilities::from_pi(pi);
    if family == LogitFamily::Cumulative {
        for (s, &e) in eta.iter().enumerate() {
            probs.gamma[s] = logistic(e);
            probs.rest[s] = logistic(-e);
        }
    }
    Ok(probs)
}

/// The symmetric `J x J` matrix `U_x`.
pub fn u_matrix(family: LogitFamily, pr: &CategoryProbabilities) -> DMatrix<f64> {
    let j = pr.j();
    let last = j - 1;
    let mut u = DMatrix::zeros(j, j);
    u[(last, last)] = 1.0;
    for s in 0..last {
        let si = s as isize;
        u[(s, s)] = match family {
            LogitFamily::BaselineCategory => pr.pi[s] * (1.0 - pr.pi[s]),
            LogitFamily::Cumulative => {
                let g = pr.g(si) * pr.r(si);
                g * g * (1.0 / pr.p(s) + 1.0 / pr.p(s + 1))
            }
            LogitFamily::AdjacentCategories => pr.g(si) * pr.r(si),
            LogitFamily::ContinuationRatio => pr.pi[s] * pr.r(si) / pr.r(si - 1),
        };
        for t in s + 1..last {
            let ti = t as isize;
            let v = match family {
                LogitFamily::BaselineCategory => -pr.pi[s] * pr.pi[t],
                LogitFamily::Cumulative if t == s + 1 => {
                    -pr.g(si) * pr.g(ti) * pr.r(si) * pr.r(ti) / pr.p(t)
                }
                LogitFamily::Cumulative => 0.0,
                LogitFamily::AdjacentCategories => pr.g(si) * pr.r(ti),
                LogitFamily::ContinuationRatio => 0.0,
            };
            u[(s, t)] = v;
            u[(t, s)] = v;
        }
    }
    u
}

/// `d U / d pi_k` for each `k`, treating the `J` probabilities as free
/// variables (the Jacobian columns sum to zero, so the constraint drops out).
pub fn du_dpi(family: LogitFamily, pr: &CategoryProbabilities) -> Vec<DMatrix<f64>> {
    let j = pr.j();
    let last = j - 1;
    let mut out = vec![DMatrix::zeros(j, j); j];
    let mut set = |s: usize, t: usize, grad: &[f64]| {
        for (k, g) in grad.iter().enumerate() {
            out[k][(s, t)] = *g;
            out[k][(t, s)] = *g;
        }
    };
    for s in 0..last {
        let si = s as isize;
        let (gs, rs) = (pr.g(si), pr.r(si));
        let grad: Vec<f64> = match family {
            LogitFamily::BaselineCategory => {
                (0..j).map(|k| if k == s { 1.0 - pr.pi[s] } else { pr.pi[s] }).collect()
            }
            LogitFamily::Cumulative => {
                let (ps, pn) = (pr.p(s), pr.p(s + 1));
                let uss = gs * gs * rs * rs * (1.0 / ps + 1.0 / pn);
                (0..j)
                    .map(|k| {
                        let mut v = if k <= s { 2.0 / gs } else { 2.0 / rs };
                        if k == s {
                            v -= pn / (ps * (ps + pn));
                        }
                        if k == s + 1 {
                            v -= ps / (pn * (ps + pn));
                        }
                        uss * v
                    })
                    .collect()
            }
            LogitFamily::AdjacentCategories => (0..j).map(|k| if k <= s { rs } else { gs }).collect(),
            LogitFamily::ContinuationRatio => {
                let prev = pr.r(si - 1);
                (0..j)
                    .map(|k| {
                        if k < s {
                            0.0
                        } else if k == s {
                            (rs / prev).powi(2)
                        } else {
                            (pr.pi[s] / prev).powi(2)
                        }
                    })
                    .collect()
            }
        };
        set(s, s, &grad);
        for t in s + 1..last {
            let ti = t as isize;
            let (gt, rt) = (pr.g(ti), pr.r(ti));
            let grad: Vec<f64> = match family {
                LogitFamily::BaselineCategory => (0..j)
                    .map(|k| {
                        if k == s {
                            -pr.pi[t]
                        } else if k == t {
                            -pr.pi[s]
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                LogitFamily::Cumulative if t == s + 1 => {
                    let pt = pr.p(t);
                    (0..j)
                        .map(|k| {
                            if k <= s {
                                -rs * rt * (1.0 + 2.0 * gs / pt)
                            } else if k == t {
                                -gs * rt * (1.0 - gs * rt / (pt * pt))
                            } else {
                                -gs * gt * (1.0 + 2.0 * rt / pt)
                            }
                        })
                        .collect()
                }
                LogitFamily::AdjacentCategories => (0..j)
                    .map(|k| {
                        if k <= s {
                            rt
                        } else if k <= t {
                            0.0
                        } else {
                            gs
                        }
                    })
                    .collect(),
                _ => continue,
            };
            set(s, t, &grad);
        }
    }
    out
}

/// Jacobian `d pi / d eta'` (rows: categories, columns: linear predictors).
/// The last column, which multiplies the constant reference predictor, is
/// filled with `pi`.
pub fn dpi_deta(family: LogitFamily, pr: &CategoryProbabilities) -> DMatrix<f64> {
    let j = pr.j();
    let last = j - 1;
    let mut m = DMatrix::zeros(j, j);
    for row in 0..j {
        for l in 0..last {
            let li = l as isize;
            m[(row, l)] = match family {
                LogitFamily::BaselineCategory => {
                    pr.pi[row] * (if row == l { 1.0 } else { 0.0 } - pr.pi[l])
                }
                LogitFamily::Cumulative => {
                    let v = pr.g(li) * pr.r(li);
                    if row == l {
                        v
                    } else if row == l + 1 {
                        -v
                    } else {
                        0.0
                    }
                }
                LogitFamily::AdjacentCategories => {
                    pr.pi[row] * (if row <= l { 1.0 } else { 0.0 } - pr.g(li))
                }
                LogitFamily::ContinuationRatio => {
                    let cond = pr.pi[l] / pr.r(li - 1);
                    let own = if row == l { 1.0 } else { 0.0 };
                    let hazard = if l <= row { cond } else { 0.0 };
                    pr.pi[row] * (own - hazard)
                }
            };
        }
        m[(row, last)] = pr.pi[row];
    }
    m
}
