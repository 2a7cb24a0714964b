//! Lift-one weight optimization on a fixed support.
//!
//! Every coordinate update moves along the allocation path
//! `F(z) = (1 - z) G_i + z F_i`, where `G_i` is the information of the other
//! points with their weights rescaled to sum to one. When `w_i = 1` the
//! other points are blended uniformly instead. `log |F(z)|` is concave in
//! `z`, so the univariate maximization is well posed.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::design::{Design, DesignPoint};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, log_det, FisherMatrix};
use crate::model::ModelSpec;

/// Weights below this after an update are set to exactly zero.
pub const ZERO_SNAP: f64 = 1e-12;
const ROUNDING: f64 = 1e-14;
const SLOPE_MAX_ITER: usize = 200;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Numerical maximization along the path (any model).
    General,
    /// Closed-form maximizer of the GLM determinant polynomial.
    Glm,
}

#[derive(Debug, Clone)]
pub struct LiftOneResult {
    pub weights: Vec<f64>,
    pub log_det: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// `log |F|` at the start and after each sweep.
    pub history: Vec<f64>,
}

/// `f(z) = a z (1 - z)^(p - 1) + b (1 - z)^p`, the determinant along a GLM
/// allocation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile {
    pub a: f64,
    pub b: f64,
    pub p: usize,
}

impl WeightProfile {
    /// Recovers `a` and `b` from `f(0)` and `f(1/2)`.
    pub fn fit(f0: f64, f_half: f64, p: usize) -> Self {
        Self {
            a: f_half * 2f64.powi(p as i32) - f0,
            b: f0,
            p,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let pm1 = self.p as i32 - 1;
        self.a * z * (1.0 - z).powi(pm1) + self.b * (1.0 - z).powi(self.p as i32)
    }

    /// Maximizer over `[0, 1]`.
    pub fn argmax(&self) -> f64 {
        let p = self.p as f64;
        if self.b <= 0.0 {
            return if self.a > 0.0 { 1.0 / p } else { 0.0 };
        }
        if self.a > self.b * p {
            (self.a - self.b * p) / (p * (self.a - self.b))
        } else {
            0.0
        }
    }
}

/// Closed-form maximizer from `log f(0)` and `log f(1/2)`, stable when the
/// determinants themselves would overflow.
pub fn profile_argmax_log(log_f0: f64, log_f_half: f64, p: usize) -> f64 {
    let pf = p as f64;
    if log_f_half == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_f0 == f64::NEG_INFINITY {
        return 1.0 / pf;
    }
    let log_r = log_f_half + pf * LN_2 - log_f0;
    if log_r > 300.0 {
        // r -> infinity: z* -> 1/p
        return 1.0 / pf;
    }
    let r = log_r.exp();
    if r - 1.0 > pf {
        (r - 1.0 - pf) / (pf * (r - 2.0))
    } else {
        0.0
    }
}

/// Initial weight of a new point: `(2^p d - (p + 1) b) / (p (2^p d - 2 b))`
/// when `2^p d > (p + 1) b`, else 0. Here `d = f` at the half-half mixture
/// with the new point and `b = f` of the current design.
pub fn alpha_new_point(d_t: f64, b_t: f64, p: usize) -> f64 {
    let two_p = 2f64.powi(p as i32);
    let pf = p as f64;
    if two_p * d_t > (pf + 1.0) * b_t {
        (two_p * d_t - (pf + 1.0) * b_t) / (pf * (two_p * d_t - 2.0 * b_t))
    } else {
        0.0
    }
}

/// [`alpha_new_point`] from log-determinants.
pub fn alpha_new_point_log(log_d: f64, log_b: f64, p: usize) -> f64 {
    profile_argmax_log(log_b, log_d, p)
}

fn weighted_sum(fs: &[DMatrix<f64>], coef: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let p = fs[0].nrows();
    let mut g = DMatrix::zeros(p, p);
    for (j, f) in fs.iter().enumerate() {
        let c = coef(j);
        if c != 0.0 {
            g += f * c;
        }
    }
    g
}

/// Maximizer of the concave path `log |(1 - z) G + z F_i|`, found from its
/// exact slope `tr(F(z)^{-1} D)` with `D = F_i - G`: endpoint signs decide the
/// boundary cases, otherwise Newton steps (curvature `-tr((F^{-1} D)^2)`)
/// safeguarded by bisection find the root. Comparing `log |F|` values alone
/// cannot resolve `z` much below `sqrt(machine eps)` on a flat maximum.
fn general_argmax(g: &DMatrix<f64>, fi: &DMatrix<f64>) -> f64 {
    let diff = fi - g;
    let slope_curv = |z: f64| -> Option<(f64, f64)> {
        let m = g * (1.0 - z) + fi * z;
        let b = inverse_spd(&m)? * &diff;
        Some((b.trace(), -b.component_mul(&b.transpose()).sum()))
    };
    // a singular endpoint has log|F| = -inf there, i.e. an infinite slope
    if slope_curv(0.0).is_some_and(|(s, _)| s <= 0.0) {
        return 0.0;
    }
    if slope_curv(1.0).is_some_and(|(s, _)| s >= 0.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut z = 0.5;
    for _ in 0..SLOPE_MAX_ITER {
        let Some((s, c)) = slope_curv(z) else {
            return z;
        };
        if s > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let newton = z - s / c;
        let next = if c < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - z).abs() <= 4.0 * f64::EPSILON * z.max(1e-300) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        z = next;
    }
    z
}

/// Newton iterations for `max log |sum w_i F_i|` over the positive weights,
/// subject to `sum w_i = 1`. A weight the full step would push below zero is
/// dropped (when that does not lower the objective beyond rounding) and the
/// step is recomputed on the rest; otherwise the step is shortened. Only
/// improvements (up to rounding) are kept.
fn newton_polish(fs: &[DMatrix<f64>], w: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
    let mut w = w.to_vec();
    let mut cur = current;
    let mut improved = false;
    let tol = |c: f64| ROUNDING * (1.0 + c.abs());
    for _ in 0..NEWTON_MAX_ITER {
        let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        let n = support.len();
        if n < 2 {
            break;
        }
        let inv = inverse_spd(&weighted_sum(fs, |j| w[j]))?;
        let b: Vec<DMatrix<f64>> = support.iter().map(|&i| &inv * &fs[i]).collect();
        let grad: Vec<f64> = b.iter().map(|bi| bi.trace()).collect();
        let mean = grad.iter().sum::<f64>() / n as f64;
        if grad.iter().all(|g| (g - mean).abs() <= 1e-15 * mean.abs().max(1.0)) {
            break;
        }
        // KKT system [H 1; 1' 0] [dw; lambda] = [-g; 0], H_ij = -tr(B_i B_j)
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = nalgebra::DVector::zeros(n + 1);
        for r in 0..n {
            for c in r..n {
                let h = -b[r].component_mul(&b[c].transpose()).sum();
                kkt[(r, c)] = h;
                kkt[(c, r)] = h;
            }
            kkt[(r, n)] = 1.0;
            kkt[(n, r)] = 1.0;
            rhs[r] = -grad[r];
        }
        let sol = kkt.svd(true, true).solve(&rhs, 1e-13).ok()?;
        let dw: Vec<f64> = (0..n).map(|r| sol[r]).collect();
        let shift: f64 = dw.iter().sum::<f64>() / n as f64;
        let dw: Vec<f64> = dw.iter().map(|d| d - shift).collect();

        let blocked: Vec<usize> = (0..n).filter(|&r| w[support[r]] + dw[r] <= 0.0).collect();
        if !blocked.is_empty() {
            let mut trial = w.clone();
            for &r in &blocked {
                trial[support[r]] = 0.0;
            }
            let total: f64 = trial.iter().sum();
            if total > 0.0 {
                trial.iter_mut().for_each(|v| *v /= total);
                let lt = log_det(&weighted_sum(fs, |j| trial[j]));
                if lt >= cur - tol(cur) {
                    w = trial;
                    cur = lt;
                    improved = true;
                    continue;
                }
            }
        }

        let mut t: f64 = 1.0;
        for (r, &i) in support.iter().enumerate() {
            if dw[r] < 0.0 {
                t = t.min(0.9 * w[i] / -dw[r]);
            }
        }
        let mut accepted = false;
        while t > 1e-10 {
            let mut trial = w.clone();
            for (r, &i) in support.iter().enumerate() {
                trial[i] += t * dw[r];
            }
            let total: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= total);
            let lt = log_det(&weighted_sum(fs, |j| trial[j]));
            if lt >= cur - tol(cur) {
                let step = support.iter().map(|&i| (trial[i] - w[i]).abs()).fold(0.0, f64::max);
                w = trial;
                cur = lt;
                accepted = step > 0.0;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        improved = true;
    }
    improved.then_some((w, cur))
}

/// `max_i tr(F^{-1} F_i) - p` over the support's own points.
fn support_gap(fs: &[DMatrix<f64>], w: &[f64]) -> Option<f64> {
    let p = fs[0].nrows() as f64;
    let inv = inverse_spd(&weighted_sum(fs, |j| w[j]))?;
    let worst = fs
        .iter()
        .map(|f| inv.component_mul(f).sum())
        .fold(f64::NEG_INFINITY, f64::max);
    Some(worst - p)
}

/// Runs lift-one sweeps over the per-point information matrices `fs` from
/// the starting weights `w0` until a sweep gains less than `eps` in `log |F|`
/// and every point's sensitivity is within `eps` of `p` (or the sweep left the
/// weights untouched).
pub fn lift_one(
    fs: &[DMatrix<f64>],
    w0: &[f64],
    eps: f64,
    max_sweeps: usize,
    profile: Profile,
) -> Result<LiftOneResult> {
    let m = fs.len();
    if m == 0 || m != w0.len() {
        return Err(Error::DimensionMismatch(format!(
            "{m} information matrices but {} weights",
            w0.len()
        )));
    }
    let p = fs[0].nrows();
    let mut w = w0.to_vec();
    let mut current = log_det(&weighted_sum(fs, |j| w[j]));
    if !current.is_finite() {
        return Err(Error::SingularStart);
    }
    let mut history = vec![current];
    if m == 1 {
        return Ok(LiftOneResult {
            weights: w,
            log_det: current,
            sweeps: 0,
            converged: true,
            history,
        });
    }
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let start = current;
        let before = w.clone();
        for i in 0..m {
            let others: f64 = (0..m).filter(|&j| j != i).map(|j| w[j]).sum();
            let coef: Vec<f64> = if others > 0.0 {
                (0..m).map(|j| if j == i { 0.0 } else { w[j] / others }).collect()
            } else {
                (0..m).map(|j| if j == i { 0.0 } else { 1.0 / (m as f64 - 1.0) }).collect()
            };
            let g = weighted_sum(fs, |j| coef[j]);
            let path = |z: f64| -> f64 {
                let mut f = g.clone() * (1.0 - z);
                f += &fs[i] * z;
                log_det(&f)
            };
            let mut z = match profile {
                Profile::General => general_argmax(&g, &fs[i]),
                Profile::Glm => profile_argmax_log(path(0.0), path(0.5), p),
            };
            let mut lz = path(z);
            if z < ZERO_SNAP && z != 0.0 {
                z = 0.0;
                lz = path(0.0);
            }
            // the update maximizes along the path, which contains the
            // current weights; allow for rounding in the comparison
            if lz >= current - ROUNDING * (1.0 + current.abs()) {
                for j in 0..m {
                    w[j] = if j == i { z } else { (1.0 - z) * coef[j] };
                }
                current = lz;
            }
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            w.iter_mut().for_each(|v| *v /= total);
            current = log_det(&weighted_sum(fs, |j| w[j]));
        }
        // A small gain alone leaves sensitivities about sqrt(eps) above p,
        // and coordinate sweeps close that gap slowly when support points
        // nearly coincide. Newton steps on the positive weights follow each
        // sweep; convergence also requires the equivalence condition on the
        // support.
        let mut gap = support_gap(fs, &w);
        if w != before || gap.is_some_and(|g| g > eps) {
            if let Some((wn, ln)) = newton_polish(fs, &w, current) {
                w = wn;
                current = ln;
                gap = support_gap(fs, &w);
            }
        }
        history.push(current);
        if current - start < eps && gap.is_none_or(|g| g <= eps) {
            converged = true;
            break;
        }
        if w == before {
            // neither the sweep nor the Newton steps can move the weights
            break;
        }
    }
    Ok(LiftOneResult {
        weights: w,
        log_det: current,
        sweeps,
        converged,
        history,
    })
}

/// Lift-one with numerical coordinate updates (any model).
pub fn liftone_general(
    points: &[DesignPoint],
    w0: &[f64],
    model: &ModelSpec,
    eps: f64,
) -> Result<Vec<f64>> {
    let fs = point_information(points, model)?;
    Ok(lift_one(&fs, w0, eps, DEFAULT_MAX_SWEEPS, Profile::General)?.weights)
}

/// Lift-one with the closed-form GLM coordinate updates.
pub fn liftone_glm(points: &[DesignPoint], w0: &[f64], model: &ModelSpec, eps: f64) -> Result<Vec<f64>> {
    if !model.is_glm() {
        return Err(Error::InvalidModel("the closed-form lift-one needs a GLM".into()));
    }
    let fs = point_information(points, model)?;
    Ok(lift_one(&fs, w0, eps, DEFAULT_MAX_SWEEPS, Profile::Glm)?.weights)
}

/// Default cap on lift-one sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

pub fn point_information(points: &[DesignPoint], model: &ModelSpec) -> Result<Vec<DMatrix<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            model
                .fisher_at_point(x)
                .map(FisherMatrix::into_inner)
                .map_err(|e| match e {
                    Error::InfeasiblePoint { .. } => Error::InfeasiblePoint { index: i },
                    other => other,
                })
        })
        .collect()
}

/// Re-optimizes the weights of `design` on its own support.
pub fn optimize_weights(design: &Design, model: &ModelSpec, eps: f64, profile: Profile) -> Result<Design> {
    let fs = point_information(design.points(), model)?;
    let r = lift_one(&fs, design.weights(), eps, DEFAULT_MAX_SWEEPS, profile)?;
    Design::normalized(design.points().to_vec(), r.weights)
}
