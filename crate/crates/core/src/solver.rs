//! The outer design loop: merge nearby points, re-optimize weights, drop
//! zero-weight points, then search the whole factor space for the point of
//! largest sensitivity. Stops once that sensitivity is at most `p + eps`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxopt::{self, BoxProblem};
use crate::design::{
    distance, information_matrix, merge_close_points, relative_efficiency, Design, DesignPoint,
    DistanceMetric, FactorSpace,
};
use crate::error::{Error, Result};
use crate::glm::{minimally_supported_initial, random_point, vertices};
use crate::liftone::{self, alpha_new_point_log, lift_one, point_information, Profile};
use crate::linalg::{inverse_spd, log_det, FisherMatrix};
use crate::model::ModelSpec;

/// How the first design is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Random box vertices, then full-space draws if the vertices fall short.
    Vertices,
    FullSpace,
    /// `p` points with a full-rank model matrix (GLMs only).
    MinimallySupported,
    User(Design),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Points closer than this are merged.
    pub delta: f64,
    /// Convergence threshold for lift-one and the stopping rule.
    pub eps: f64,
    pub metric: DistanceMetric,
    /// Random starts per discrete combination, in addition to the box center.
    pub starts_per_combo: usize,
    pub max_outer_iter: usize,
    pub seed: u64,
    /// Closed-form weight updates and `alpha` insertion for GLMs.
    pub glm_fast_path: bool,
    /// `None` picks minimal support on the GLM fast path, vertices otherwise.
    pub init: Option<InitStrategy>,
    pub init_max_tries: usize,
    pub optimizer_tol: f64,
    pub optimizer_max_iter: usize,
    pub combo_cap: usize,
    pub max_sweeps: usize,
    /// Drop points below [`CLEANUP_WEIGHT`] if efficiency stays above [`CLEANUP_EFFICIENCY`].
    pub cleanup: bool,
    /// Treat discrete factors as continuous, then round to levels.
    pub relax_discrete: bool,
    /// After the weight update, move each support point uphill in the
    /// sensitivity when that raises `log |F|`.
    pub relocate: bool,
}

pub const CLEANUP_WEIGHT: f64 = 0.005;
pub const CLEANUP_EFFICIENCY: f64 = 0.9999;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            eps: 1e-12,
            metric: DistanceMetric::Euclidean,
            starts_per_combo: 3,
            max_outer_iter: 500,
            seed: 0,
            glm_fast_path: false,
            init: None,
            init_max_tries: 10_000,
            optimizer_tol: 1e-8,
            optimizer_max_iter: 500,
            combo_cap: 100_000,
            max_sweeps: liftone::DEFAULT_MAX_SWEEPS,
            cleanup: false,
            relax_discrete: false,
            relocate: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidModel("delta must be positive".into()));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidModel("eps must be positive".into()));
        }
        if !(self.optimizer_tol > 0.0) {
            return Err(Error::InvalidModel("optimizer_tol must be positive".into()));
        }
        if self.max_outer_iter == 0 || self.max_sweeps == 0 || self.init_max_tries == 0 {
            return Err(Error::InvalidModel(
                "max_outer_iter, max_sweeps and init_max_tries must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One outer iteration, recorded after the new-point search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub support_size: usize,
    pub log_det: f64,
    pub max_sensitivity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub design: Design,
    pub log_det: f64,
    pub max_sensitivity: f64,
    /// Where the final new-point search found `max_sensitivity`.
    pub argmax: DesignPoint,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

fn check_dims(model: &ModelSpec, space: &FactorSpace) -> Result<()> {
    if model.dim() != space.dim() {
        return Err(Error::DimensionMismatch(format!(
            "the model uses {} factors but the space declares {}",
            model.dim(),
            space.dim()
        )));
    }
    Ok(())
}

fn uses_fast_path(model: &ModelSpec, config: &SolverConfig) -> bool {
    config.glm_fast_path && model.is_glm()
}

/// Builds the starting design per `config.init`.
pub fn initial_design(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig) -> Result<Design> {
    check_dims(model, space)?;
    let strategy = match &config.init {
        Some(s) => s.clone(),
        None if uses_fast_path(model, config) => InitStrategy::MinimallySupported,
        None => InitStrategy::Vertices,
    };
    match strategy {
        InitStrategy::User(d) => {
            d.check_in(space)?;
            let f = information_matrix(&d, model)?;
            if !f.log_det().is_finite() {
                return Err(Error::SingularDesign);
            }
            Ok(d)
        }
        InitStrategy::MinimallySupported => match model {
            ModelSpec::Glm(g) => minimally_supported_initial(g, space, config.seed, config.init_max_tries)
                .map_err(|e| match e {
                    Error::RankDeficientSpace { p, tries } => Error::InitFailure {
                        tries,
                        best_rank: 0,
                        p,
                    },
                    other => other,
                }),
            ModelSpec::Mlm(_) => Err(Error::InvalidModel(
                "minimally supported initialization needs a GLM".into(),
            )),
        },
        InitStrategy::Vertices => sequential_init(model, space, config, true),
        InitStrategy::FullSpace => sequential_init(model, space, config, false),
    }
}

/// Draws points one by one (skipping infeasible ones and ones within `delta`
/// of an earlier draw) until the accumulated information is nonsingular.
fn sequential_init(
    model: &ModelSpec,
    space: &FactorSpace,
    config: &SolverConfig,
    from_vertices: bool,
) -> Result<Design> {
    let p = model.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool = if from_vertices {
        let mut v = vertices(space, &mut rng);
        v.shuffle(&mut rng);
        v
    } else {
        Vec::new()
    };
    pool.reverse();

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut best_rank = 0;
    for _ in 0..config.init_max_tries {
        let x = pool.pop().unwrap_or_else(|| random_point(space, &mut rng));
        if points
            .iter()
            .any(|q| distance(q, &x, config.metric, space) < config.delta)
        {
            continue;
        }
        let Ok(fx) = model.fisher_at_point(&x) else {
            continue;
        };
        sum += fx.matrix();
        points.push(x);
        if log_det(&sum).is_finite() {
            return Design::uniform(points.into_iter().map(DesignPoint::new).collect());
        }
        best_rank = best_rank.max(FisherMatrix::new(sum.clone()).rank(1e-10));
    }
    Err(Error::InitFailure {
        tries: config.init_max_tries,
        best_rank,
        p,
    })
}

/// Maximizes `d(x, xi)` over the factor space given `a = F(xi)^{-1}`:
/// one box search per discrete combination, best value wins (ties go to the
/// earlier combination).
pub fn new_point_search(
    model: &ModelSpec,
    space: &FactorSpace,
    a: &DMatrix<f64>,
    config: &SolverConfig,
    seed: u64,
) -> Result<(DesignPoint, f64)> {
    search_with_hints(model, space, a, config, seed, &[])
}

/// [`new_point_search`] with extra starts at `hints`. Local maxima of the
/// sensitivity sit at or next to support points, so seeding the ascent there
/// catches excesses a few random starts would miss.
fn search_with_hints(
    model: &ModelSpec,
    space: &FactorSpace,
    a: &DMatrix<f64>,
    config: &SolverConfig,
    seed: u64,
    hints: &[DesignPoint],
) -> Result<(DesignPoint, f64)> {
    check_dims(model, space)?;
    let count = space.combination_count();
    if count > config.combo_cap as f64 {
        return Err(Error::ComboExplosion {
            count,
            cap: config.combo_cap,
        });
    }
    let combos = space.combinations();
    let k = space.k();
    let results: Vec<Option<(Vec<f64>, f64)>> = combos
        .par_iter()
        .enumerate()
        .map(|(ci, combo)| {
            let extra: Vec<Vec<f64>> = hints
                .iter()
                .filter(|h| h[k..] == combo[..])
                .map(|h| h[..k].to_vec())
                .collect();
            search_combo(model, space, a, config, seed, ci, combo, k, &extra)
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    best.map(|(x, d)| (DesignPoint::new(x), d)).ok_or(Error::AllStartsInvalid)
}

fn full_point(cont: &[f64], combo: &[f64]) -> Vec<f64> {
    let mut x = cont.to_vec();
    x.extend_from_slice(combo);
    x
}

#[allow(clippy::too_many_arguments)]
fn search_combo(
    model: &ModelSpec,
    space: &FactorSpace,
    a: &DMatrix<f64>,
    config: &SolverConfig,
    seed: u64,
    ci: usize,
    combo: &[f64],
    k: usize,
    extra_starts: &[Vec<f64>],
) -> Option<(Vec<f64>, f64)> {
    if k == 0 {
        let d = model.sensitivity(combo, a).ok()?;
        return Some((combo.to_vec(), d));
    }
    let bounds = space.continuous_bounds();
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let objective = |c: &[f64]| -> (f64, Vec<f64>) {
        match model.sensitivity_with_gradient(&full_point(c, combo), a, k) {
            Ok(v) if v.0.is_finite() => v,
            _ => (f64::NEG_INFINITY, vec![0.0; k]),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(ci as u64));
    let mut starts = boxopt::default_starts(&lower, &upper, config.starts_per_combo, &mut rng);
    if model.is_cumulative() {
        // trade infeasible starts for feasible draws where possible
        for s in starts.iter_mut() {
            for _ in 0..200 {
                if model.feasible(&full_point(s, combo)) {
                    break;
                }
                *s = lower.iter().zip(&upper).map(|(&l, &u)| rand::Rng::gen_range(&mut rng, l..=u)).collect();
            }
        }
    }
    for e in extra_starts {
        let mut e = e.clone();
        for (v, (l, u)) in e.iter_mut().zip(lower.iter().zip(&upper)) {
            *v = v.clamp(*l, *u);
        }
        starts.push(e);
    }
    let problem = BoxProblem {
        lower,
        upper,
        objective: &objective,
        starts,
    };
    let r = boxopt::maximize(&problem, config.optimizer_tol, config.optimizer_max_iter).ok()?;
    Some((full_point(&r.argmax, combo), r.value))
}

fn inverse_of(design: &Design, model: &ModelSpec) -> Result<(f64, DMatrix<f64>, FisherMatrix)> {
    let f = information_matrix(design, model)?;
    let ld = f.log_det();
    let a = inverse_spd(f.matrix()).ok_or(Error::SingularDesign)?;
    Ok((ld, a, f))
}

/// Runs the design loop to convergence or `max_outer_iter`.
pub fn solve(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    check_dims(model, space)?;
    if config.relax_discrete && !space.discrete_levels().is_empty() {
        return solve_relaxed(model, space, config);
    }
    let init = initial_design(model, space, config)?;
    let mut report = run_loop(model, space, config, init)?;
    if config.cleanup && report.converged {
        report = cleanup(model, space, config, report)?;
    }
    Ok(report)
}

/// The loop itself, from a given nonsingular start.
pub fn run_loop(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig, init: Design) -> Result<SolveReport> {
    let p = model.num_params();
    let fast = uses_fast_path(model, config);
    let profile = if fast { Profile::Glm } else { Profile::General };
    let mut design = init;
    let mut trace = Vec::new();
    let mut last: Option<(Design, f64, f64, DesignPoint)> = None;

    for t in 0..config.max_outer_iter {
        // merge
        let before = information_matrix(&design, model)?.log_det();
        let merged = merge_close_points(&design, space, config.metric, config.delta);
        if merged.len() < design.len() {
            match information_matrix(&merged, model) {
                Ok(f) if f.log_det().is_finite() => {
                    let after = f.log_det();
                    let bound = 10.0 * config.delta * p as f64 * (1.0 + before.abs());
                    if before.is_finite() && before - after > bound {
                        log::warn!("iteration {t}: merge lowered log|F| by {} (bound {bound})", before - after);
                    }
                    design = merged;
                }
                _ => log::debug!("iteration {t}: merged design is singular or infeasible; keeping the unmerged one"),
            }
        }

        // weights
        let fs = point_information(design.points(), model)?;
        let lo = lift_one(&fs, design.weights(), config.eps, config.max_sweeps, profile)?;
        if lo.history.windows(2).any(|w| w[1] < w[0] - 1e-12 * (1.0 + w[0].abs())) {
            log::warn!("iteration {t}: lift-one history decreased");
        }
        design = Design::normalized(design.points().to_vec(), lo.weights)?.support();
        if config.relocate && space.k() > 0 {
            if let Some(moved) = relocate(model, space, config, &design)? {
                let fs = point_information(moved.points(), model)?;
                let lo = lift_one(&fs, moved.weights(), config.eps, config.max_sweeps, profile)?;
                design = Design::normalized(moved.points().to_vec(), lo.weights)?.support();
            }
        }

        // new point
        let (ld, a, f) = inverse_of(&design, model)?;
        let (x_star, d_star) = new_point_search(model, space, &a, config, config.seed.wrapping_add(t as u64))?;
        trace.push(IterationRecord {
            iteration: t + 1,
            support_size: design.len(),
            log_det: ld,
            max_sensitivity: d_star,
        });
        log::debug!("iteration {}: m = {}, log|F| = {ld}, max d = {d_star}", t + 1, design.len());
        if d_star <= p as f64 + config.eps {
            let (x_star, d_star) = refine_max(model, space, &a, config, &design, x_star, d_star)?;
            return Ok(finish(design, ld, d_star, x_star, t + 1, true, trace));
        }
        last = Some((design.clone(), ld, d_star, x_star.clone()));

        // append the new point
        let (mut points, mut weights) = (design.points().to_vec(), design.weights().to_vec());
        let alpha = if fast {
            let fx = model.fisher_at_point(&x_star)?;
            let half = (f.matrix() + fx.matrix()) * 0.5;
            alpha_new_point_log(log_det(&half), ld, p)
        } else {
            0.0
        };
        weights.iter_mut().for_each(|w| *w *= 1.0 - alpha);
        points.push(x_star);
        weights.push(alpha);
        design = Design::normalized(points, weights)?;
    }
    let (design, ld, d, x) = last.expect("max_outer_iter >= 1");
    let (_, a, _) = inverse_of(&design, model)?;
    let (x, d) = refine_max(model, space, &a, config, &design, x, d)?;
    Ok(finish(design, ld, d, x, config.max_outer_iter, false, trace))
}

/// Replaces each support point's continuous part by the local maximizer of
/// the sensitivity reached from it, keeping moves that raise `log |F|`. To
/// first order the gain is `w_i (d(x') - d(x_i))`, so this refines locations
/// that merging can only average. Moves to within `delta` of another point
/// are skipped. `None` when nothing moved.
fn relocate(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig, design: &Design) -> Result<Option<Design>> {
    let k = space.k();
    let bounds = space.continuous_bounds();
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut points = design.points().to_vec();
    let weights = design.weights();
    let (mut ld, mut a, _) = inverse_of(design, model)?;
    let mut moved = false;
    for i in 0..points.len() {
        let combo = points[i].0[k..].to_vec();
        let objective = |c: &[f64]| -> (f64, Vec<f64>) {
            match model.sensitivity_with_gradient(&full_point(c, &combo), &a, k) {
                Ok(v) if v.0.is_finite() => v,
                _ => (f64::NEG_INFINITY, vec![0.0; k]),
            }
        };
        let problem = BoxProblem {
            lower: lower.clone(),
            upper: upper.clone(),
            objective: &objective,
            starts: vec![points[i].0[..k].to_vec()],
        };
        let Ok(r) = boxopt::maximize(&problem, config.optimizer_tol, config.optimizer_max_iter) else {
            continue;
        };
        let candidate = DesignPoint(full_point(&r.argmax, &combo));
        // a move the next merge would undo only costs objective
        let crowded = (0..points.len())
            .any(|j| j != i && distance(&candidate, &points[j], config.metric, space) < config.delta);
        if candidate == points[i] || crowded {
            continue;
        }
        let mut trial = points.clone();
        trial[i] = candidate;
        let trial_design = Design::normalized(trial.clone(), weights.to_vec())?;
        let Ok((lt, at, _)) = inverse_of(&trial_design, model) else {
            continue;
        };
        if lt > ld + 1e-14 * (1.0 + ld.abs()) {
            points = trial;
            ld = lt;
            a = at;
            moved = true;
        }
    }
    Ok(if moved { Some(Design::normalized(points, weights.to_vec())?) } else { None })
}

/// The reported maximum also tries starts at the support points. The
/// stopping rule does not: maxima closer than `delta` to a support point are
/// merged away before they can be weighted, and chasing them keeps the loop
/// cycling.
fn refine_max(
    model: &ModelSpec,
    space: &FactorSpace,
    a: &DMatrix<f64>,
    config: &SolverConfig,
    design: &Design,
    x: DesignPoint,
    d: f64,
) -> Result<(DesignPoint, f64)> {
    let (xh, dh) = search_with_hints(model, space, a, config, config.seed, design.points())?;
    Ok(if dh > d { (xh, dh) } else { (x, d) })
}

fn finish(
    design: Design,
    log_det: f64,
    max_sensitivity: f64,
    argmax: DesignPoint,
    iterations: usize,
    converged: bool,
    trace: Vec<IterationRecord>,
) -> SolveReport {
    let order = design.canonical_order();
    let points = order.iter().map(|&i| design.points()[i].clone()).collect();
    let weights = order.iter().map(|&i| design.weights()[i]).collect();
    SolveReport {
        design: Design::normalized(points, weights).expect("reordering keeps a valid design"),
        log_det,
        max_sensitivity,
        argmax,
        iterations,
        converged,
        trace,
    }
}

/// Removes negligible points when doing so costs almost no efficiency.
fn cleanup(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig, report: SolveReport) -> Result<SolveReport> {
    let d = &report.design;
    let keep: Vec<usize> = (0..d.len()).filter(|&i| d.weights()[i] >= CLEANUP_WEIGHT).collect();
    if keep.len() == d.len() || keep.is_empty() {
        return Ok(report);
    }
    let trimmed = Design::normalized(
        keep.iter().map(|&i| d.points()[i].clone()).collect(),
        keep.iter().map(|&i| d.weights()[i]).collect(),
    )?;
    let Ok(eff) = relative_efficiency(&trimmed, d, model) else {
        return Ok(report);
    };
    if eff < CLEANUP_EFFICIENCY {
        return Ok(report);
    }
    let (ld, a, _) = inverse_of(&trimmed, model)?;
    let (x, dmax) = new_point_search(model, space, &a, config, config.seed)?;
    let converged = dmax <= model.num_params() as f64 + config.eps;
    let (x, dmax) = refine_max(model, space, &a, config, &trimmed, x, dmax)?;
    Ok(finish(trimmed, ld, dmax, x, report.iterations, converged, report.trace))
}

/// Solves with every discrete factor widened to its level range, snaps the
/// result to the nearest levels and re-optimizes the weights once.
fn solve_relaxed(model: &ModelSpec, space: &FactorSpace, config: &SolverConfig) -> Result<SolveReport> {
    let mut bounds = space.continuous_bounds().to_vec();
    for levels in space.discrete_levels() {
        let (lo, hi) = (levels[0], levels[levels.len() - 1]);
        if lo == hi {
            return Err(Error::InvalidSpace("relaxation needs at least two levels per discrete factor".into()));
        }
        bounds.push((lo, hi));
    }
    let relaxed = FactorSpace::continuous(bounds)?;
    let inner = SolverConfig {
        relax_discrete: false,
        cleanup: false,
        ..config.clone()
    };
    let rel = solve(model, &relaxed, &inner)?;

    let k = space.k();
    let mut points: Vec<DesignPoint> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, &w) in rel.design.points().iter().zip(rel.design.weights()) {
        let snapped: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| if i >= k { space.snap_level(i, v) } else { v })
            .collect();
        if !model.feasible(&snapped) {
            continue;
        }
        match points.iter().position(|q| q.coords() == snapped.as_slice()) {
            Some(j) => weights[j] += w,
            None => {
                points.push(DesignPoint::new(snapped));
                weights.push(w);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::SingularDesign);
    }
    let rounded = Design::normalized(points, weights)?;
    let profile = if uses_fast_path(model, config) { Profile::Glm } else { Profile::General };
    let fs = point_information(rounded.points(), model)?;
    let lo = lift_one(&fs, rounded.weights(), config.eps, config.max_sweeps, profile)?;
    let design = Design::normalized(rounded.points().to_vec(), lo.weights)?.support();
    let (ld, a, _) = inverse_of(&design, model)?;
    let (x, dmax) = new_point_search(model, space, &a, config, config.seed)?;
    let converged = dmax <= model.num_params() as f64 + config.eps;
    let (x, dmax) = refine_max(model, space, &a, config, &design, x, dmax)?;
    Ok(finish(design, ld, dmax, x, rel.iterations, converged, rel.trace))
}

/// Independent optimality check: scans `grid_density` points per continuous
/// dimension in every discrete combination, then polishes the best grid
/// point and the support points of each combination with a box ascent. Returns the largest
/// sensitivity found and where.
pub fn verify_optimality(
    design: &Design,
    model: &ModelSpec,
    space: &FactorSpace,
    grid_density: usize,
) -> Result<(f64, DesignPoint)> {
    check_dims(model, space)?;
    let f = information_matrix(design, model)?;
    let a = inverse_spd(f.matrix()).ok_or(Error::SingularDesign)?;
    let k = space.k();
    let combos = space.combinations();
    let n = grid_density.max(1);
    let cells = n.checked_pow(k as u32).ok_or_else(|| {
        Error::InvalidSpace(format!("a {n}^{k} grid is too large"))
    })?;
    let bounds = space.continuous_bounds().to_vec();
    let coord = |i: usize, step: usize| -> f64 {
        let (lo, hi) = bounds[i];
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * step as f64 / (n - 1) as f64
        }
    };

    let per_combo: Vec<Option<(Vec<f64>, f64)>> = combos
        .par_iter()
        .map(|combo| {
            // grid scan, parallel over the first coordinate's slices
            let scan = (0..cells)
                .into_par_iter()
                .map(|cell| {
                    let mut rem = cell;
                    let mut c = vec![0.0; k];
                    for i in (0..k).rev() {
                        c[i] = coord(i, rem % n);
                        rem /= n;
                    }
                    let x = full_point(&c, combo);
                    let d = model.sensitivity(&x, &a).unwrap_or(f64::NEG_INFINITY);
                    (cell, d, x)
                })
                .reduce_with(|l, r| if r.1 > l.1 || (r.1 == l.1 && r.0 < l.0) { r } else { l });
            let (_, d_grid, x_grid) = scan?;
            if !d_grid.is_finite() {
                return None;
            }
            if k == 0 {
                return Some((x_grid, d_grid));
            }
            let objective = |c: &[f64]| -> (f64, Vec<f64>) {
                match model.sensitivity_with_gradient(&full_point(c, combo), &a, k) {
                    Ok(v) if v.0.is_finite() => v,
                    _ => (f64::NEG_INFINITY, vec![0.0; k]),
                }
            };
            let problem = BoxProblem {
                lower: bounds.iter().map(|b| b.0).collect(),
                upper: bounds.iter().map(|b| b.1).collect(),
                objective: &objective,
                // maxima right next to support points can fall between
                // grid nodes, so the support points are starts too
                starts: std::iter::once(x_grid[..k].to_vec())
                    .chain(design.points().iter().filter(|x| x.0[k..] == combo[..]).map(|x| x.0[..k].to_vec()))
                    .collect(),
            };
            match boxopt::maximize(&problem, 1e-10, 1000) {
                Ok(r) if r.value >= d_grid => Some((full_point(&r.argmax, combo), r.value)),
                _ => Some((x_grid, d_grid)),
            }
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in per_combo.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    best.map(|(x, d)| (d, DesignPoint::new(x))).ok_or(Error::AllStartsInvalid)
}
