//! Box-constrained maximization of smooth functions: a projected
//! limited-memory quasi-Newton ascent run from several starts.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const MEMORY: usize = 5;
const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// A maximization problem over `lower <= x <= upper`.
pub struct BoxProblem<'a> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Returns `(value, gradient)`; `-inf` marks points outside the domain.
    pub objective: &'a (dyn Fn(&[f64]) -> (f64, Vec<f64>) + Sync),
    pub starts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    /// Index of the start that produced the optimum.
    pub start: usize,
    pub iterations: usize,
}

impl BoxProblem<'_> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch("box bounds differ in length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidSpace("box needs lower < upper in every coordinate".into()));
        }
        for s in &self.starts {
            if s.len() != self.dim() || !inside(s, &self.lower, &self.upper) {
                return Err(Error::InvalidSpace("every start must lie inside the box".into()));
            }
        }
        if self.starts.is_empty() {
            return Err(Error::AllStartsInvalid);
        }
        Ok(())
    }
}

fn inside(x: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h)
}

/// The box center followed by `n_random` uniform draws.
pub fn default_starts(lower: &[f64], upper: &[f64], n_random: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut starts = vec![lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()];
    for _ in 0..n_random {
        starts.push(lower.iter().zip(upper).map(|(&l, &u)| rng.gen_range(l..=u)).collect());
    }
    starts
}

/// Runs the ascent from every start (in parallel) and returns the best
/// terminal point; ties go to the lowest start index.
pub fn maximize(problem: &BoxProblem<'_>, tol: f64, max_iter: usize) -> Result<BoxResult> {
    problem.validate()?;
    let runs: Vec<Option<BoxResult>> = problem
        .starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            ascend(problem, s, tol, max_iter).map(|(x, v, it)| BoxResult {
                argmax: x,
                value: v,
                start: i,
                iterations: it,
            })
        })
        .collect();
    let mut best: Option<BoxResult> = None;
    for r in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.ok_or(Error::AllStartsInvalid)
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
        *v = v.clamp(*l, *h);
    }
}

/// Components of `g` that can move `x` within the box (ascent sense).
fn free_mask(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((v, gi), (l, h))| !((*v <= *l && *gi < 0.0) || (*v >= *h && *gi > 0.0)))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ascend(p: &BoxProblem<'_>, start: &[f64], tol: f64, max_iter: usize) -> Option<(Vec<f64>, f64, usize)> {
    let (lo, hi) = (&p.lower, &p.upper);
    let mut x = start.to_vec();
    let (mut f, mut g) = (p.objective)(&x);
    if !f.is_finite() {
        return None;
    }
    let n = x.len();
    if n == 0 {
        return Some((x, f, 0));
    }
    let min_width = lo.iter().zip(hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    // pairs (s, y) with y measured for the minimization of -f
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(MEMORY);
    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        let free = free_mask(&x, &g, lo, hi);
        let pg: Vec<f64> = g.iter().zip(&free).map(|(gi, &fr)| if fr { *gi } else { 0.0 }).collect();
        let pg_norm = pg.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if pg_norm < tol {
            break;
        }

        let mut dir = two_loop(&pg, &mem);
        for (d, &fr) in dir.iter_mut().zip(&free) {
            if !fr {
                *d = 0.0;
            }
        }
        let mut quasi = !mem.is_empty() && dot(&dir, &pg) > 0.0;
        if !quasi {
            mem.clear();
            dir = pg.clone();
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let mut t = if quasi { 1.0 } else { 0.1 * min_width / pg_norm };
            for _ in 0..MAX_BACKTRACKS {
                let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                project(&mut xn, lo, hi);
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                let (fnew, gnew) = (p.objective)(&xn);
                if fnew.is_finite() && fnew >= f + ARMIJO * dot(&g, &step) {
                    accepted = Some((xn, fnew, gnew, step));
                    break;
                }
                t *= BACKTRACK;
            }
            if accepted.is_some() || attempt == 1 || !quasi {
                break;
            }
            // quasi-Newton direction failed; retry along the projected gradient
            mem.clear();
            dir = pg.clone();
            quasi = false;
        }
        let Some((xn, fnew, gnew, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s.clone(), y));
        }
        let small_step = s
            .iter()
            .zip(&xn)
            .all(|(si, xi)| si.abs() <= 1e-15 * (1.0 + xi.abs()));
        x = xn;
        f = fnew;
        g = gnew;
        if small_step {
            break;
        }
    }
    Some((x, f, iter))
}

/// `H g` with the L-BFGS inverse-Hessian approximation of `-f`.
fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y) in mem.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}
