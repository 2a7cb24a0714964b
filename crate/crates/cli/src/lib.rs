//! Batch front end: solve a problem file, verify or compare designs, and dump
//! sensitivity traces.

pub mod problem;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use forlion::design::{format_sig, information_matrix, relative_efficiency};
use forlion::linalg::inverse_spd;
use forlion::{solve, verify_optimality, Design, SolveReport};
use serde::Serialize;

pub use problem::Problem;

/// Slack on `p` when a design is declared optimal.
pub const VERIFY_TOL: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or inconsistent input.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(#[from] forlion::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Outcome classes and their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok = 0,
    InputError = 1,
    NotConverged = 2,
    Suboptimal = 3,
}

impl CliError {
    pub fn outcome(&self) -> Outcome {
        match self {
            CliError::Input(_) | CliError::Io(_) => Outcome::InputError,
            CliError::Solver(e) => match e {
                forlion::Error::InitFailure { .. }
                | forlion::Error::AllStartsInvalid
                | forlion::Error::SingularStart => Outcome::NotConverged,
                _ => Outcome::InputError,
            },
        }
    }
}

fn read_design(path: &Path, problem: &Problem) -> Result<Design, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let design = Design::read_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    design
        .check_in(&problem.space)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for (i, x) in design.points().iter().enumerate() {
        if !problem.model.feasible(x) {
            return Err(CliError::Input(format!(
                "{}: row {} ({:?}) is infeasible for the model",
                path.display(),
                i + 1,
                x.coords()
            )));
        }
    }
    Ok(design)
}

/// Report path written next to the design CSV.
pub fn report_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

#[derive(Serialize)]
struct JsonReport<'a> {
    converged: bool,
    iterations: usize,
    log_det: f64,
    max_sensitivity: f64,
    argmax: &'a [f64],
    num_params: usize,
    support_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiency_vs_reference: Option<f64>,
    trace: &'a [forlion::solver::IterationRecord],
}

/// Solves the problem, writes the design CSV to `out` and a JSON report
/// beside it.
pub fn cmd_solve(problem_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<Outcome, CliError> {
    let mut problem = Problem::load(problem_path)?;
    if let Some(seed) = seed_override {
        problem.config.seed = seed;
    }
    let report: SolveReport = solve(&problem.model, &problem.space, &problem.config)?;
    report.design.write_csv(File::create(out)?)?;

    let efficiency = match &problem.reference_design {
        Some(path) => {
            let reference = read_design(path, &problem)?;
            Some(relative_efficiency(&report.design, &reference, &problem.model)?)
        }
        None => None,
    };
    let json = JsonReport {
        converged: report.converged,
        iterations: report.iterations,
        log_det: report.log_det,
        max_sensitivity: report.max_sensitivity,
        argmax: report.argmax.coords(),
        num_params: problem.p(),
        support_size: report.design.len(),
        efficiency_vs_reference: efficiency,
        trace: &report.trace,
    };
    let mut f = File::create(report_path(out))?;
    serde_json::to_writer_pretty(&mut f, &json).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(f)?;

    println!(
        "{} after {} iterations: {} points, log|F| = {}, max d = {} (p = {})",
        if report.converged { "converged" } else { "not converged" },
        report.iterations,
        report.design.len(),
        format_sig(report.log_det, 6),
        format_sig(report.max_sensitivity, 6),
        problem.p()
    );
    if let Some(e) = efficiency {
        println!("relative efficiency vs reference: {}", format_sig(e, 6));
    }
    Ok(if report.converged { Outcome::Ok } else { Outcome::NotConverged })
}

/// Default verification density: 1000 in one dimension, 100 otherwise.
pub fn default_grid(problem: &Problem) -> usize {
    if problem.space.k() <= 1 {
        1000
    } else {
        100
    }
}

pub struct Verification {
    pub max_sensitivity: f64,
    pub argmax: Vec<f64>,
    pub p: usize,
}

impl Verification {
    pub fn optimal(&self) -> bool {
        self.max_sensitivity <= self.p as f64 + VERIFY_TOL
    }
}

pub fn verify(problem_path: &Path, design_path: &Path, grid: Option<usize>) -> Result<Verification, CliError> {
    let problem = Problem::load(problem_path)?;
    let design = read_design(design_path, &problem)?;
    let grid = grid.unwrap_or_else(|| default_grid(&problem));
    let (d, x) = verify_optimality(&design, &problem.model, &problem.space, grid)?;
    Ok(Verification {
        max_sensitivity: d,
        argmax: x.0,
        p: problem.p(),
    })
}

pub fn cmd_verify(problem_path: &Path, design_path: &Path, grid: Option<usize>) -> Result<Outcome, CliError> {
    let v = verify(problem_path, design_path, grid)?;
    let at: Vec<String> = v.argmax.iter().map(|c| format_sig(*c, 6)).collect();
    println!(
        "max sensitivity {} at ({}); p = {}",
        format_sig(v.max_sensitivity, 6),
        at.join(", "),
        v.p
    );
    Ok(if v.optimal() { Outcome::Ok } else { Outcome::Suboptimal })
}

pub fn compare(problem_path: &Path, a: &Path, b: &Path) -> Result<f64, CliError> {
    let problem = Problem::load(problem_path)?;
    let da = read_design(a, &problem)?;
    let db = read_design(b, &problem)?;
    Ok(relative_efficiency(&da, &db, &problem.model)?)
}

pub fn cmd_compare(problem_path: &Path, a: &Path, b: &Path) -> Result<Outcome, CliError> {
    let e = compare(problem_path, a, b)?;
    println!("{e:.6}");
    Ok(Outcome::Ok)
}

/// Writes `combo,x1..xk,d` rows over a `grid`-point-per-dimension scan of
/// every discrete combination; infeasible cells get `d = inf`.
pub fn cmd_trace(problem_path: &Path, design_path: &Path, out: &Path, grid: usize) -> Result<Outcome, CliError> {
    let problem = Problem::load(problem_path)?;
    let k = problem.space.k();
    if k == 0 {
        return Err(CliError::Input("trace needs at least one continuous factor".into()));
    }
    if grid == 0 {
        return Err(CliError::Input("--grid must be at least 1".into()));
    }
    let design = read_design(design_path, &problem)?;
    let f = information_matrix(&design, &problem.model)?;
    let a = inverse_spd(f.matrix()).ok_or(forlion::Error::SingularDesign)?;
    let bounds = problem.space.continuous_bounds();
    let coord = |i: usize, s: usize| {
        let (lo, hi) = bounds[i];
        if grid == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * s as f64 / (grid - 1) as f64
        }
    };
    let cells = grid
        .checked_pow(k as u32)
        .ok_or_else(|| CliError::Input(format!("a {grid}^{k} grid is too large")))?;

    let mut w = csv::Writer::from_path(out).map_err(|e| CliError::Input(e.to_string()))?;
    let mut header = vec!["combo".to_string()];
    header.extend(problem.factor_names[..k].iter().cloned());
    header.push("d".into());
    w.write_record(&header).map_err(|e| CliError::Input(e.to_string()))?;
    for (ci, combo) in problem.space.combinations().iter().enumerate() {
        for cell in 0..cells {
            let mut rem = cell;
            let mut x = vec![0.0; k];
            for i in (0..k).rev() {
                x[i] = coord(i, rem % grid);
                rem /= grid;
            }
            let mut full = x.clone();
            full.extend_from_slice(combo);
            let d = match problem.model.sensitivity(&full, &a) {
                Ok(d) => format_sig(d, 15),
                Err(_) => "inf".to_string(),
            };
            let mut row = vec![ci.to_string()];
            row.extend(x.iter().map(|v| format_sig(*v, 15)));
            row.push(d);
            w.write_record(&row).map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(Outcome::Ok)
}
