#![allow(dead_code)]

use std::path::PathBuf;

use forlion::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_design(name: &str) -> Design {
    Design::read_csv(std::fs::File::open(fixture(name)).unwrap()).unwrap()
}

pub const FLIES_THETA: [f64; 5] = [-1.935, -0.02642, 0.0003174, -9.159, 0.06386];

pub fn flies() -> ModelSpec {
    let names = ["x"];
    MlmSpec::new(
        LogitFamily::ContinuationRatio,
        vec![
            Predictors::parse(&["1", "x", "x^2"], &names).unwrap(),
            Predictors::parse(&["1", "x"], &names).unwrap(),
        ],
        Predictors::parse::<&str>(&[], &names).unwrap(),
        FLIES_THETA.to_vec(),
    )
    .unwrap()
    .into()
}

pub fn flies_space(lower: f64) -> FactorSpace {
    FactorSpace::continuous(vec![(lower, 200.0)]).unwrap()
}

pub fn flies_config() -> SolverConfig {
    SolverConfig {
        delta: 0.1,
        eps: 1e-10,
        ..Default::default()
    }
}

pub fn stufken() -> ModelSpec {
    let names = ["x1", "x2", "x3"];
    GlmSpec::new(
        Predictors::parse(&["1", "x1", "x2", "x3"], &names).unwrap(),
        vec![1.0, -0.5, 0.5, 1.0],
        Link::Logit,
    )
    .unwrap()
    .into()
}

pub fn stufken_space(x3: f64) -> FactorSpace {
    FactorSpace::continuous(vec![(-2.0, 2.0), (-1.0, 1.0), (-x3, x3)]).unwrap()
}

pub fn esd() -> (ModelSpec, FactorSpace) {
    let names = ["V", "A", "B", "ESD", "P"];
    let m = GlmSpec::new(
        Predictors::parse(&["1", "A", "B", "ESD", "P", "V", "ESD*P"], &names).unwrap(),
        vec![-7.5, 1.5, -0.2, -0.15, 0.25, 0.35, 0.4],
        Link::Logit,
    )
    .unwrap()
    .into();
    let lv = vec![-1.0, 1.0];
    let s = FactorSpace::new(vec![(25.0, 45.0)], vec![lv.clone(), lv.clone(), lv.clone(), lv]).unwrap();
    (m, s)
}

/// Surface-defects model: cumulative proportional odds, five ordered
/// classes, five continuous factors followed by a binary cleaning method.
pub fn surface_defects() -> (ModelSpec, FactorSpace) {
    let names = ["temp", "pressure", "nitrogen", "silane", "time", "cm"];
    let one = || Predictors::parse(&["1"], &names).unwrap();
    let m = MlmSpec::new(
        LogitFamily::Cumulative,
        vec![one(), one(), one(), one()],
        Predictors::parse(&["-cm", "-temp", "-pressure", "-nitrogen", "-silane", "-time"], &names).unwrap(),
        vec![-1.113, 0.183, 1.518, 2.639, -0.970, 0.077, 0.008, -0.007, 0.007, 0.056],
    )
    .unwrap()
    .into();
    let s = FactorSpace::new(
        vec![(-25.0, 25.0), (-200.0, 200.0), (-150.0, 0.0), (-100.0, 0.0), (0.0, 16.0)],
        vec![vec![-1.0, 1.0]],
    )
    .unwrap();
    (m, s)
}

pub fn inverse_information(design: &Design, model: &ModelSpec) -> nalgebra::DMatrix<f64> {
    forlion::design::information_matrix(design, model).unwrap().inverse().unwrap()
}

/// Central difference of the sensitivity in coordinate `i`.
pub fn fd_gradient(model: &ModelSpec, x: &[f64], a: &nalgebra::DMatrix<f64>, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (model.sensitivity(&xp, a).unwrap() - model.sensitivity(&xm, a).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// Max-norm error relative to the max-norm of the reference.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter().zip(want).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale
}
