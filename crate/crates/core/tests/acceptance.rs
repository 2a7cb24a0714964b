//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails unless every criterion passes, except those listed in `UNATTAINABLE`.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use forlion::design::relative_efficiency;
use forlion::liftone::{alpha_new_point_log, lift_one, point_information, Profile};
use forlion::linalg::log_det;
use forlion::mlm::probabilities_from_eta;
use forlion::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as stated, with the reason printed next to
/// the FAIL line.
const UNATTAINABLE: &[(usize, &str)] = &[(
    4,
    "the published x3 coordinates include -3.5433 and -3.5436, outside the stated x3 range [-3, 3]",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read_design(name: &str) -> Design {
    Design::read_csv(std::fs::File::open(fixture(name)).unwrap()).unwrap()
}

fn flies() -> ModelSpec {
    let names = ["x"];
    MlmSpec::new(
        LogitFamily::ContinuationRatio,
        vec![
            Predictors::parse(&["1", "x", "x^2"], &names).unwrap(),
            Predictors::parse(&["1", "x"], &names).unwrap(),
        ],
        Predictors::parse::<&str>(&[], &names).unwrap(),
        vec![-1.935, -0.02642, 0.0003174, -9.159, 0.06386],
    )
    .unwrap()
    .into()
}

const STUFKEN_BETA: [f64; 4] = [1.0, -0.5, 0.5, 1.0];

fn stufken() -> (ModelSpec, FactorSpace) {
    let names = ["x1", "x2", "x3"];
    let m = GlmSpec::new(
        Predictors::parse(&["1", "x1", "x2", "x3"], &names).unwrap(),
        STUFKEN_BETA.to_vec(),
        Link::Logit,
    )
    .unwrap()
    .into();
    let s = FactorSpace::continuous(vec![(-2.0, 2.0), (-1.0, 1.0), (-3.0, 3.0)]).unwrap();
    (m, s)
}

fn esd() -> (ModelSpec, FactorSpace) {
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

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Sorted (x, w) pairs of a one-factor design.
fn sorted_1d(d: &Design) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = d.points().iter().map(|p| p[0]).zip(d.weights().iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn matches_1d(d: &Design, xs: &[f64], ws: &[f64]) -> bool {
    let v = sorted_1d(d);
    v.len() == xs.len()
        && v.iter().zip(xs).zip(ws).all(|((got, x), w)| near(got.0, *x, 0.5) && near(got.1, *w, 0.005))
}

fn fmt_design(d: &Design) -> String {
    d.points()
        .iter()
        .zip(d.weights())
        .map(|(p, w)| {
            let c: Vec<String> = p.coords().iter().map(|v| format!("{v:.4}")).collect();
            format!("({}; {w:.4})", c.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A converged solve kept for the equivalence-theorem checks.
struct Solved {
    label: &'static str,
    model: ModelSpec,
    space: FactorSpace,
    report: SolveReport,
}

fn solve_flies(lower: f64) -> Solved {
    let model = flies();
    let space = FactorSpace::continuous(vec![(lower, 200.0)]).unwrap();
    let cfg = SolverConfig {
        delta: 0.1,
        eps: 1e-10,
        ..Default::default()
    };
    let report = solve(&model, &space, &cfg).unwrap();
    Solved {
        label: if lower == 80.0 { "house flies [80, 200]" } else { "house flies [0, 200]" },
        model,
        space,
        report,
    }
}

fn criterion_1(s: &Solved, secs: f64) -> Outcome {
    let d = &s.report.design;
    let shape = matches_1d(d, &[80.0, 122.78, 157.37], &[0.316, 0.342, 0.342]);
    let (maxd, _) = verify_optimality(d, &s.model, &s.space, 1000).unwrap();
    Outcome {
        pass: s.report.converged && shape && maxd <= 5.0 + 1e-4 && secs < 60.0,
        detail: format!("{} max d {maxd:.8} in {secs:.1}s", fmt_design(d)),
    }
}

fn criterion_2(s: &Solved) -> Outcome {
    let d = &s.report.design;
    Outcome {
        pass: s.report.converged && matches_1d(d, &[0.0, 103.56, 149.26], &[0.203, 0.398, 0.399]),
        detail: fmt_design(d),
    }
}

fn criterion_3() -> Outcome {
    let m = flies();
    let opt = read_design("flies_optimal.csv");
    let opt0 = read_design("flies_optimal_0_200.csv");
    let e_u = relative_efficiency(&read_design("flies_uniform.csv"), &opt, &m).unwrap();
    let e_20 = relative_efficiency(&read_design("flies_grid20.csv"), &opt, &m).unwrap();
    let e_a = relative_efficiency(&read_design("flies_approx.csv"), &opt0, &m).unwrap();
    Outcome {
        pass: near(e_u, 0.8279, 1e-3) && near(e_20, 0.9968, 1e-3) && near(e_a, 0.9981, 1e-3),
        detail: format!("uniform {e_u:.6}, grid-20 {e_20:.6}, approximate {e_a:.6}"),
    }
}

fn criterion_4(s: &Solved) -> Outcome {
    let d = &s.report.design;
    let published_x3 = [-2.5433, -0.4565, -3.5433, -1.4564, -0.5435, 1.5434, -1.5445, 0.5433];
    let mut got: Vec<&DesignPoint> = d.points().iter().collect();
    got.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    // published order within each (x1, x2) cell is not monotone in x3
    let mut want: Vec<f64> = published_x3.to_vec();
    for cell in want.chunks_mut(2) {
        cell.sort_by(f64::total_cmp);
    }
    let eight = d.len() == 8 && d.weights().iter().all(|w| near(*w, 0.125, 1e-3));
    let x3_ok = eight && got.iter().zip(&want).all(|(p, x)| near(p[2], *x, 0.01));
    let reference = read_design("stufken_analytic.csv");
    let eff = relative_efficiency(d, &reference, &s.model).unwrap();
    Outcome {
        pass: s.report.converged && eight && x3_ok && eff >= 0.99999,
        detail: format!(
            "{} points, efficiency vs analytic design {eff:.8}; design {}",
            d.len(),
            fmt_design(d)
        ),
    }
}

fn criterion_5(s: &Solved, secs: f64) -> Outcome {
    let d = &s.report.design;
    let eff = relative_efficiency(d, &read_design("esd_qpso.csv"), &s.model).unwrap();
    Outcome {
        pass: s.report.converged && eff >= 1.0005 && (13..=15).contains(&d.len()) && secs < 300.0,
        detail: format!("{} points, efficiency vs d-QPSO {eff:.6} in {secs:.1}s", d.len()),
    }
}

/// Exhaustive scan of `d(x, xi)` over a `n`-point grid per continuous
/// dimension and every discrete combination.
fn scan_max(s: &Solved, a: &DMatrix<f64>, n: usize) -> (f64, Vec<f64>) {
    let k = s.space.k();
    let bounds = s.space.continuous_bounds();
    let cells = n.pow(k as u32);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for combo in s.space.combinations() {
        for cell in 0..cells {
            let mut rem = cell;
            let mut x = Vec::with_capacity(s.space.dim());
            for &(lo, hi) in bounds {
                x.push(lo + (hi - lo) * (rem % n) as f64 / (n - 1) as f64);
                rem /= n;
            }
            x.extend_from_slice(&combo);
            if let Ok(d) = s.model.sensitivity(&x, a) {
                if d > best.0 {
                    best = (d, x);
                }
            }
        }
    }
    best
}

/// The same scan for a main-effects logistic model in three continuous
/// factors, written out by hand: along x3 the quadratic form `h' A h` is a
/// quadratic polynomial and the linear predictor is affine.
fn scan_max_logistic3(bounds: &[(f64, f64)], beta: &[f64; 4], a: &DMatrix<f64>, n: usize) -> (f64, Vec<f64>) {
    let grid = |i: usize, s: usize| bounds[i].0 + (bounds[i].1 - bounds[i].0) * s as f64 / (n - 1) as f64;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for s1 in 0..n {
        let x1 = grid(0, s1);
        for s2 in 0..n {
            let x2 = grid(1, s2);
            // h = u + x3 e3 with u = (1, x1, x2, 0)
            let u = [1.0, x1, x2, 0.0];
            let mut c0 = 0.0;
            let mut c1 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    c0 += u[i] * a[(i, j)] * u[j];
                }
                c1 += 2.0 * u[i] * a[(i, 3)];
            }
            let c2 = a[(3, 3)];
            let eta0 = beta[0] + beta[1] * x1 + beta[2] * x2;
            for s3 in 0..n {
                let x3 = grid(2, s3);
                let eta = eta0 + beta[3] * x3;
                let e = (-eta.abs()).exp();
                let nu = e / ((1.0 + e) * (1.0 + e));
                let d = nu * (c0 + x3 * (c1 + x3 * c2));
                if d > best.0 {
                    best = (d, vec![x1, x2, x3]);
                }
            }
        }
    }
    best
}

fn criterion_6(solves: &[&Solved]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in solves {
        if !s.report.converged {
            parts.push(format!("{}: not converged, skipped", s.label));
            continue;
        }
        let p = s.model.num_params() as f64;
        let d = &s.report.design;
        let a = forlion::design::information_matrix(d, &s.model).unwrap().inverse().unwrap();
        let (maxd, at) = if s.label.starts_with("stufken") {
            scan_max_logistic3(s.space.continuous_bounds(), &STUFKEN_BETA, &a, 1000)
        } else {
            scan_max(s, &a, 1000)
        };
        let support_gap = d
            .points()
            .iter()
            .zip(d.weights())
            .filter(|(_, w)| **w > 0.01)
            .map(|(x, _)| (s.model.sensitivity(x, &a).unwrap() - p).abs())
            .fold(0.0, f64::max);
        let ok = maxd <= p + 1e-3 && support_gap <= 1e-3;
        pass &= ok;
        parts.push(format!(
            "{}: max d - p = {:.2e} at {:?}, support |d - p| <= {:.2e}",
            s.label,
            maxd - p,
            at.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            support_gap
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

// ---- randomized model instances for criteria 7 and 8 ----

fn glm_links() -> Vec<Link> {
    vec![
        Link::Logit,
        Link::Probit,
        Link::Cloglog,
        Link::Loglog,
        Link::LoglogAlt,
        Link::Cauchit,
        Link::T { df: 3.0 },
        Link::PoissonLog,
        Link::GammaReciprocal { kappa: 2.0 },
        Link::NormalIdentity { sigma2: 1.5 },
        Link::InverseGaussian { lambda: 2.0 },
    ]
}

fn random_glm(rng: &mut impl Rng, link: Link) -> ModelSpec {
    let names = ["x1", "x2"];
    let preds = Predictors::parse(&["1", "x1", "x2", "x1*x2", "x2^2"], &names).unwrap();
    let positive_eta = matches!(link, Link::GammaReciprocal { .. } | Link::InverseGaussian { .. });
    let mut beta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if positive_eta {
        beta[0] = 4.0;
    }
    GlmSpec::new(preds, beta, link).unwrap().into()
}

fn random_mlm(rng: &mut impl Rng, family: LogitFamily) -> ModelSpec {
    let names = ["x1", "x2"];
    let j = rng.gen_range(3..=4);
    let pr = |s: &[&str]| Predictors::parse(s, &names).unwrap();
    if family == LogitFamily::Cumulative {
        // proportional odds with increasing intercepts
        let cats: Vec<Predictors> = (0..j - 1).map(|_| pr(&["1"])).collect();
        let mut theta = Vec::new();
        let mut cut = rng.gen_range(-1.5..-0.5);
        for _ in 0..j - 1 {
            theta.push(cut);
            cut += rng.gen_range(0.8..1.6);
        }
        theta.extend((0..3).map(|_| rng.gen_range(-0.4..0.4)));
        MlmSpec::new(family, cats, pr(&["x1", "x2", "x1*x2"]), theta).unwrap().into()
    } else {
        let cats: Vec<Predictors> = (0..j - 1).map(|_| pr(&["1", "x1", "x2^2"])).collect();
        let mut theta: Vec<f64> = (0..3 * (j - 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        theta.push(rng.gen_range(-1.0..1.0));
        MlmSpec::new(family, cats, pr(&["x1*x2"]), theta).unwrap().into()
    }
}

fn random_feasible_point(rng: &mut impl Rng, model: &ModelSpec) -> Vec<f64> {
    loop {
        let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if model.feasible(&x) {
            return x;
        }
    }
}

/// A random nonsingular design on `p + extra` feasible points.
fn random_design(rng: &mut impl Rng, model: &ModelSpec, extra: usize) -> Design {
    loop {
        let m = model.num_params() + extra;
        let pts: Vec<DesignPoint> = (0..m).map(|_| DesignPoint(random_feasible_point(rng, model))).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let d = Design::normalized(pts, w).unwrap();
        if forlion::design::design_log_det(&d, model).unwrap().is_finite() {
            return d;
        }
    }
}

fn families() -> [LogitFamily; 4] {
    [
        LogitFamily::BaselineCategory,
        LogitFamily::Cumulative,
        LogitFamily::AdjacentCategories,
        LogitFamily::ContinuationRatio,
    ]
}

fn gradient_failures(model: &ModelSpec, rng: &mut impl Rng) -> Option<String> {
    let design = random_design(rng, model, 3);
    let a = forlion::design::information_matrix(&design, model).unwrap().inverse().unwrap();
    let x = random_feasible_point(rng, model);
    let (_, g) = model.sensitivity_with_gradient(&x, &a, 2).unwrap();
    let mut fd = vec![0.0; 2];
    for i in 0..2 {
        let h = 1e-5;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (model.sensitivity(&xp, &a).unwrap() - model.sensitivity(&xm, &a).unwrap()) / (2.0 * h);
    }
    let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-8);
    let err = g.iter().zip(&fd).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    (err > 1e-5 * scale).then(|| format!("x {x:?}: analytic {g:?} vs difference {fd:?}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let links = glm_links();
    let mut fails = Vec::new();
    for i in 0..50 {
        let m = random_glm(&mut rng, links[i % links.len()]);
        if let Some(f) = gradient_failures(&m, &mut rng) {
            fails.push(format!("glm #{i}: {f}"));
        }
    }
    for i in 0..50 {
        let m = random_mlm(&mut rng, families()[i % 4]);
        if let Some(f) = gradient_failures(&m, &mut rng) {
            fails.push(format!("mlm #{i}: {f}"));
        }
    }
    Outcome {
        pass: fails.is_empty(),
        detail: format!("{} failures of 100{}", fails.len(), fails.first().map_or(String::new(), |f| format!("; first {f}"))),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let links = glm_links();
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let model = if i % 2 == 0 {
            random_glm(&mut rng, links[(i / 2) % links.len()])
        } else {
            random_mlm(&mut rng, families()[(i / 2) % 4])
        };
        let extra = rng.gen_range(0..4);
        let d = random_design(&mut rng, &model, extra);
        let a = forlion::design::information_matrix(&d, &model).unwrap().inverse().unwrap();
        let total: f64 = d
            .points()
            .iter()
            .zip(d.weights())
            .map(|(x, w)| w * model.sensitivity(x, &a).unwrap())
            .sum();
        worst = worst.max((total - model.num_params() as f64).abs());
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("worst |sum w d - p| = {worst:.2e} over 100 designs"),
    }
}

/// Coordinate ascent with a golden-section search per weight; the
/// reference the closed-form updates are checked against.
fn golden_lift_one(fs: &[DMatrix<f64>], w0: &[f64]) -> f64 {
    let m = fs.len();
    let mut w = w0.to_vec();
    let ld = |w: &[f64]| {
        let mut f = DMatrix::zeros(fs[0].nrows(), fs[0].ncols());
        for (fi, wi) in fs.iter().zip(w) {
            f += fi * *wi;
        }
        log_det(&f)
    };
    let mut current = ld(&w);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..2000 {
        let start = current;
        for i in 0..m {
            let rest = 1.0 - w[i];
            let along = |z: f64| -> Vec<f64> {
                (0..m)
                    .map(|j| if j == i { z } else if rest > 0.0 { w[j] * (1.0 - z) / rest } else { 0.0 })
                    .collect()
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut c = hi - phi * (hi - lo);
            let mut d = lo + phi * (hi - lo);
            let (mut fc, mut fd) = (ld(&along(c)), ld(&along(d)));
            while hi - lo > 1e-12 {
                if fc >= fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - phi * (hi - lo);
                    fc = ld(&along(c));
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + phi * (hi - lo);
                    fd = ld(&along(d));
                }
            }
            let z = 0.5 * (lo + hi);
            let cand = along(z);
            let v = ld(&cand);
            if v > current {
                w = cand;
                current = v;
            }
        }
        if current - start < 1e-14 {
            break;
        }
    }
    current
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let links = glm_links();
    let mut worst_fixed = 0.0_f64;
    for i in 0..20 {
        let model = random_glm(&mut rng, links[i % links.len()]);
        let extra = rng.gen_range(1..5);
        let d = random_design(&mut rng, &model, extra);
        let fs = point_information(d.points(), &model).unwrap();
        let closed = lift_one(&fs, d.weights(), 1e-12, 10_000, Profile::Glm).unwrap().log_det;
        let golden = golden_lift_one(&fs, d.weights());
        worst_fixed = worst_fixed.max((closed - golden).abs());
    }
    let mut worst_alpha = f64::NEG_INFINITY;
    for i in 0..20 {
        let model = random_glm(&mut rng, links[i % links.len()]);
        let d = random_design(&mut rng, &model, 1);
        let p = model.num_params();
        let f = forlion::design::information_matrix(&d, &model).unwrap().into_inner();
        let x = random_feasible_point(&mut rng, &model);
        let fx = model.fisher_at_point(&x).unwrap().into_inner();
        let path = |alpha: f64| log_det(&(&f * (1.0 - alpha) + &fx * alpha));
        let alpha = alpha_new_point_log(path(0.5), path(0.0), p);
        let at_alpha = path(alpha);
        let grid_best = (0..=1000).map(|g| path(g as f64 / 1000.0)).fold(f64::NEG_INFINITY, f64::max);
        worst_alpha = worst_alpha.max(grid_best - at_alpha);
    }
    Outcome {
        pass: worst_fixed <= 1e-6 && worst_alpha <= 1e-12,
        detail: format!(
            "worst |closed - golden| in log f {worst_fixed:.2e}; worst grid gain over alpha {worst_alpha:.2e}"
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let names = ["x"];
    let mut worst = 0.0_f64;
    for family in [
        LogitFamily::BaselineCategory,
        LogitFamily::AdjacentCategories,
        LogitFamily::ContinuationRatio,
    ] {
        for j in [3usize, 4] {
            for _ in 0..10 {
                let theta: Vec<f64> = (0..j - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let cats = (0..j - 1).map(|_| Predictors::parse(&["x"], &names).unwrap()).collect();
                let model: ModelSpec = MlmSpec::new(family, cats, Predictors::parse::<&str>(&[], &names).unwrap(), theta.clone())
                    .unwrap()
                    .into();
                for x in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
                    let f = model.fisher_at_point(&[x]).unwrap().into_inner();
                    let det = f.determinant();
                    let eta: Vec<f64> = theta.iter().map(|t| t * x).collect();
                    let pi = probabilities_from_eta(family, &eta).unwrap();
                    let want = f64::powi(x, 2 * (j as i32 - 1)) * pi.pi.iter().product::<f64>();
                    worst = worst.max(((det - want) / want).abs());
                }
            }
        }
    }
    let names2 = ["x1", "x2"];
    let mut coincide = true;
    for family in families() {
        let theta = vec![-0.5, 0.7, 0.3, -0.4];
        let cats = (0..2).map(|_| Predictors::parse(&["1"], &names2).unwrap()).collect();
        let model: ModelSpec = MlmSpec::new(family, cats, Predictors::parse(&["x1", "x2^2"], &names2).unwrap(), theta)
            .unwrap()
            .into();
        for _ in 0..20 {
            let x1: f64 = rng.gen_range(-2.0..2.0);
            let x2: f64 = rng.gen_range(-2.0..2.0);
            let a = model.fisher_at_point(&[x1, x2]).unwrap().into_inner();
            let b = model.fisher_at_point(&[x1, -x2]).unwrap().into_inner();
            coincide &= a == b;
        }
    }
    Outcome {
        pass: worst <= 1e-10 && coincide,
        detail: format!("worst relative determinant error {worst:.2e}; mirrored points coincide: {coincide}"),
    }
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    let t = Instant::now();
    let flies80 = solve_flies(80.0);
    let secs1 = t.elapsed().as_secs_f64();
    results.push((1, criterion_1(&flies80, secs1)));
    let flies0 = solve_flies(0.0);
    results.push((2, criterion_2(&flies0)));
    results.push((3, criterion_3()));

    let (m, s) = stufken();
    let cfg = SolverConfig {
        delta: 0.05,
        eps: 1e-10,
        ..Default::default()
    };
    let report = solve(&m, &s, &cfg).unwrap();
    let stufken = Solved {
        label: "stufken",
        model: m,
        space: s,
        report,
    };
    results.push((4, criterion_4(&stufken)));

    let (m, s) = esd();
    let cfg = SolverConfig {
        delta: 0.03,
        eps: 1e-8,
        ..Default::default()
    };
    let t = Instant::now();
    let report = solve(&m, &s, &cfg).unwrap();
    let secs5 = t.elapsed().as_secs_f64();
    let esd = Solved {
        label: "esd",
        model: m,
        space: s,
        report,
    };
    results.push((5, criterion_5(&esd, secs5)));
    results.push((6, criterion_6(&[&flies80, &flies0, &stufken, &esd])));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));

    // written straight to stderr so the lines survive libtest's capture
    let mut out = std::io::stderr().lock();
    let mut unexpected = Vec::new();
    for (n, o) in &results {
        let known = UNATTAINABLE.iter().find(|(k, _)| k == n);
        let status = if o.pass { "PASS" } else { "FAIL" };
        let line = match (o.pass, known) {
            (false, Some((_, why))) => format!("criterion {n:>2}: {status} (known: {why}) {}", o.detail),
            (false, None) => {
                unexpected.push(*n);
                format!("criterion {n:>2}: {status} {}", o.detail)
            }
            _ => format!("criterion {n:>2}: {status} {}", o.detail),
        };
        writeln!(out, "{line}").unwrap();
    }
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}
