//! The TOML problem file: a model, an ordered list of factors and solver
//! settings.
//!
//! ```toml
//! [model]
//! family = "glm"
//! link = "logit"
//! predictors = ["1", "x1", "x2", "x1*x2"]
//! parameters = [0.5, 1.0, -1.0, 0.25]
//!
//! [[factors]]
//! name = "x1"
//! lower = -1.0
//! upper = 1.0
//!
//! [[factors]]
//! name = "x2"
//! levels = [-1.0, 1.0]
//!
//! [solver]
//! delta = 0.01
//! eps = 1e-10
//! ```

use std::path::{Path, PathBuf};

use forlion::solver::InitStrategy;
use forlion::{
    Design, DistanceMetric, FactorSpace, GlmSpec, Link, LogitFamily, MlmSpec, ModelSpec, Predictors,
    SolverConfig,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    model: RawModel,
    factors: Vec<RawFactor>,
    #[serde(default)]
    solver: RawSolver,
    reference_design: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: String,
    // glm
    link: Option<String>,
    df: Option<f64>,
    kappa: Option<f64>,
    sigma2: Option<f64>,
    lambda: Option<f64>,
    predictors: Option<Vec<String>>,
    // mlm
    logit_family: Option<String>,
    category_predictors: Option<Vec<Vec<String>>>,
    shared_predictors: Option<Vec<String>>,
    parameters: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactor {
    name: String,
    lower: Option<f64>,
    upper: Option<f64>,
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    delta: Option<f64>,
    eps: Option<f64>,
    metric: Option<String>,
    starts_per_combo: Option<usize>,
    max_outer_iter: Option<usize>,
    seed: Option<u64>,
    glm_fast_path: Option<bool>,
    init: Option<String>,
    init_design: Option<PathBuf>,
    init_max_tries: Option<usize>,
    optimizer_tol: Option<f64>,
    optimizer_max_iter: Option<usize>,
    combo_cap: Option<usize>,
    max_sweeps: Option<usize>,
    cleanup: Option<bool>,
    relax_discrete: Option<bool>,
    relocate: Option<bool>,
}

/// A parsed, validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ModelSpec,
    pub space: FactorSpace,
    pub config: SolverConfig,
    pub factor_names: Vec<String>,
    pub reference_design: Option<PathBuf>,
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses problem text; relative paths inside it resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawProblem =
            toml::from_str(text).map_err(|e| CliError::Input(format!("problem file: {e}")))?;

        let (space, names) = factor_space(&raw.factors)?;
        let model = build_model(&raw.model, &names)?;
        let config = build_config(&raw.solver, base)?;
        Ok(Self {
            model,
            space,
            config,
            factor_names: names,
            reference_design: raw.reference_design.map(|p| base.join(p)),
        })
    }

    pub fn p(&self) -> usize {
        self.model.num_params()
    }
}

fn factor_space(factors: &[RawFactor]) -> Result<(FactorSpace, Vec<String>), CliError> {
    let err = |m: String| CliError::Input(format!("[[factors]] {m}"));
    if factors.is_empty() {
        return Err(err("at least one factor is required".into()));
    }
    let mut continuous = Vec::new();
    let mut discrete = Vec::new();
    let mut names = Vec::new();
    for f in factors {
        if names.contains(&f.name) {
            return Err(err(format!("duplicate factor name `{}`", f.name)));
        }
        match (f.lower, f.upper, &f.levels) {
            (Some(lo), Some(hi), None) => {
                if !discrete.is_empty() {
                    return Err(err(format!(
                        "continuous factor `{}` must be declared before every discrete factor",
                        f.name
                    )));
                }
                continuous.push((lo, hi));
            }
            (None, None, Some(levels)) => discrete.push(levels.clone()),
            _ => {
                return Err(err(format!(
                    "factor `{}` needs either lower and upper, or levels",
                    f.name
                )))
            }
        }
        names.push(f.name.clone());
    }
    let space = FactorSpace::new(continuous, discrete).map_err(|e| err(e.to_string()))?;
    Ok((space, names))
}

fn parse_link(m: &RawModel) -> Result<Link, CliError> {
    let err = |s: String| CliError::Input(format!("[model] {s}"));
    let name = m.link.as_deref().ok_or_else(|| err("a glm needs `link`".into()))?;
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| err(format!("link `{name}` needs `{key}`")));
    let link = match name {
        "logit" => Link::Logit,
        "probit" => Link::Probit,
        "cloglog" => Link::Cloglog,
        "loglog" => Link::Loglog,
        "loglog-alt" => Link::LoglogAlt,
        "cauchit" => Link::Cauchit,
        "t" => Link::T { df: need(m.df, "df")? },
        "poisson-log" => Link::PoissonLog,
        "gamma-reciprocal" => Link::GammaReciprocal {
            kappa: need(m.kappa, "kappa")?,
        },
        "normal-identity" => Link::NormalIdentity {
            sigma2: need(m.sigma2, "sigma2")?,
        },
        "inverse-gaussian" => Link::InverseGaussian {
            lambda: need(m.lambda, "lambda")?,
        },
        other => return Err(err(format!("unknown link `{other}`"))),
    };
    link.validate().map_err(|e| err(e.to_string()))?;
    Ok(link)
}

fn parse_predictors(srcs: &[String], names: &[String]) -> Result<Predictors, CliError> {
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    Predictors::parse(srcs, &names).map_err(|e| CliError::Input(format!("[model] {e}")))
}

fn build_model(m: &RawModel, names: &[String]) -> Result<ModelSpec, CliError> {
    let err = |s: String| CliError::Input(format!("[model] {s}"));
    match m.family.as_str() {
        "glm" => {
            let preds = m
                .predictors
                .as_ref()
                .ok_or_else(|| err("a glm needs `predictors`".into()))?;
            let preds = parse_predictors(preds, names)?;
            let link = parse_link(m)?;
            let g = GlmSpec::new(preds, m.parameters.clone(), link).map_err(|e| err(e.to_string()))?;
            Ok(g.into())
        }
        "mlm" => {
            let fam: LogitFamily = m
                .logit_family
                .as_deref()
                .ok_or_else(|| err("an mlm needs `logit_family`".into()))?
                .parse()
                .map_err(|e: forlion::Error| err(e.to_string()))?;
            let cats = m
                .category_predictors
                .as_ref()
                .ok_or_else(|| err("an mlm needs `category_predictors`".into()))?
                .iter()
                .map(|c| parse_predictors(c, names))
                .collect::<Result<Vec<_>, _>>()?;
            let shared = parse_predictors(m.shared_predictors.as_deref().unwrap_or(&[]), names)?;
            let spec = MlmSpec::new(fam, cats, shared, m.parameters.clone()).map_err(|e| err(e.to_string()))?;
            Ok(spec.into())
        }
        other => Err(err(format!("unknown family `{other}` (expected glm or mlm)"))),
    }
}

fn build_config(s: &RawSolver, base: &Path) -> Result<SolverConfig, CliError> {
    let err = |m: String| CliError::Input(format!("[solver] {m}"));
    let d = SolverConfig::default();
    let metric = match &s.metric {
        Some(m) => m.parse::<DistanceMetric>().map_err(|e| err(e.to_string()))?,
        None => d.metric,
    };
    let init = match (s.init.as_deref(), &s.init_design) {
        (None, None) => None,
        (Some("vertices"), None) => Some(InitStrategy::Vertices),
        (Some("full-space"), None) => Some(InitStrategy::FullSpace),
        (Some("minimally-supported"), None) => Some(InitStrategy::MinimallySupported),
        (Some("user") | None, Some(path)) => {
            let path = base.join(path);
            let file = std::fs::File::open(&path)
                .map_err(|e| err(format!("cannot read init_design {}: {e}", path.display())))?;
            Some(InitStrategy::User(Design::read_csv(file).map_err(|e| err(e.to_string()))?))
        }
        (Some(other), _) => return Err(err(format!("unknown init `{other}`"))),
    };
    let config = SolverConfig {
        delta: s.delta.unwrap_or(d.delta),
        eps: s.eps.unwrap_or(d.eps),
        metric,
        starts_per_combo: s.starts_per_combo.unwrap_or(d.starts_per_combo),
        max_outer_iter: s.max_outer_iter.unwrap_or(d.max_outer_iter),
        seed: s.seed.unwrap_or(d.seed),
        glm_fast_path: s.glm_fast_path.unwrap_or(d.glm_fast_path),
        init,
        init_max_tries: s.init_max_tries.unwrap_or(d.init_max_tries),
        optimizer_tol: s.optimizer_tol.unwrap_or(d.optimizer_tol),
        optimizer_max_iter: s.optimizer_max_iter.unwrap_or(d.optimizer_max_iter),
        combo_cap: s.combo_cap.unwrap_or(d.combo_cap),
        max_sweeps: s.max_sweeps.unwrap_or(d.max_sweeps),
        cleanup: s.cleanup.unwrap_or(d.cleanup),
        relax_discrete: s.relax_discrete.unwrap_or(d.relax_discrete),
        relocate: s.relocate.unwrap_or(d.relocate),
    };
    config.validate().map_err(|e| err(e.to_string()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GLM: &str = r#"
[model]
family = "glm"
link = "logit"
predictors = ["1", "v", "a"]
parameters = [0.0, 1.0, 0.5]

[[factors]]
name = "v"
lower = 0.0
upper = 1.0

[[factors]]
name = "a"
levels = [1.0, -1.0]

[solver]
delta = 0.01
seed = 4
"#;

    #[test]
    fn parses_a_glm_problem() {
        let p = Problem::parse(GLM, Path::new(".")).unwrap();
        assert_eq!(p.p(), 3);
        assert_eq!(p.space.k(), 1);
        assert_eq!(p.space.discrete_levels()[0], vec![-1.0, 1.0]);
        assert_eq!(p.config.delta, 0.01);
        assert_eq!(p.config.seed, 4);
        assert_eq!(p.config.eps, 1e-12);
    }

    #[test]
    fn parameter_count_error_names_the_section() {
        let bad = GLM.replace("[0.0, 1.0, 0.5]", "[0.0, 1.0]");
        let e = Problem::parse(&bad, Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("[model]"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_a_line_number() {
        let bad = GLM.replace("delta = 0.01", "delta = ");
        let e = Problem::parse(&bad, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn continuous_after_discrete_is_rejected() {
        let bad = r#"
[model]
family = "glm"
link = "logit"
predictors = ["1", "v"]
parameters = [0.0, 1.0]

[[factors]]
name = "a"
levels = [1.0, -1.0]

[[factors]]
name = "v"
lower = 0.0
upper = 1.0
"#;
        let e = Problem::parse(bad, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("[[factors]]"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = GLM.replace("seed = 4", "sead = 4");
        assert!(Problem::parse(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn mlm_problem() {
        let text = r#"
[model]
family = "mlm"
logit_family = "continuation-ratio"
category_predictors = [["1", "x", "x^2"], ["1", "x"]]
parameters = [-1.935, -0.02642, 0.0003174, -9.159, 0.06386]

[[factors]]
name = "x"
lower = 80.0
upper = 200.0
"#;
        let p = Problem::parse(text, Path::new(".")).unwrap();
        assert_eq!(p.p(), 5);
        assert!(!p.model.is_glm());
    }
}
