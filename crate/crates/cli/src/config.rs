//! TOML study configuration.
//!
//! ```toml
//! [prior]
//! family = "gamma"        # or "normal" with mean, var
//! alpha = 4.0
//! beta = 2.0
//!
//! [central]
//! family = "exponential"  # pareto (t), lognormal (sigma), loglogistic (sigma)
//! mult = 0.5              # family parameter = mult * theta + shift
//!
//! [contaminant]
//! family = "pareto"
//! t = 3.0
//!
//! [grids]
//! p = 0.0
//! q = [0.0, 0.01, 0.05, 0.10, 0.20]
//! epsilon = [0.0, 0.01, 0.03, 0.06, 0.10]
//! methods = ["T", "W"]
//!
//! [sample]
//! n = 200                 # risk parameters per repetition
//! losses = 100            # losses per risk parameter
//! reps = 10
//! benchmark = "nonrobust" # or "same-spec"
//! spacing = "single"      # or "sqrt-n"
//!
//! [seeds]
//! seed = 42
//! ```

use serde::Deserialize;

use robcred::simulation::{Component, FamilySpec, ThetaMap};
use robcred::{Benchmark, PriorModel, RobustMethod, SpacingWindow, StudyConfig};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    prior: PriorSection,
    central: ComponentSection,
    contaminant: ComponentSection,
    grids: GridSection,
    sample: SampleSection,
    #[serde(default)]
    seeds: SeedSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSection {
    family: String,
    alpha: Option<f64>,
    beta: Option<f64>,
    mean: Option<f64>,
    var: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentSection {
    family: String,
    t: Option<f64>,
    sigma: Option<f64>,
    #[serde(default = "one")]
    mult: f64,
    #[serde(default)]
    shift: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(default)]
    p: f64,
    q: Vec<f64>,
    epsilon: Vec<f64>,
    #[serde(default = "both")]
    methods: Vec<String>,
}

fn both() -> Vec<String> {
    vec!["T".into(), "W".into()]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSection {
    n: usize,
    losses: usize,
    reps: usize,
    #[serde(default)]
    benchmark: Option<String>,
    #[serde(default)]
    spacing: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedSection {
    seed: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection { seed: 42 }
    }
}

fn need(v: Option<f64>, what: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Data(format!("config: missing `{what}`")))
}

fn component(c: &ComponentSection, section: &str) -> Result<Component, CliError> {
    let family = match c.family.to_ascii_lowercase().as_str() {
        "exp" | "exponential" => FamilySpec::Exponential,
        "pareto" => FamilySpec::Pareto {
            t: need(c.t, &format!("{section}.t"))?,
        },
        "ln" | "lognormal" => FamilySpec::Lognormal {
            sigma: need(c.sigma, &format!("{section}.sigma"))?,
        },
        "ll" | "loglogistic" => FamilySpec::LogLogistic {
            sigma: need(c.sigma, &format!("{section}.sigma"))?,
        },
        other => return Err(CliError::Data(format!("config: unknown family `{other}` in [{section}]"))),
    };
    Ok(Component {
        family,
        map: ThetaMap {
            mult: c.mult,
            shift: c.shift,
        },
    })
}

/// Parses and validates a study config. TOML syntax errors carry the line.
pub fn parse_study(text: &str) -> Result<StudyConfig, CliError> {
    let f: StudyFile = toml::from_str(text).map_err(|e| CliError::Data(format!("config: {e}")))?;
    let prior = match f.prior.family.to_ascii_lowercase().as_str() {
        "gamma" => PriorModel::gamma(need(f.prior.alpha, "prior.alpha")?, need(f.prior.beta, "prior.beta")?),
        "normal" => PriorModel::normal(need(f.prior.mean, "prior.mean")?, need(f.prior.var, "prior.var")?),
        other => return Err(CliError::Data(format!("config: unknown prior `{other}`"))),
    }?;
    let methods = f
        .grids
        .methods
        .iter()
        .map(|m| m.parse::<RobustMethod>())
        .collect::<Result<Vec<_>, _>>()?;
    let benchmark = match f.sample.benchmark.as_deref().unwrap_or("nonrobust") {
        "nonrobust" => Benchmark::NonRobust,
        "same-spec" => Benchmark::SameSpec,
        other => return Err(CliError::Data(format!("config: unknown benchmark `{other}`"))),
    };
    let spacing = match f.sample.spacing.as_deref().unwrap_or("single") {
        "single" => SpacingWindow::Single,
        "sqrt-n" => SpacingWindow::SqrtN,
        other => return Err(CliError::Data(format!("config: unknown spacing `{other}`"))),
    };
    let cfg = StudyConfig {
        prior,
        central: component(&f.central, "central")?,
        contaminant: component(&f.contaminant, "contaminant")?,
        n: f.sample.n,
        big_n: f.sample.losses,
        p: f.grids.p,
        q_grid: f.grids.q,
        epsilon_grid: f.grids.epsilon,
        methods,
        reps: f.sample.reps,
        seed: f.seeds.seed,
        benchmark,
        spacing,
    };
    cfg.validate()?;
    Ok(cfg)
}
