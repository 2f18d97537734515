//! Contamination study: risk parameters from a prior, losses from a mixture
//! `(1-ε)F₀ + εF_c`, and empirical structural parameters under trimming and
//! winsorizing, reported as ratios to the central model's exact values.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::credibility::{
    nonrobust_m_constants, structural_from_constants, structural_params, ModelPair, PairKind,
    StructuralParams,
};
use crate::error::{invalid, Result};
use crate::models::{ConditionalModel, PriorModel};
use crate::nonparametric::{aggregate, GroupStats, NonparametricOptions, SpacingWindow};
use crate::nonparametric::{trimmed_variance_sorted, winsorized_variance_sorted};
use crate::quadrature::UnitPoint;
use crate::risk::{robust_mean_sorted, RobustMethod, WinsorSpec};
use crate::seed;

/// Affine map from the risk parameter to a family's parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMap {
    pub mult: f64,
    pub shift: f64,
}

impl ThetaMap {
    pub const IDENTITY: ThetaMap = ThetaMap {
        mult: 1.0,
        shift: 0.0,
    };

    pub fn scale(mult: f64) -> Self {
        ThetaMap { mult, shift: 0.0 }
    }

    pub fn apply(&self, theta: f64) -> f64 {
        self.mult * theta + self.shift
    }
}

/// A conditional family with its fixed shape; the risk parameter supplies
/// the scale (exponential, Pareto) or the location (lognormal, log-logistic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    Exponential,
    Pareto { t: f64 },
    Lognormal { sigma: f64 },
    LogLogistic { sigma: f64 },
}

impl FamilySpec {
    pub fn model(&self, param: f64) -> Result<ConditionalModel> {
        match *self {
            FamilySpec::Exponential => ConditionalModel::exponential(param),
            FamilySpec::Pareto { t } => ConditionalModel::pareto(t, param),
            FamilySpec::Lognormal { sigma } => ConditionalModel::lognormal(param, sigma),
            FamilySpec::LogLogistic { sigma } => ConditionalModel::loglogistic(param, sigma),
        }
    }

    fn pair_kind(&self) -> PairKind {
        match *self {
            FamilySpec::Exponential => PairKind::ExpGamma,
            FamilySpec::Pareto { t } => PairKind::ParetoGamma { t },
            FamilySpec::Lognormal { sigma } => PairKind::LognormalNormal { sigma },
            FamilySpec::LogLogistic { sigma } => PairKind::LogLogisticNormal { sigma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub family: FamilySpec,
    pub map: ThetaMap,
}

impl Component {
    pub fn model_at(&self, theta: f64) -> Result<ConditionalModel> {
        self.family.model(self.map.apply(theta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationConfig {
    pub epsilon: f64,
    pub central: Component,
    pub contaminant: Component,
}

impl ContaminationConfig {
    pub fn new(epsilon: f64, central: Component, contaminant: Component) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(ContaminationConfig {
            epsilon,
            central,
            contaminant,
        })
    }
}

/// Uniform pairs `(route, level)` for each loss. Sharing them across mixture
/// weights keeps every grid cell on the same underlying draws.
fn draw_uniforms<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<(f64, f64)> {
    (0..count)
        .map(|_| (rng.random::<f64>(), rng.sample(rand::distr::Open01)))
        .collect()
}

fn mix(
    central: &ConditionalModel,
    contaminant: &ConditionalModel,
    epsilon: f64,
    uniforms: &[(f64, f64)],
) -> Vec<f64> {
    uniforms
        .iter()
        .map(|&(route, w)| {
            let m = if route < epsilon { contaminant } else { central };
            m.quantile_at(UnitPoint::new(w))
        })
        .collect()
}

/// `count` losses from the mixture at risk parameter `theta`. Each draw is
/// routed to `F_c` with probability `ε`, then sampled by inverse transform.
pub fn contaminated_sample<R: Rng + ?Sized>(
    cfg: &ContaminationConfig,
    theta: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let central = cfg.central.model_at(theta)?;
    let contaminant = cfg.contaminant.model_at(theta)?;
    let u = draw_uniforms(rng, count);
    Ok(mix(&central, &contaminant, cfg.epsilon, &u))
}

/// Denominator of the reported ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Benchmark {
    /// The central model's classical (`p = q = 0`) structural parameters,
    /// for every cell. Ratios then show the full bias of robustification.
    #[default]
    NonRobust,
    /// The central model's structural parameters at the cell's own
    /// `(p, q, method)`.
    SameSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub prior: PriorModel,
    pub central: Component,
    pub contaminant: Component,
    /// Number of risk parameters per repetition.
    pub n: usize,
    /// Losses per risk parameter.
    pub big_n: usize,
    pub p: f64,
    pub q_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub methods: Vec<RobustMethod>,
    pub reps: usize,
    pub seed: u64,
    pub benchmark: Benchmark,
    pub spacing: SpacingWindow,
}

const Q_GRID: [f64; 5] = [0.0, 0.01, 0.05, 0.10, 0.20];
const EPS_GRID: [f64; 5] = [0.0, 0.01, 0.03, 0.06, 0.10];

impl StudyConfig {
    /// θ ~ Gamma(4, 2), F₀ = Exponential(θ/2), F_c = Pareto(scale θ, t = 3),
    /// at desk scale (n = 200, N = 100, 10 repetitions).
    pub fn exp_pareto_preset() -> Self {
        StudyConfig {
            prior: PriorModel::Gamma {
                alpha: 4.0,
                beta: 2.0,
            },
            central: Component {
                family: FamilySpec::Exponential,
                map: ThetaMap::scale(0.5),
            },
            contaminant: Component {
                family: FamilySpec::Pareto { t: 3.0 },
                map: ThetaMap::IDENTITY,
            },
            n: 200,
            big_n: 100,
            p: 0.0,
            q_grid: Q_GRID.to_vec(),
            epsilon_grid: EPS_GRID.to_vec(),
            methods: RobustMethod::ALL.to_vec(),
            reps: 10,
            seed: 42,
            benchmark: Benchmark::NonRobust,
            spacing: SpacingWindow::Single,
        }
    }

    /// θ ~ Normal(4, 1), F₀ = Lognormal(θ, 0.45), F_c = LogLogistic(θ, 0.45),
    /// at desk scale.
    pub fn lognormal_loglogistic_preset() -> Self {
        StudyConfig {
            prior: PriorModel::Normal { mean: 4.0, var: 1.0 },
            central: Component {
                family: FamilySpec::Lognormal { sigma: 0.45 },
                map: ThetaMap::IDENTITY,
            },
            contaminant: Component {
                family: FamilySpec::LogLogistic { sigma: 0.45 },
                map: ThetaMap::IDENTITY,
            },
            ..Self::exp_pareto_preset()
        }
    }

    /// Switches to the full size, 1000 risk parameters per repetition.
    pub fn paper_scale(mut self) -> Self {
        self.n = 1000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if self.big_n < 3 {
            return Err(invalid("N must be at least 3"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be positive"));
        }
        for &q in &self.q_grid {
            WinsorSpec::new(self.p, q)?;
        }
        for &e in &self.epsilon_grid {
            if !(0.0..=1.0).contains(&e) {
                return Err(invalid(format!("epsilon must lie in [0, 1], got {e}")));
            }
        }
        self.central_pair()?;
        Ok(())
    }

    /// The central family with the prior carried through the θ-map.
    pub fn central_pair(&self) -> Result<ModelPair> {
        let map = self.central.map;
        let kind = self.central.family.pair_kind();
        let prior = match self.prior {
            PriorModel::Gamma { alpha, beta } => {
                if map.shift != 0.0 || !(map.mult > 0.0) {
                    return Err(invalid(
                        "a gamma prior needs a central map of the form c·θ with c > 0",
                    ));
                }
                PriorModel::gamma(alpha, beta / map.mult)?
            }
            PriorModel::Normal { mean, var } => {
                if map.mult == 0.0 {
                    return Err(invalid("the central map must depend on θ"));
                }
                PriorModel::normal(map.apply(mean), map.mult * map.mult * var)?
            }
        };
        ModelPair::new(kind, prior)
    }

    fn truth(&self, spec: &WinsorSpec, method: RobustMethod) -> Result<StructuralParams> {
        let pair = self.central_pair()?;
        match self.benchmark {
            Benchmark::NonRobust => {
                structural_from_constants(&nonrobust_m_constants(pair.kind())?, &pair.prior())
            }
            Benchmark::SameSpec => structural_params(&pair, spec, method),
        }
    }
}

/// Mean and standard error over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStat {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl RatioStat {
    fn from(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return RatioStat {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let c = count as f64;
        let mean = values.iter().sum::<f64>() / c;
        let se = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c - 1.0) / c).sqrt()
        } else {
            0.0
        };
        RatioStat { mean, se, count }
    }
}

/// One `(ε, q, method)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCell {
    pub epsilon: f64,
    pub q: f64,
    pub method: RobustMethod,
    pub mu: RatioStat,
    pub v: RatioStat,
    pub a: RatioStat,
    pub k: RatioStat,
    /// Repetitions whose `â ≤ 0`, left out of the `k` ratio.
    pub k_excluded: usize,
    pub truth: StructuralParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub epsilon_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub methods: Vec<RobustMethod>,
    pub cells: Vec<RatioCell>,
}

impl RatioReport {
    pub fn cell(&self, epsilon: f64, q: f64, method: RobustMethod) -> Option<&RatioCell> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.q == q && c.method == method)
    }
}

// Per (ε, q, method) estimates for one repetition: (μ̂, v̂, â_raw, clamped).
type RepEstimates = Vec<(f64, f64, f64, bool)>;

fn cell_index(cfg: &StudyConfig, e: usize, q: usize, m: usize) -> usize {
    (e * cfg.q_grid.len() + q) * cfg.methods.len() + m
}

fn run_rep(cfg: &StudyConfig, rep: usize) -> Result<RepEstimates> {
    let mut prior_rng = seed::stream(cfg.seed, rep as u64, u64::MAX);
    let thetas = cfg.prior.sample(&mut prior_rng, cfg.n);
    let opts = NonparametricOptions {
        spacing: cfg.spacing,
    };
    let specs = cfg
        .q_grid
        .iter()
        .map(|&q| WinsorSpec::new(cfg.p, q))
        .collect::<Result<Vec<_>>>()?;
    let cells = cfg.epsilon_grid.len() * specs.len() * cfg.methods.len();

    // For each θ, summary statistics of every cell.
    let per_theta: Vec<Vec<GroupStats>> = thetas
        .par_iter()
        .enumerate()
        .map(|(j, &theta)| -> Result<Vec<GroupStats>> {
            let mut rng = seed::stream(cfg.seed, rep as u64, j as u64);
            let uniforms = draw_uniforms(&mut rng, cfg.big_n);
            let central = cfg.central.model_at(theta)?;
            let contaminant = cfg.contaminant.model_at(theta)?;
            let mut out = Vec::with_capacity(cells);
            for &eps in &cfg.epsilon_grid {
                let mut xs = mix(&central, &contaminant, eps, &uniforms);
                xs.sort_by(f64::total_cmp);
                for spec in &specs {
                    for &method in &cfg.methods {
                        let v_hat = match method {
                            RobustMethod::Trimmed => trimmed_variance_sorted(&xs, spec)?,
                            RobustMethod::Winsorized => winsorized_variance_sorted(&xs, spec, &opts)?,
                        };
                        let n_eff = match method {
                            RobustMethod::Trimmed => {
                                let (lo, hi) = spec.cut_counts(xs.len());
                                xs.len() - lo - hi
                            }
                            RobustMethod::Winsorized => xs.len(),
                        };
                        out.push(GroupStats {
                            id: String::new(),
                            n: xs.len(),
                            n_eff,
                            mu_hat: robust_mean_sorted(&xs, spec, method)?,
                            v_hat,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut result = Vec::with_capacity(cells);
    for (e, _) in cfg.epsilon_grid.iter().enumerate() {
        for (qi, spec) in specs.iter().enumerate() {
            for (mi, &method) in cfg.methods.iter().enumerate() {
                let idx = cell_index(cfg, e, qi, mi);
                let stats: Vec<GroupStats> = per_theta.iter().map(|s| s[idx].clone()).collect();
                let est = aggregate(&stats, spec, method)?;
                result.push((est.mu_hat, est.v_hat, est.a_hat_raw, est.a_clamped));
            }
        }
    }
    Ok(result)
}

/// Runs every repetition and reports averaged ratios to the benchmark.
///
/// Risk parameters are drawn once per repetition and shared across the
/// grid; losses for risk parameter `j` of repetition `r` come from stream
/// `(seed, r, j)` and are shared across `ε` and `q`. The report is identical
/// for any thread count.
pub fn run_study(cfg: &StudyConfig) -> Result<RatioReport> {
    cfg.validate()?;
    let reps: Vec<RepEstimates> = (0..cfg.reps)
        .map(|r| run_rep(cfg, r))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (e, &epsilon) in cfg.epsilon_grid.iter().enumerate() {
        for (qi, &q) in cfg.q_grid.iter().enumerate() {
            let spec = WinsorSpec::new(cfg.p, q)?;
            for (mi, &method) in cfg.methods.iter().enumerate() {
                let idx = cell_index(cfg, e, qi, mi);
                let truth = cfg.truth(&spec, method)?;
                let mut mu = Vec::new();
                let mut v = Vec::new();
                let mut a = Vec::new();
                let mut k = Vec::new();
                for rep in &reps {
                    let (m, vv, aa, clamped) = rep[idx];
                    mu.push(m / truth.mu);
                    v.push(vv / truth.v);
                    a.push(aa / truth.a);
                    if !clamped {
                        k.push(vv / aa / truth.k);
                    }
                }
                cells.push(RatioCell {
                    epsilon,
                    q,
                    method,
                    mu: RatioStat::from(&mu),
                    v: RatioStat::from(&v),
                    a: RatioStat::from(&a),
                    k: RatioStat::from(&k),
                    k_excluded: cfg.reps - k.len(),
                    truth,
                });
            }
        }
    }
    Ok(RatioReport {
        epsilon_grid: cfg.epsilon_grid.clone(),
        q_grid: cfg.q_grid.clone(),
        methods: cfg.methods.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// Aligned columns, six significant digits.
    Text,
    /// Comma-separated, full precision.
    Csv,
}

const PARAMS: [&str; 4] = ["mu", "v", "a", "k"];

fn pick(cell: &RatioCell, param: usize) -> f64 {
    match param {
        0 => cell.mu.mean,
        1 => cell.v.mean,
        2 => cell.a.mean,
        _ => cell.k.mean,
    }
}

/// Six significant digits, switching to exponent form outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Renders rows `ε × {mu, v, a, k}` against columns `method × q`.
pub fn emit_table(report: &RatioReport, format: TableFormat) -> String {
    let mut header = vec!["epsilon".to_string(), "parameter".to_string()];
    for m in &report.methods {
        for q in &report.q_grid {
            header.push(format!("{m}_q{q}"));
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for &eps in &report.epsilon_grid {
        for (pi, name) in PARAMS.iter().enumerate() {
            let mut row = vec![format!("{eps}"), name.to_string()];
            for &m in &report.methods {
                for &q in &report.q_grid {
                    let v = report.cell(eps, q, m).map(|c| pick(c, pi)).unwrap_or(f64::NAN);
                    row.push(match format {
                        TableFormat::Csv => format!("{v}"),
                        TableFormat::Text => sig6(v),
                    });
                }
            }
            rows.push(row);
        }
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for r in &rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cols: &[String]| -> String {
                let mut s = String::new();
                for (i, (c, w)) in cols.iter().zip(&widths).enumerate() {
                    if i < 2 {
                        let _ = write!(s, "{c:<w$}  ");
                    } else {
                        let _ = write!(s, "{c:>w$}  ");
                    }
                }
                s.trim_end().to_string()
            };
            out.push_str(&line(&header));
            out.push('\n');
            for r in &rows {
                out.push_str(&line(r));
                out.push('\n');
            }
        }
    }
    out
}
