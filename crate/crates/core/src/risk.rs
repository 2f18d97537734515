//! Trimmed and winsorized means and moments, population and sample, and the
//! coherence properties of the winsorized mean viewed as a risk measure.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::credibility::partial_moment;
use crate::error::{invalid, Error, Result};
use crate::models::ConditionalModel;
use crate::quadrature::{tanh_sinh_with, TanhSinhOptions, UnitPoint};

/// Left and right proportions `(p, q)` with `0 ≤ p < 1 - q ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinsorSpec {
    p: f64,
    q: f64,
}

impl WinsorSpec {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite()) || p < 0.0 || q < 0.0 || p + q >= 1.0 {
            return Err(invalid(format!(
                "proportions must satisfy 0 <= p < 1 - q <= 1, got p = {p}, q = {q}"
            )));
        }
        Ok(WinsorSpec { p, q })
    }

    /// `p = q = 0`: the plain mean.
    pub const NONE: WinsorSpec = WinsorSpec { p: 0.0, q: 0.0 };

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `1 - p - q`.
    pub fn width(&self) -> f64 {
        1.0 - self.p - self.q
    }

    pub fn lower(&self) -> UnitPoint {
        UnitPoint::new(self.p)
    }

    pub fn upper(&self) -> UnitPoint {
        UnitPoint::from_complement(self.q)
    }

    /// `([np], [nq])`, the counts cut from each end of a sample of size `n`.
    pub fn cut_counts(&self, n: usize) -> (usize, usize) {
        (floor_count(n, self.p), floor_count(n, self.q))
    }
}

// The small offset keeps products such as 100 * 0.07 on the intended integer.
fn floor_count(n: usize, prop: f64) -> usize {
    (n as f64 * prop + 1e-9).floor() as usize
}

impl fmt::Display for WinsorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p = {}, q = {})", self.p, self.q)
    }
}

/// Trimming discards the extremes, winsorizing moves them to the cut points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RobustMethod {
    Trimmed,
    Winsorized,
}

impl RobustMethod {
    pub const ALL: [RobustMethod; 2] = [RobustMethod::Trimmed, RobustMethod::Winsorized];

    pub fn letter(&self) -> &'static str {
        match self {
            RobustMethod::Trimmed => "T",
            RobustMethod::Winsorized => "W",
        }
    }
}

impl fmt::Display for RobustMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for RobustMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t" | "trim" | "trimmed" => Ok(RobustMethod::Trimmed),
            "w" | "winsor" | "winsorized" | "winsorised" => Ok(RobustMethod::Winsorized),
            other => Err(invalid(format!("unknown robust method `{other}`"))),
        }
    }
}

/// `p·H(p)^k + q·H(1-q)^k`, dropping a term whose weight is zero.
pub(crate) fn endpoint_mass(model: &ConditionalModel, spec: &WinsorSpec, k: u32) -> f64 {
    let mut total = 0.0;
    if spec.p > 0.0 {
        total += spec.p * model.quantile_at(spec.lower()).powi(k as i32);
    }
    if spec.q > 0.0 {
        total += spec.q * model.quantile_at(spec.upper()).powi(k as i32);
    }
    total
}

fn check_order(model: &ConditionalModel, spec: &WinsorSpec, k: u32) -> Result<()> {
    if k == 0 {
        return Err(invalid("moment order must be positive"));
    }
    if spec.q == 0.0 && !model.moment_exists(k) {
        return Err(Error::MomentNotFinite {
            order: k,
            model: model.to_string(),
        });
    }
    Ok(())
}

/// Population `k`-th trimmed or winsorized moment.
///
/// Trimmed: `(1-p-q)⁻¹ ∫_p^{1-q} H(w)^k dw`.
/// Winsorized: `p·H(p)^k + ∫_p^{1-q} H(w)^k dw + q·H(1-q)^k`.
///
/// Orders one and two use closed forms; higher orders are integrated
/// numerically. An endpoint term with zero weight is omitted, so `p = 0`
/// is allowed even when `H(0)` is infinite.
pub fn pop_robust_moment(
    model: &ConditionalModel,
    spec: &WinsorSpec,
    k: u32,
    method: RobustMethod,
) -> Result<f64> {
    check_order(model, spec, k)?;
    let integral = match partial_moment(model, spec.lower(), spec.upper(), k)? {
        Some(v) => v,
        None => integrate_power(model, spec, k)?,
    };
    Ok(assemble(model, spec, k, method, integral))
}

/// Same as [`pop_robust_moment`] but always by direct quadrature of `H^k`.
pub fn pop_robust_moment_quadrature(
    model: &ConditionalModel,
    spec: &WinsorSpec,
    k: u32,
    method: RobustMethod,
) -> Result<f64> {
    check_order(model, spec, k)?;
    let integral = integrate_power(model, spec, k)?;
    Ok(assemble(model, spec, k, method, integral))
}

fn assemble(
    model: &ConditionalModel,
    spec: &WinsorSpec,
    k: u32,
    method: RobustMethod,
    integral: f64,
) -> f64 {
    match method {
        RobustMethod::Trimmed => integral / spec.width(),
        RobustMethod::Winsorized => integral + endpoint_mass(model, spec, k),
    }
}

fn integrate_power(model: &ConditionalModel, spec: &WinsorSpec, k: u32) -> Result<f64> {
    let opts = TanhSinhOptions::with_rel_tol(1e-13);
    let est = tanh_sinh_with(
        |u| model.quantile_at(u).powi(k as i32),
        spec.lower(),
        spec.upper(),
        &opts,
    )?;
    Ok(est.value)
}

/// Winsorized mean of a quantile function supplied as a closure over
/// `(w, 1 - w)`, by quadrature.
pub fn winsorized_mean_of<H>(h: H, spec: &WinsorSpec) -> Result<f64>
where
    H: Fn(UnitPoint) -> f64,
{
    let opts = TanhSinhOptions::with_rel_tol(1e-13);
    let body = tanh_sinh_with(&h, spec.lower(), spec.upper(), &opts)?.value;
    let mut total = body;
    if spec.p > 0.0 {
        total += spec.p * h(spec.lower());
    }
    if spec.q > 0.0 {
        total += spec.q * h(spec.upper());
    }
    Ok(total)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData("losses must be finite".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn window(n: usize, spec: &WinsorSpec) -> Result<(usize, usize)> {
    let (lo, hi) = spec.cut_counts(n);
    if n == 0 || lo + hi >= n {
        return Err(Error::EmptyWindow {
            n,
            p: spec.p,
            q: spec.q,
        });
    }
    Ok((lo, hi))
}

/// Trimmed mean of already sorted data.
pub fn trimmed_mean_sorted(xs: &[f64], spec: &WinsorSpec) -> Result<f64> {
    let n = xs.len();
    let (lo, hi) = window(n, spec)?;
    let kept = &xs[lo..n - hi];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Winsorized mean of already sorted data.
pub fn winsorized_mean_sorted(xs: &[f64], spec: &WinsorSpec) -> Result<f64> {
    let n = xs.len();
    let (lo, hi) = window(n, spec)?;
    let kept = &xs[lo..n - hi];
    let total = lo as f64 * kept[0] + kept.iter().sum::<f64>() + hi as f64 * kept[kept.len() - 1];
    Ok(total / n as f64)
}

/// Mean of `X_([np]+1), …, X_(n-[nq])`.
pub fn sample_trimmed_mean(xs: &[f64], spec: &WinsorSpec) -> Result<f64> {
    trimmed_mean_sorted(&sorted(xs)?, spec)
}

/// `([np]·X_([np]+1) + Σ X_(i) + [nq]·X_(n-[nq])) / n`.
pub fn sample_winsorized_mean(xs: &[f64], spec: &WinsorSpec) -> Result<f64> {
    winsorized_mean_sorted(&sorted(xs)?, spec)
}

pub fn sample_robust_mean(xs: &[f64], spec: &WinsorSpec, method: RobustMethod) -> Result<f64> {
    match method {
        RobustMethod::Trimmed => sample_trimmed_mean(xs, spec),
        RobustMethod::Winsorized => sample_winsorized_mean(xs, spec),
    }
}

pub(crate) fn robust_mean_sorted(
    xs: &[f64],
    spec: &WinsorSpec,
    method: RobustMethod,
) -> Result<f64> {
    match method {
        RobustMethod::Trimmed => trimmed_mean_sorted(xs, spec),
        RobustMethod::Winsorized => winsorized_mean_sorted(xs, spec),
    }
}

/// Outcome of one axiom check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomCheck {
    pub cases: usize,
    /// Largest violation seen: a relative error for the equalities, the
    /// amount by which `ρ(X)` exceeded `ρ(Y)` for monotonicity.
    pub worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub spec: WinsorSpec,
    pub tolerance: f64,
    pub monotonicity: AxiomCheck,
    pub homogeneity: AxiomCheck,
    pub translation: AxiomCheck,
}

impl CoherenceReport {
    pub fn all_passed(&self) -> bool {
        self.monotonicity.passed && self.homogeneity.passed && self.translation.passed
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> ConditionalModel {
    let scale = rng.random_range(0.1..10.0);
    let loc = rng.random_range(-2.0..2.0);
    match rng.random_range(0..5u32) {
        0 => ConditionalModel::Exponential { theta: scale },
        1 => ConditionalModel::Pareto {
            t: rng.random_range(2.5..10.0),
            theta: scale,
        },
        2 => ConditionalModel::Lognormal {
            theta: loc,
            sigma: rng.random_range(0.1..1.5),
        },
        3 => ConditionalModel::LogLogistic {
            theta: loc,
            sigma: rng.random_range(0.05..0.45),
        },
        _ => ConditionalModel::Normal { mu: loc, sd: scale },
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Property-tests monotonicity, positive homogeneity and translation
/// invariance of the population winsorized mean over `trials` random models
/// and constants. Requires `0 < p < 1 - q < 1`.
pub fn check_coherence_axioms(spec: &WinsorSpec, trials: usize, seed: u64) -> Result<CoherenceReport> {
    if !(spec.p > 0.0 && spec.q > 0.0) {
        return Err(invalid("coherence checks need 0 < p < 1 - q < 1"));
    }
    let tolerance = 1e-10;
    let rho = |m: &ConditionalModel| pop_robust_moment(m, spec, 1, RobustMethod::Winsorized);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mono = 0.0f64;
    let mut homo = 0.0f64;
    let mut trans = 0.0f64;
    for _ in 0..trials {
        let x = random_model(&mut rng);
        let rx = rho(&x)?;

        let c = rng.random_range(0.01..50.0);
        homo = homo.max(rel_err(rho(&x.scaled(c)?)?, c * rx));

        let shift = rng.random_range(-20.0..20.0);
        let shifted = winsorized_mean_of(|u| x.quantile_at(u) + shift, spec)?;
        trans = trans.max(rel_err(shifted, rx + shift));

        // Y dominates X quantile by quantile: a scaled copy for positive
        // losses, a shifted copy for the normal.
        let y = match x {
            ConditionalModel::Normal { mu, sd } => ConditionalModel::Normal {
                mu: mu + rng.random_range(0.0..5.0),
                sd,
            },
            _ => x.scaled(rng.random_range(1.0..5.0))?,
        };
        mono = mono.max(rx - rho(&y)?);
    }
    let check = |worst: f64| AxiomCheck {
        cases: trials,
        worst,
        passed: worst <= tolerance,
    };
    Ok(CoherenceReport {
        spec: *spec,
        tolerance,
        monotonicity: AxiomCheck {
            cases: trials,
            worst: mono.max(0.0),
            passed: mono <= 0.0,
        },
        homogeneity: check(homo),
        translation: check(trans),
    })
}

/// `(ρ(X + Y), ρ(X) + ρ(Y))` for independent standard normals `X`, `Y`,
/// where `ρ` is the winsorized mean. Requires `0 < p < 1 - q < 0.5`, where
/// the first exceeds the second.
pub fn subadditivity_counterexample(spec: &WinsorSpec) -> Result<(f64, f64)> {
    if !(spec.p > 0.0 && 1.0 - spec.q < 0.5) {
        return Err(invalid(format!(
            "the counterexample needs 0 < p < 1 - q < 0.5, got {spec}"
        )));
    }
    let std = ConditionalModel::normal(0.0, 1.0)?;
    let sum = ConditionalModel::normal(0.0, std::f64::consts::SQRT_2)?;
    let rho_sum = pop_robust_moment(&sum, spec, 1, RobustMethod::Winsorized)?;
    let rho_one = pop_robust_moment(&std, spec, 1, RobustMethod::Winsorized)?;
    Ok((rho_sum, 2.0 * rho_one))
}
