//! Closed-form robust moments, the `(m1, m2, m3)` constants that factor the
//! risk parameter out of the structural formulas, and the resulting
//! credibility parameters for the four model pairs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use statrs::function::beta::beta_reg;

use crate::asymptotics::{process_variance_trimmed, process_variance_winsorized_closed};
use crate::error::{invalid, Error, Result};
use crate::models::{log_complement, probit, ConditionalModel, PriorModel};
use crate::normal;
use crate::quadrature::{width, UnitPoint};
use crate::risk::{pop_robust_moment, RobustMethod, WinsorSpec};

/// `∫_lo^hi H(w)^k dw` in closed form, for `k ≤ 2`.
///
/// Returns `Ok(None)` when no closed form is implemented for the order.
/// The log-logistic case goes through the regularized incomplete beta
/// function, which is evaluated numerically.
pub fn partial_moment(
    model: &ConditionalModel,
    lo: UnitPoint,
    hi: UnitPoint,
    k: u32,
) -> Result<Option<f64>> {
    if hi.wc <= 0.0 && !model.moment_exists(k) {
        return Err(Error::MomentNotFinite {
            order: k,
            model: model.to_string(),
        });
    }
    if width(lo, hi) <= 0.0 {
        return Ok(Some(0.0));
    }
    if k == 0 {
        return Ok(Some(width(lo, hi)));
    }
    if k > 2 {
        return Ok(None);
    }
    let kf = k as f64;
    let v = match *model {
        ConditionalModel::Exponential { theta } => {
            // Antiderivative in u = 1 - w.
            let f = |lu: f64, u: f64| -> f64 {
                if u <= 0.0 {
                    return 0.0;
                }
                match k {
                    1 => u * (1.0 - lu),
                    _ => u * (lu * lu - 2.0 * lu + 2.0),
                }
            };
            theta.powi(k as i32) * (f(log_complement(lo), lo.wc) - f(log_complement(hi), hi.wc))
        }
        ConditionalModel::Pareto { t, theta } => {
            let pw = |lu: f64, e: f64| (e * lu).exp();
            let f = |lu: f64, u: f64| -> f64 {
                if u <= 0.0 {
                    return 0.0;
                }
                match k {
                    1 => t / (t - 1.0) * pw(lu, (t - 1.0) / t) - u,
                    _ => {
                        t / (t - 2.0) * pw(lu, (t - 2.0) / t)
                            - 2.0 * t / (t - 1.0) * pw(lu, (t - 1.0) / t)
                            + u
                    }
                }
            };
            theta.powi(k as i32) * (f(log_complement(lo), lo.wc) - f(log_complement(hi), hi.wc))
        }
        ConditionalModel::Lognormal { theta, sigma } => {
            let s = kf * sigma;
            let a = probit(lo) - s;
            let b = probit(hi) - s;
            let mass = if a > 0.0 {
                normal::sf(a) - normal::sf(b)
            } else {
                normal::cdf(b) - normal::cdf(a)
            };
            (kf * theta + 0.5 * s * s).exp() * mass
        }
        ConditionalModel::LogLogistic { theta, sigma } => {
            let s = kf * sigma;
            if s >= 1.0 {
                return Ok(None);
            }
            (kf * theta).exp() * beta_ratio_integral(s, lo, hi)
        }
        ConditionalModel::Normal { mu, sd } => {
            let za = probit(lo);
            let zb = probit(hi);
            let d = normal::pdf(za) - normal::pdf(zb);
            let wd = width(lo, hi);
            let zphi = |z: f64| if z.is_finite() { z * normal::pdf(z) } else { 0.0 };
            match k {
                1 => mu * wd + sd * d,
                _ => mu * mu * wd + 2.0 * mu * sd * d + sd * sd * (wd + zphi(za) - zphi(zb)),
            }
        }
    };
    Ok(Some(v))
}

// ∫_lo^hi (w/(1-w))^s dw = B(1+s, 1-s) [I_hi(1+s, 1-s) - I_lo(1+s, 1-s)].
fn beta_ratio_integral(s: f64, lo: UnitPoint, hi: UnitPoint) -> f64 {
    let b = if s == 0.0 { 1.0 } else { PI * s / (PI * s).sin() };
    let (a1, b1) = (1.0 + s, 1.0 - s);
    // Lower regularized beta at a point, and its complement taken from the
    // other side so that levels near one keep their precision.
    let lower = |u: UnitPoint| -> f64 {
        if u.w <= 0.0 {
            0.0
        } else if u.wc <= 0.0 {
            1.0
        } else {
            beta_reg(a1, b1, u.w)
        }
    };
    let upper = |u: UnitPoint| -> f64 {
        if u.wc <= 0.0 {
            0.0
        } else if u.w <= 0.0 {
            1.0
        } else {
            beta_reg(b1, a1, u.wc)
        }
    };
    let diff = if lo.w >= 0.5 {
        upper(lo) - upper(hi)
    } else if hi.w <= 0.5 {
        lower(hi) - lower(lo)
    } else {
        (1.0 - upper(hi)) - lower(lo)
    };
    b * diff
}

/// `∫_0^a H(w)^k dw` for the lognormal with location 0 and scale `sigma`:
/// `exp(k²σ²/2) Φ(Φ⁻¹(a) - kσ)`.
pub fn partial_lognormal_moment(sigma: f64, a: f64, k: u32) -> f64 {
    let s = k as f64 * sigma;
    (0.5 * s * s).exp() * normal::cdf(normal::quantile(a) - s)
}

/// Conditional family of a model pair, with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKind {
    ExpGamma,
    ParetoGamma { t: f64 },
    LognormalNormal { sigma: f64 },
    LogLogisticNormal { sigma: f64 },
}

impl PairKind {
    /// The conditional model at unit scale (`θ = 1`) or zero location (`θ = 0`).
    pub fn unit_model(&self) -> Result<ConditionalModel> {
        match *self {
            PairKind::ExpGamma => ConditionalModel::exponential(1.0),
            PairKind::ParetoGamma { t } => ConditionalModel::pareto(t, 1.0),
            PairKind::LognormalNormal { sigma } => ConditionalModel::lognormal(0.0, sigma),
            PairKind::LogLogisticNormal { sigma } => ConditionalModel::loglogistic(0.0, sigma),
        }
    }

    /// The conditional model at risk parameter `theta`.
    pub fn model_at(&self, theta: f64) -> Result<ConditionalModel> {
        match *self {
            PairKind::ExpGamma => ConditionalModel::exponential(theta),
            PairKind::ParetoGamma { t } => ConditionalModel::pareto(t, theta),
            PairKind::LognormalNormal { sigma } => ConditionalModel::lognormal(theta, sigma),
            PairKind::LogLogisticNormal { sigma } => ConditionalModel::loglogistic(theta, sigma),
        }
    }

    fn uses_gamma_prior(&self) -> bool {
        matches!(self, PairKind::ExpGamma | PairKind::ParetoGamma { .. })
    }

    fn key(&self) -> (u8, u64) {
        match *self {
            PairKind::ExpGamma => (0, 0),
            PairKind::ParetoGamma { t } => (1, t.to_bits()),
            PairKind::LognormalNormal { sigma } => (2, sigma.to_bits()),
            PairKind::LogLogisticNormal { sigma } => (3, sigma.to_bits()),
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::ExpGamma => write!(f, "exp-gamma"),
            PairKind::ParetoGamma { t } => write!(f, "pareto-gamma(t={t})"),
            PairKind::LognormalNormal { sigma } => write!(f, "lognormal-normal(sigma={sigma})"),
            PairKind::LogLogisticNormal { sigma } => {
                write!(f, "loglogistic-normal(sigma={sigma})")
            }
        }
    }
}

/// A conditional family together with the prior of its risk parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPair {
    kind: PairKind,
    prior: PriorModel,
}

impl ModelPair {
    pub fn new(kind: PairKind, prior: PriorModel) -> Result<Self> {
        kind.unit_model()?;
        let gamma = matches!(prior, PriorModel::Gamma { .. });
        if gamma != kind.uses_gamma_prior() {
            return Err(invalid(format!(
                "{kind} needs a {} prior",
                if kind.uses_gamma_prior() { "gamma" } else { "normal" }
            )));
        }
        Ok(ModelPair { kind, prior })
    }

    pub fn exp_gamma(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(PairKind::ExpGamma, PriorModel::gamma(alpha, beta)?)
    }

    pub fn pareto_gamma(t: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(PairKind::ParetoGamma { t }, PriorModel::gamma(alpha, beta)?)
    }

    pub fn lognormal_normal(sigma: f64, mu: f64, v2: f64) -> Result<Self> {
        Self::new(PairKind::LognormalNormal { sigma }, PriorModel::normal(mu, v2)?)
    }

    pub fn loglogistic_normal(sigma: f64, mu: f64, v2: f64) -> Result<Self> {
        Self::new(PairKind::LogLogisticNormal { sigma }, PriorModel::normal(mu, v2)?)
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn prior(&self) -> PriorModel {
        self.prior
    }
}

/// Constants with `μ(θ) = s(θ)·m1`, `E[X_R²|θ] = s(θ)²·m2` and
/// `v(θ) = s(θ)²·m3`, where `s(θ)` is `θ` for the scale families and `e^θ`
/// for the log-location families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub method: RobustMethod,
    pub kind: PairKind,
}

type CacheKey = (u8, u64, u64, u64, RobustMethod);

fn cache() -> &'static RwLock<HashMap<CacheKey, MConstants>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, MConstants>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Robust m-constants for a pair at `spec`.
///
/// `m1` and `m2` are closed forms. `m3` is the trimmed double integral for
/// `T` and the closed winsorized variance formula for `W`. Results are
/// cached process-wide.
pub fn m_constants(kind: PairKind, spec: &WinsorSpec, method: RobustMethod) -> Result<MConstants> {
    let (tag, shape) = kind.key();
    let key = (tag, shape, spec.p().to_bits(), spec.q().to_bits(), method);
    if let Some(m) = cache().read().expect("m-constant cache poisoned").get(&key) {
        return Ok(*m);
    }
    let m = compute_m_constants(kind, spec, method)?;
    cache()
        .write()
        .expect("m-constant cache poisoned")
        .insert(key, m);
    Ok(m)
}

fn compute_m_constants(kind: PairKind, spec: &WinsorSpec, method: RobustMethod) -> Result<MConstants> {
    let unit = kind.unit_model()?;
    let m1 = pop_robust_moment(&unit, spec, 1, method)?;
    let m2 = pop_robust_moment(&unit, spec, 2, method)?;
    let m3 = match method {
        RobustMethod::Trimmed => process_variance_trimmed(&unit, spec)?.value,
        RobustMethod::Winsorized => process_variance_winsorized_closed(&unit, spec)?.value,
    };
    Ok(MConstants {
        m1,
        m2,
        m3,
        method,
        kind,
    })
}

/// The m-constants of the plain mean, `p = q = 0`, from the textbook moments.
pub fn nonrobust_m_constants(kind: PairKind) -> Result<MConstants> {
    let unit = kind.unit_model()?;
    if !unit.moment_exists(2) {
        return Err(Error::MomentNotFinite {
            order: 2,
            model: unit.to_string(),
        });
    }
    let (m1, m2) = match kind {
        PairKind::ExpGamma => (1.0, 2.0),
        PairKind::ParetoGamma { t } => (
            1.0 / (t - 1.0),
            t / (t - 2.0) - 2.0 * t / (t - 1.0) + 1.0,
        ),
        PairKind::LognormalNormal { sigma } => {
            let s2 = sigma * sigma;
            ((0.5 * s2).exp(), (2.0 * s2).exp())
        }
        PairKind::LogLogisticNormal { sigma } => {
            let x = PI * sigma;
            (x / x.sin(), 2.0 * x / (2.0 * x).sin())
        }
    };
    Ok(MConstants {
        m1,
        m2,
        m3: m2 - m1 * m1,
        method: RobustMethod::Winsorized,
        kind,
    })
}

/// Structural credibility parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralParams {
    /// Collective premium.
    pub mu: f64,
    /// Expected process variance.
    pub v: f64,
    /// Variance of the hypothetical means.
    pub a: f64,
    /// Credibility coefficient `v / a`.
    pub k: f64,
    pub method: RobustMethod,
    pub kind: PairKind,
}

/// Structural parameters from m-constants and a prior.
///
/// Gamma prior: `μ = (α/β)m1`, `a = (α/β²)m1²`, `v = α(α+1)/β²·m3`.
/// Normal prior: `μ = e^{μ+v²/2}m1`, `a = (e^{2μ+2v²} - e^{2μ+v²})m1²`,
/// `v = e^{2μ+2v²}m3`.
pub fn structural_from_constants(m: &MConstants, prior: &PriorModel) -> Result<StructuralParams> {
    let (mu, a, v) = match *prior {
        PriorModel::Gamma { alpha, beta } => (
            alpha / beta * m.m1,
            alpha / (beta * beta) * m.m1 * m.m1,
            alpha * (alpha + 1.0) / (beta * beta) * m.m3,
        ),
        PriorModel::Normal { mean, var } => {
            let e2 = (2.0 * mean + 2.0 * var).exp();
            let e1 = (2.0 * mean + var).exp();
            (
                (mean + 0.5 * var).exp() * m.m1,
                e1 * var.exp_m1() * m.m1 * m.m1,
                e2 * m.m3,
            )
        }
    };
    if !(a > 0.0) {
        return Err(Error::Undefined(format!(
            "credibility coefficient k (variance of hypothetical means is {a})"
        )));
    }
    Ok(StructuralParams {
        mu,
        v,
        a,
        k: v / a,
        method: m.method,
        kind: m.kind,
    })
}

pub fn structural_params(
    pair: &ModelPair,
    spec: &WinsorSpec,
    method: RobustMethod,
) -> Result<StructuralParams> {
    let m = m_constants(pair.kind, spec, method)?;
    structural_from_constants(&m, &pair.prior)
}

/// `Z = n / (n + k)`.
pub fn credibility_factor(params: &StructuralParams, n: f64) -> f64 {
    if params.k.is_infinite() {
        return 0.0;
    }
    n / (n + params.k)
}

/// `Z·R̂ + (1 - Z)·μ_R`.
pub fn credibility_premium(params: &StructuralParams, robust_mean: f64, n: f64) -> f64 {
    let z = credibility_factor(params, n);
    z * robust_mean + (1.0 - z) * params.mu
}

/// Classical credibility factor and collective premium of the pair.
pub fn nonrobust_limit(pair: &ModelPair, n: f64) -> Result<(f64, f64)> {
    let m = nonrobust_m_constants(pair.kind)?;
    let s = structural_from_constants(&m, &pair.prior)?;
    Ok((credibility_factor(&s, n), s.mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{tanh_sinh_with, TanhSinhOptions};

    fn spec(p: f64, q: f64) -> WinsorSpec {
        WinsorSpec::new(p, q).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn partial_moments_match_quadrature() {
        let models = [
            ConditionalModel::exponential(1.7).unwrap(),
            ConditionalModel::pareto(3.5, 0.8).unwrap(),
            ConditionalModel::lognormal(0.3, 0.45).unwrap(),
            ConditionalModel::loglogistic(0.2, 0.45).unwrap(),
            ConditionalModel::normal(0.5, 1.5).unwrap(),
        ];
        let opts = TanhSinhOptions::with_rel_tol(1e-14);
        for m in models {
            for (a, b) in [(0.0, 0.3), (0.01, 0.95), (0.6, 0.9999), (0.2, 0.21)] {
                let lo = UnitPoint::new(a);
                let hi = UnitPoint::new(b);
                for k in 1..=2 {
                    let closed = partial_moment(&m, lo, hi, k).unwrap().unwrap();
                    let quad =
                        tanh_sinh_with(|u| m.quantile_at(u).powi(k as i32), lo, hi, &opts).unwrap();
                    assert!(
                        (closed - quad.value).abs() <= 1e-11 * quad.value.abs().max(1e-3),
                        "{m} [{a},{b}] k={k}: {closed} vs {}",
                        quad.value
                    );
                }
            }
        }
    }

    #[test]
    fn lognormal_helper() {
        // ∫_0^1 e^{σz} = e^{σ²/2}
        let s: f64 = 0.45;
        assert!(rel(partial_lognormal_moment(s, 1.0 - 1e-17, 1), (0.5 * s * s).exp()) < 1e-12);
        assert!(partial_lognormal_moment(s, 0.0, 2) == 0.0);
        let m = ConditionalModel::lognormal(0.0, s).unwrap();
        let direct = partial_moment(&m, UnitPoint::ZERO, UnitPoint::new(0.3), 2).unwrap().unwrap();
        assert!(rel(partial_lognormal_moment(s, 0.3, 2), direct) < 1e-13);
    }

    #[test]
    fn exponential_printed_forms() {
        for (p, q) in [(0.0, 0.1), (0.05, 0.05), (0.1, 0.2)] {
            let s = spec(p, q);
            let lp = (1.0f64 - p).ln();
            let lq = if q > 0.0 { q * (1.0 - q.ln()) } else { 0.0 };
            let w = m_constants(PairKind::ExpGamma, &s, RobustMethod::Winsorized).unwrap();
            assert!(rel(w.m1, 1.0 - p - q - lp) < 1e-13);
            let t = m_constants(PairKind::ExpGamma, &s, RobustMethod::Trimmed).unwrap();
            assert!(rel(t.m1, ((1.0 - p) * (1.0 - lp) - lq) / (1.0 - p - q)) < 1e-13);
        }
        // With p = 0 the winsorized variance factor collapses to 1 - q.
        let w = m_constants(PairKind::ExpGamma, &spec(0.0, 0.1), RobustMethod::Winsorized).unwrap();
        assert!(rel(w.m3, 0.9) < 1e-12);
        assert!(rel(w.m2, 2.0 - 2.0 * 0.1 * (1.0 - 0.1f64.ln())) < 1e-13);
    }

    #[test]
    fn nonrobust_examples() {
        let m = m_constants(PairKind::ExpGamma, &WinsorSpec::NONE, RobustMethod::Trimmed).unwrap();
        assert!(rel(m.m1, 1.0) < 1e-14 && rel(m.m2, 2.0) < 1e-14 && rel(m.m3, 1.0) < 1e-9);
        let m = nonrobust_m_constants(PairKind::ParetoGamma { t: 3.0 }).unwrap();
        assert_eq!((m.m1, m.m2, m.m3), (0.5, 1.0, 0.75));
        let m = nonrobust_m_constants(PairKind::LognormalNormal { sigma: 0.45 }).unwrap();
        assert!((m.m1 - 1.106_553_245).abs() < 1e-9);
        assert!((m.m3 - 0.274_842_415).abs() < 1e-9);
    }

    #[test]
    fn structural_examples() {
        let pair = ModelPair::exp_gamma(4.0, 2.0).unwrap();
        let s = structural_params(&pair, &WinsorSpec::NONE, RobustMethod::Winsorized).unwrap();
        assert!(rel(s.mu, 2.0) < 1e-14 && rel(s.a, 1.0) < 1e-14);
        assert!(rel(s.v, 5.0) < 1e-12 && rel(s.k, 5.0) < 1e-12);
        assert!((credibility_factor(&s, 100.0) - 100.0 / 105.0).abs() < 1e-12);
        let prem = credibility_premium(&s, 2.4, 100.0);
        assert!((prem - (100.0 / 105.0 * 2.4 + 5.0 / 105.0 * 2.0)).abs() < 1e-12);
        assert!((prem - 2.380_952).abs() < 1e-6);

        let (z, mu) = nonrobust_limit(&pair, 100.0).unwrap();
        assert!((z - 100.0 / 105.0).abs() < 1e-15 && mu == 2.0);
        let pg = ModelPair::pareto_gamma(3.0, 4.0, 2.0).unwrap();
        let (z, mu) = nonrobust_limit(&pg, 100.0).unwrap();
        assert!((z - 100.0 / 115.0).abs() < 1e-14 && (mu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn factor_limits() {
        let mut s = structural_params(
            &ModelPair::exp_gamma(4.0, 2.0).unwrap(),
            &WinsorSpec::NONE,
            RobustMethod::Winsorized,
        )
        .unwrap();
        s.k = 0.0;
        assert_eq!(credibility_factor(&s, 1.0), 1.0);
        assert_eq!(credibility_premium(&s, 3.0, 1.0), 3.0);
        s.k = f64::INFINITY;
        assert_eq!(credibility_factor(&s, 1.0), 0.0);
        assert_eq!(credibility_premium(&s, 3.0, 1.0), s.mu);
    }

    #[test]
    fn exp_gamma_k_formula() {
        for (p, q) in [(0.0, 0.05), (0.02, 0.1), (0.1, 0.2)] {
            let s = spec(p, q);
            for method in RobustMethod::ALL {
                let pair = ModelPair::exp_gamma(3.0, 0.7).unwrap();
                let st = structural_params(&pair, &s, method).unwrap();
                let m = m_constants(PairKind::ExpGamma, &s, method).unwrap();
                assert!(rel(st.k, 4.0 * m.m3 / (m.m1 * m.m1)) < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_prior_is_rejected() {
        assert!(ModelPair::new(PairKind::ExpGamma, PriorModel::normal(0.0, 1.0).unwrap()).is_err());
        assert!(ModelPair::new(
            PairKind::LognormalNormal { sigma: 0.4 },
            PriorModel::gamma(1.0, 1.0).unwrap()
        )
        .is_err());
        assert!(ModelPair::pareto_gamma(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn variance_factor_nonnegative() {
        let kinds = [
            PairKind::ExpGamma,
            PairKind::ParetoGamma { t: 3.0 },
            PairKind::LognormalNormal { sigma: 0.45 },
            PairKind::LogLogisticNormal { sigma: 0.45 },
        ];
        for kind in kinds {
            for (p, q) in [(0.0, 0.0), (0.0, 0.2), (0.1, 0.1), (0.2, 0.05)] {
                for method in RobustMethod::ALL {
                    let m = m_constants(kind, &spec(p, q), method).unwrap();
                    assert!(m.m2 - m.m1 * m.m1 >= -1e-14, "{kind} {p} {q} {method}");
                    assert!(m.m1 > 0.0 && m.m3 >= 0.0);
                }
            }
        }
    }
}
