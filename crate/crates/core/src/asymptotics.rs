//! Asymptotic variances of the trimmed and winsorized means.
//!
//! * Trimmed: `(1-p-q)⁻² ∬_{[p,1-q]²} (min(u,v) - uv) H'(u) H'(v) du dv`.
//! * Winsorized, closed form:
//!   `Var(X_W) + 2[μ_W(A-B) + B·H(1-q) - A·H(p)] - (A-B)² + A²/p + B²/q`
//!   with `A = p²H'(p)` and `B = q²H'(1-q)`.
//! * Winsorized, influence form: `∫_0^1 α(u)² du`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::normal;
use crate::quadrature::{tanh_sinh_with, TanhSinhOptions, UnitPoint};
use crate::risk::{pop_robust_moment, robust_mean_sorted, RobustMethod, WinsorSpec};
use crate::seed;

/// Which formula produced a [`VarianceResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceFormula {
    TrimmedDoubleIntegral,
    WinsorizedClosed,
    WinsorizedInfluence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceResult {
    pub value: f64,
    pub method: RobustMethod,
    pub formula: VarianceFormula,
    /// Estimated absolute quadrature error; zero for closed forms.
    pub error: f64,
}

const INNER_TOL: f64 = 1e-13;
const OUTER_TOL: f64 = 1e-11;

// ∫_u^{1-q} (1-w) H'(w) dw, integrated by parts as
// (1-w)H(w) |_u^{1-q} + ∫_u^{1-q} H(w) dw. H is far tamer than H' near the
// ends (for the lognormal, H' decays too slowly at 0 for truncated nodes).
fn tail_influence(model: &ConditionalModel, u: UnitPoint, upper: UnitPoint) -> Result<f64> {
    // The integral ignores location, and dropping it avoids cancellation.
    let model = match *model {
        ConditionalModel::Normal { sd, .. } => ConditionalModel::Normal { mu: 0.0, sd },
        m => m,
    };
    let opts = TanhSinhOptions::with_rel_tol(INNER_TOL);
    let body = tanh_sinh_with(|w| model.quantile_at(w), u, upper, &opts)?.value;
    let top = if upper.wc > 0.0 {
        upper.wc * model.quantile_at(upper)
    } else {
        0.0
    };
    Ok(top - u.wc * model.quantile_at(u) + body)
}

// Outer integral with a nested inner one; the first inner failure wins.
fn nested<F>(lo: UnitPoint, hi: UnitPoint, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(UnitPoint) -> Result<f64>,
{
    let mut failure: Option<Error> = None;
    let opts = TanhSinhOptions::with_rel_tol(OUTER_TOL);
    let est = tanh_sinh_with(
        |u| match f(u) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        &opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let est = est?;
    Ok((est.value, est.error))
}

fn require_variance(model: &ConditionalModel, spec: &WinsorSpec) -> Result<()> {
    if spec.q() == 0.0 && !model.moment_exists(2) {
        return Err(Error::MomentNotFinite {
            order: 2,
            model: model.to_string(),
        });
    }
    Ok(())
}

/// Trimmed-mean asymptotic variance.
///
/// The symmetric kernel is folded onto the triangle `u < v`, giving
/// `2 ∫_p^{1-q} u H'(u) ∫_u^{1-q} (1-v) H'(v) dv du`, and both levels are
/// integrated with double-exponential quadrature, which absorbs the
/// endpoint singularities of `H'`.
pub fn process_variance_trimmed(model: &ConditionalModel, spec: &WinsorSpec) -> Result<VarianceResult> {
    require_variance(model, spec)?;
    let (lo, hi) = (spec.lower(), spec.upper());
    let (v, err) = nested(lo, hi, |u| {
        let d = model.quantile_deriv_at(u);
        if u.w == 0.0 || d == 0.0 {
            return Ok(0.0);
        }
        Ok(u.w * d * tail_influence(model, u, hi)?)
    })?;
    let norm = spec.width() * spec.width();
    let value = 2.0 * v / norm;
    Ok(VarianceResult {
        value: value.max(0.0),
        method: RobustMethod::Trimmed,
        formula: VarianceFormula::TrimmedDoubleIntegral,
        error: 2.0 * err / norm + value.abs() * INNER_TOL,
    })
}

// A = p²H'(p) and B = q²H'(1-q), zero when the proportion is zero.
fn endpoint_slopes(model: &ConditionalModel, spec: &WinsorSpec) -> (f64, f64) {
    let a = if spec.p() > 0.0 {
        spec.p() * spec.p() * model.quantile_deriv_at(spec.lower())
    } else {
        0.0
    };
    let b = if spec.q() > 0.0 {
        spec.q() * spec.q() * model.quantile_deriv_at(spec.upper())
    } else {
        0.0
    };
    (a, b)
}

/// Winsorized-mean asymptotic variance from the closed form.
///
/// At `p = 0` or `q = 0` the terms carrying that proportion take their
/// limits, which are zero whenever the second moment exists; without a
/// second moment and `q = 0` the right endpoint term diverges.
pub fn process_variance_winsorized_closed(
    model: &ConditionalModel,
    spec: &WinsorSpec,
) -> Result<VarianceResult> {
    if spec.q() == 0.0 && !model.moment_exists(2) {
        return Err(Error::DivergentEndpoint {
            model: model.to_string(),
            side: "right",
        });
    }
    let w = RobustMethod::Winsorized;
    let m1 = pop_robust_moment(model, spec, 1, w)?;
    let m2 = pop_robust_moment(model, spec, 2, w)?;
    let (a, b) = endpoint_slopes(model, spec);
    let (p, q) = (spec.p(), spec.q());
    let mut value = m2 - m1 * m1 - (a - b) * (a - b) + 2.0 * m1 * (a - b);
    if p > 0.0 {
        value += a * a / p - 2.0 * a * model.quantile_at(spec.lower());
    }
    if q > 0.0 {
        value += b * b / q + 2.0 * b * model.quantile_at(spec.upper());
    }
    Ok(VarianceResult {
        value: value.max(0.0),
        method: w,
        formula: VarianceFormula::WinsorizedClosed,
        error: 0.0,
    })
}

/// Winsorized-mean asymptotic variance as `∫_0^1 α(u)² du`, with
///
/// `α(u) = (1-u)⁻¹ [∫_u^1 J(w)H'(w)(1-w) dw + Σ_m 1{p_m ≥ u} c_m (1-p_m) H'(p_m)]`,
///
/// `J = 1` on `[p, 1-q]`, `(p_1, c_1) = (p, p)` and `(p_2, c_2) = (1-q, q)`.
/// On `[0, p]` the numerator is constant and the piece is integrated
/// exactly; above `1 - q` the function vanishes.
pub fn process_variance_winsorized_oracle(
    model: &ConditionalModel,
    spec: &WinsorSpec,
) -> Result<VarianceResult> {
    require_variance(model, spec)?;
    let (p, q) = (spec.p(), spec.q());
    let (lo, hi) = (spec.lower(), spec.upper());
    let b_term = if q > 0.0 {
        q * q * model.quantile_deriv_at(hi)
    } else {
        0.0
    };
    let mut total = 0.0;
    if p > 0.0 {
        let c = tail_influence(model, lo, hi)? + p * (1.0 - p) * model.quantile_deriv_at(lo) + b_term;
        total += c * c * p / (1.0 - p);
    }
    let (mid, err) = nested(lo, hi, |u| {
        if u.wc <= 0.0 {
            return Ok(0.0);
        }
        let alpha = (tail_influence(model, u, hi)? + b_term) / u.wc;
        Ok(alpha * alpha)
    })?;
    total += mid;
    Ok(VarianceResult {
        value: total,
        method: RobustMethod::Winsorized,
        formula: VarianceFormula::WinsorizedInfluence,
        error: err + total * INNER_TOL,
    })
}

/// Asymptotic variance for either method (closed form for `W`).
pub fn process_variance(
    model: &ConditionalModel,
    spec: &WinsorSpec,
    method: RobustMethod,
) -> Result<VarianceResult> {
    match method {
        RobustMethod::Trimmed => process_variance_trimmed(model, spec),
        RobustMethod::Winsorized => process_variance_winsorized_closed(model, spec),
    }
}

/// Summary of standardized robust means `√n (R̂ - μ_R) / √v_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub n: usize,
    pub reps: usize,
    pub mu: f64,
    pub v: f64,
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov–Smirnov distance to the standard normal.
    pub ks: f64,
    /// Set when `v_R` is numerically zero; the statistics then describe the
    /// unstandardized `√n (R̂ - μ_R)`.
    pub degenerate: bool,
}

/// Monte Carlo check of asymptotic normality of the robust mean.
///
/// Replication `i` draws from its own stream, so the report does not depend
/// on the number of worker threads.
pub fn asymptotic_normality_test(
    model: &ConditionalModel,
    spec: &WinsorSpec,
    method: RobustMethod,
    n: usize,
    reps: usize,
    seed_value: u64,
) -> Result<NormalityReport> {
    if n < 2 || reps < 2 {
        return Err(Error::InsufficientData(format!(
            "need n >= 2 and reps >= 2, got n = {n}, reps = {reps}"
        )));
    }
    let mu = pop_robust_moment(model, spec, 1, method)?;
    let v = process_variance(model, spec, method)?.value;
    let degenerate = !(v > 1e-14 * mu.abs().max(1.0).powi(2));
    let scale = if degenerate { 1.0 } else { v.sqrt() };
    let root_n = (n as f64).sqrt();
    let stats: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(seed_value, i as u64, 0);
            let mut xs = model.sample(&mut rng, n);
            xs.sort_by(f64::total_cmp);
            robust_mean_sorted(&xs, spec, method).map(|r| root_n * (r - mu) / scale)
        })
        .collect::<Result<_>>()?;
    let r = reps as f64;
    let mean = stats.iter().sum::<f64>() / r;
    let variance = stats.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let mut sorted = stats;
    sorted.sort_by(f64::total_cmp);
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = normal::cdf(z);
            (f - i as f64 / r).abs().max(((i + 1) as f64 / r - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(NormalityReport {
        n,
        reps,
        mu,
        v,
        mean,
        variance,
        ks,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: f64, q: f64) -> WinsorSpec {
        WinsorSpec::new(p, q).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn exp1() -> ConditionalModel {
        ConditionalModel::exponential(1.0).unwrap()
    }

    #[test]
    fn exponential_full_data_variance_is_one() {
        let s = WinsorSpec::NONE;
        assert!(rel(process_variance_trimmed(&exp1(), &s).unwrap().value, 1.0) < 1e-10);
        assert!(rel(process_variance_winsorized_closed(&exp1(), &s).unwrap().value, 1.0) < 1e-13);
        assert!(rel(process_variance_winsorized_oracle(&exp1(), &s).unwrap().value, 1.0) < 1e-10);
    }

    #[test]
    fn exponential_right_winsorizing() {
        // With p = 0 the exponential closed form reduces to 1 - q.
        let s = spec(0.0, 0.1);
        let closed = process_variance_winsorized_closed(&exp1(), &s).unwrap().value;
        let oracle = process_variance_winsorized_oracle(&exp1(), &s).unwrap().value;
        assert!(rel(closed, 0.9) < 1e-13);
        assert!(rel(oracle, closed) < 1e-9);
    }

    #[test]
    fn closed_and_influence_forms_agree() {
        let cases = [
            (ConditionalModel::lognormal(0.0, 0.45).unwrap(), spec(0.02, 0.05)),
            (ConditionalModel::pareto(3.0, 1.0).unwrap(), spec(0.01, 0.05)),
            (ConditionalModel::loglogistic(0.0, 0.45).unwrap(), spec(0.1, 0.0)),
            (ConditionalModel::normal(1.0, 2.0).unwrap(), spec(0.2, 0.1)),
        ];
        for (m, s) in cases {
            let c = process_variance_winsorized_closed(&m, &s).unwrap().value;
            let o = process_variance_winsorized_oracle(&m, &s).unwrap().value;
            assert!(rel(o, c) < 1e-8, "{m} {s}: {c} vs {o}");
        }
    }

    #[test]
    fn trimmed_matches_clamped_variance() {
        // Var of X clamped to [H(p), H(1-q)] equals the kernel integral.
        let cases = [
            (exp1(), spec(0.05, 0.1)),
            (ConditionalModel::pareto(3.0, 1.0).unwrap(), spec(0.0, 0.0)),
            (ConditionalModel::lognormal(0.0, 0.45).unwrap(), spec(0.1, 0.2)),
            (ConditionalModel::loglogistic(0.0, 0.3).unwrap(), spec(0.0, 0.01)),
        ];
        for (m, s) in cases {
            let w = RobustMethod::Winsorized;
            let m1 = pop_robust_moment(&m, &s, 1, w).unwrap();
            let m2 = pop_robust_moment(&m, &s, 2, w).unwrap();
            let expect = (m2 - m1 * m1) / (s.width() * s.width());
            let got = process_variance_trimmed(&m, &s).unwrap().value;
            assert!(rel(got, expect) < 1e-9, "{m} {s}: {got} vs {expect}");
        }
    }

    #[test]
    fn narrow_window_limit() {
        // The kernel integral itself vanishes with the window, but after
        // dividing by (1-p-q)² the variance tends to u(1-u)H'(u)², the
        // asymptotic variance of the sample u-quantile.
        let s = spec(0.5, 0.5 - 1e-4);
        let v = process_variance_trimmed(&exp1(), &s).unwrap().value;
        assert!(v * s.width() * s.width() < 1e-6);
        assert!(rel(v, 0.25 * 4.0) < 1e-3, "{v}");
        let m = ConditionalModel::lognormal(0.0, 0.45).unwrap();
        let v = process_variance_trimmed(&m, &s).unwrap().value;
        let d = m.quantile_deriv(0.5).unwrap();
        assert!(rel(v, 0.25 * d * d) < 1e-3);
    }

    #[test]
    fn scale_equivariance() {
        let s = spec(0.02, 0.1);
        for m in [exp1(), ConditionalModel::pareto(4.0, 1.0).unwrap()] {
            let c = 3.7;
            let mc = m.scaled(c).unwrap();
            for f in [
                process_variance_trimmed,
                process_variance_winsorized_closed,
                process_variance_winsorized_oracle,
            ] {
                let a = f(&m, &s).unwrap().value;
                let b = f(&mc, &s).unwrap().value;
                assert!(rel(b, c * c * a) < 1e-9);
            }
        }
    }

    #[test]
    fn divergent_endpoint_guard() {
        let ll = ConditionalModel::loglogistic(0.0, 0.6).unwrap();
        assert!(matches!(
            process_variance_winsorized_closed(&ll, &WinsorSpec::NONE),
            Err(Error::DivergentEndpoint { .. })
        ));
        assert!(process_variance_winsorized_closed(&ll, &spec(0.0, 0.05)).is_ok());
        assert!(process_variance_trimmed(&ll, &WinsorSpec::NONE).is_err());
    }

    #[test]
    fn normality_report_small() {
        let r = asymptotic_normality_test(&exp1(), &spec(0.0, 0.1), RobustMethod::Winsorized, 2000, 200, 5)
            .unwrap();
        assert!(!r.degenerate);
        assert!(r.mean.abs() < 0.3 && (r.variance - 1.0).abs() < 0.3, "{r:?}");
        let again =
            asymptotic_normality_test(&exp1(), &spec(0.0, 0.1), RobustMethod::Winsorized, 2000, 200, 5)
                .unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn normality_report_degenerate_variance() {
        // Losses that are constant to within 1e-9 give a numerically zero v.
        let m = ConditionalModel::normal(5.0, 1e-9).unwrap();
        let r = asymptotic_normality_test(&m, &spec(0.1, 0.1), RobustMethod::Trimmed, 1000, 50, 1).unwrap();
        assert!(r.degenerate);
        assert!(r.variance.is_finite() && r.variance < 1e-15);
    }
}
