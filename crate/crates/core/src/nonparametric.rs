//! Empirical-Bayes robust credibility for grouped losses.
//!
//! Each group contributes a robust mean and an estimate of the asymptotic
//! variance of that mean; the portfolio estimates of `μ`, `v` and `a` are
//! pooled from these, and each group gets a credibility-weighted premium.

use crate::error::{Error, Result};
use crate::risk::{robust_mean_sorted, RobustMethod, WinsorSpec};

/// One risk group's losses, kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    id: String,
    sorted: Vec<f64>,
}

impl GroupSample {
    pub fn new(id: impl Into<String>, losses: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if losses.iter().any(|x| !x.is_finite()) {
            return Err(Error::InsufficientData(format!(
                "group `{id}` has non-finite losses"
            )));
        }
        let mut sorted = losses;
        sorted.sort_by(f64::total_cmp);
        Ok(GroupSample { id, sorted })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Raw count `n_i`.
    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_losses(&self) -> &[f64] {
        &self.sorted
    }

    /// Effective count `n_i'`: `n - [np] - [nq]` after trimming, `n` after
    /// winsorizing (nothing is discarded).
    pub fn n_eff(&self, spec: &WinsorSpec, method: RobustMethod) -> usize {
        effective_count(self.n(), spec, method)
    }
}

fn effective_count(n: usize, spec: &WinsorSpec, method: RobustMethod) -> usize {
    match method {
        RobustMethod::Trimmed => {
            let (lo, hi) = spec.cut_counts(n);
            n.saturating_sub(lo + hi)
        }
        RobustMethod::Winsorized => n,
    }
}

/// Number of order statistics spanned when estimating `H'` at a cut point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpacingWindow {
    /// Adjacent order statistics. A single scaled spacing is roughly
    /// exponential, so the squared endpoint terms come out about twice too
    /// large on average: the bias is near `A²/p + B²/q` and does not vanish.
    #[default]
    Single,
    /// `⌊√n⌋` order statistics, which makes the slope estimate consistent.
    SqrtN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NonparametricOptions {
    pub spacing: SpacingWindow,
}

/// Robust mean of one group.
pub fn group_robust_mean(group: &GroupSample, spec: &WinsorSpec, method: RobustMethod) -> Result<f64> {
    robust_mean_sorted(&group.sorted, spec, method)
}

/// Estimated asymptotic variance of the group's robust mean, with the
/// default options.
pub fn group_process_variance(
    group: &GroupSample,
    spec: &WinsorSpec,
    method: RobustMethod,
) -> Result<f64> {
    group_process_variance_with(group, spec, method, &NonparametricOptions::default())
}

pub fn group_process_variance_with(
    group: &GroupSample,
    spec: &WinsorSpec,
    method: RobustMethod,
    opts: &NonparametricOptions,
) -> Result<f64> {
    let x = &group.sorted;
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "group `{}` has {} losses, at least 3 are needed",
            group.id,
            x.len()
        )));
    }
    match method {
        RobustMethod::Trimmed => trimmed_variance_sorted(x, spec),
        RobustMethod::Winsorized => winsorized_variance_sorted(x, spec, opts),
    }
}

/// `n²/(n-[np]-[nq])² ΣΣ (min(i,j)/n - ij/n²) d_i d_j` with spacings
/// `d_i = x_(i+1) - x_(i)` over `i, j ∈ [[np]+1, min(n-[nq], n-1)]`.
///
/// Since `min(i,j)/n - ij/n² = min(i,j)(n - max(i,j))/n²`, the double sum
/// folds into one pass with a running sum of `i·d_i`.
pub fn trimmed_variance_sorted(x: &[f64], spec: &WinsorSpec) -> Result<f64> {
    let n = x.len();
    let (lo, hi) = spec.cut_counts(n);
    if lo + hi >= n {
        return Err(Error::EmptyWindow {
            n,
            p: spec.p(),
            q: spec.q(),
        });
    }
    let first = lo + 1;
    let last = (n - hi).min(n - 1);
    let nf = n as f64;
    let mut prefix = 0.0;
    let mut diag = 0.0;
    let mut cross = 0.0;
    for i in first..=last {
        let d = x[i] - x[i - 1];
        let fi = i as f64;
        let tail = nf - fi;
        diag += fi * tail * d * d;
        cross += tail * d * prefix;
        prefix += fi * d;
    }
    let kept = (n - lo - hi) as f64;
    Ok((diag + 2.0 * cross) / (kept * kept))
}

/// Reference double sum for [`trimmed_variance_sorted`], quadratic in `n`.
pub fn trimmed_variance_naive(x: &[f64], spec: &WinsorSpec) -> Result<f64> {
    let n = x.len();
    let (lo, hi) = spec.cut_counts(n);
    if lo + hi >= n {
        return Err(Error::EmptyWindow {
            n,
            p: spec.p(),
            q: spec.q(),
        });
    }
    let nf = n as f64;
    let last = (n - hi).min(n - 1);
    let mut s = 0.0;
    for i in lo + 1..=last {
        for j in lo + 1..=last {
            let (fi, fj) = (i as f64, j as f64);
            let k = fi.min(fj) / nf - fi * fj / (nf * nf);
            s += k * (x[i] - x[i - 1]) * (x[j] - x[j - 1]);
        }
    }
    let kept = (n - lo - hi) as f64;
    Ok(nf * nf / (kept * kept) * s)
}

// Empirical quantile at level n·level = m: the midpoint of x_(m), x_(m+1)
// when m is an integer, x_(⌈m⌉) otherwise (1-based order statistics).
fn empirical_quantile(x: &[f64], level: f64) -> f64 {
    let n = x.len();
    let m = n as f64 * level;
    let r = m.round();
    if (m - r).abs() < 1e-9 {
        let r = r as usize;
        if r == 0 {
            return x[0];
        }
        if r >= n {
            return x[n - 1];
        }
        0.5 * (x[r - 1] + x[r])
    } else {
        x[(m.ceil() as usize).clamp(1, n) - 1]
    }
}

/// Plug-in estimate of the closed winsorized variance formula.
///
/// `Var(X_W)` and `μ_W` come from the winsorized sample, `H(p)` and
/// `H(1-q)` from [`empirical_quantile`], and the slopes in `A = p²H'(p)`
/// and `B = q²H'(1-q)` from order-statistic spacings. With
/// [`SpacingWindow::Single`] the spacing is taken inward from the cut point,
/// `H'(p) ≈ n (x_(j+1) - x_(j))` with `j = [np]+1`; with
/// [`SpacingWindow::SqrtN`] it spans `m = ⌊√n⌋` order statistics centred on
/// the cut point, `n (x_(j+m-m/2) - x_(j-m/2)) / m`, shifted inside the
/// sample near its ends.
pub fn winsorized_variance_sorted(
    x: &[f64],
    spec: &WinsorSpec,
    opts: &NonparametricOptions,
) -> Result<f64> {
    let n = x.len();
    let (lo, hi) = spec.cut_counts(n);
    if lo + hi >= n {
        return Err(Error::EmptyWindow {
            n,
            p: spec.p(),
            q: spec.q(),
        });
    }
    let nf = n as f64;
    let (p, q) = (spec.p(), spec.q());
    let mean = winsor_sum(x, lo, hi, |v| v) / nf;
    let var = winsor_sum(x, lo, hi, |v| (v - mean) * (v - mean)) / nf;

    let m = match opts.spacing {
        SpacingWindow::Single => 1,
        SpacingWindow::SqrtN => ((nf.sqrt()).floor() as usize).max(1),
    };
    if m >= n {
        return Err(Error::InsufficientData(format!(
            "slope spacing over {m} order statistics needs more than {n} losses"
        )));
    }
    let span = |from: usize, to: usize| nf * (x[to] - x[from]) / (to - from) as f64;
    // Centred window of m spacings around index c, kept inside [0, n-1].
    let centred = |c: usize| {
        let from = c.saturating_sub(m / 2).min(n - 1 - m);
        span(from, from + m)
    };
    let (a, hp) = if p > 0.0 {
        let slope = match opts.spacing {
            SpacingWindow::Single => span(lo.min(n - 2), lo.min(n - 2) + 1),
            SpacingWindow::SqrtN => centred(lo),
        };
        (p * p * slope, empirical_quantile(x, p))
    } else {
        (0.0, 0.0)
    };
    let (b, hq) = if q > 0.0 {
        let k = n - hi - 1;
        let slope = match opts.spacing {
            SpacingWindow::Single => span(k.max(1) - 1, k.max(1)),
            SpacingWindow::SqrtN => centred(k),
        };
        (q * q * slope, empirical_quantile(x, 1.0 - q))
    } else {
        (0.0, 0.0)
    };
    let mut v = var + 2.0 * mean * (a - b) - (a - b) * (a - b);
    if p > 0.0 {
        v += a * a / p - 2.0 * a * hp;
    }
    if q > 0.0 {
        v += b * b / q + 2.0 * b * hq;
    }
    Ok(v.max(0.0))
}

fn winsor_sum(x: &[f64], lo: usize, hi: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = x.len();
    let kept = &x[lo..n - hi];
    lo as f64 * f(kept[0]) + kept.iter().map(|&v| f(v)).sum::<f64>() + hi as f64 * f(kept[kept.len() - 1])
}

/// Robust summary of one group, the input to portfolio pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub id: String,
    pub n: usize,
    pub n_eff: usize,
    pub mu_hat: f64,
    pub v_hat: f64,
}

pub fn group_stats(
    group: &GroupSample,
    spec: &WinsorSpec,
    method: RobustMethod,
    opts: &NonparametricOptions,
) -> Result<GroupStats> {
    Ok(GroupStats {
        id: group.id.clone(),
        n: group.n(),
        n_eff: group.n_eff(spec, method),
        mu_hat: group_robust_mean(group, spec, method)?,
        v_hat: group_process_variance_with(group, spec, method, opts)?,
    })
}

/// Per-group output of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEstimate {
    pub id: String,
    pub n: usize,
    pub n_eff: usize,
    pub mu_hat: f64,
    pub v_hat: f64,
    pub z: f64,
    pub premium: f64,
}

/// Portfolio structural estimates and per-group premiums.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioEstimates {
    pub spec: WinsorSpec,
    pub method: RobustMethod,
    pub mu_hat: f64,
    pub v_hat: f64,
    /// `â` before clamping; may be negative.
    pub a_hat_raw: f64,
    /// `max(â, 0)`.
    pub a_hat: f64,
    pub a_clamped: bool,
    pub groups: Vec<GroupEstimate>,
}

impl PortfolioEstimates {
    /// `v̂ / â`, or `None` when `â` was clamped.
    pub fn k_hat(&self) -> Option<f64> {
        (!self.a_clamped).then(|| self.v_hat / self.a_hat)
    }
}

/// Pools group summaries:
///
/// * `μ̂ = Σ n_i' μ̂_i / Σ n_i'`
/// * `v̂ = Σ n_i' v̂_i / Σ (n_i' - 1)`
/// * `â = [Σ n_i' (μ̂_i - μ̂)² - (r-1) v̂] / (N - Σ n_i'² / N)`, `N = Σ n_i'`
///
/// When `â ≤ 0` it is clamped to zero and every group receives the
/// collective premium. Otherwise `Z_i = n_i / (n_i + v̂/â)` with the raw
/// count `n_i`.
pub fn aggregate(stats: &[GroupStats], spec: &WinsorSpec, method: RobustMethod) -> Result<PortfolioEstimates> {
    let r = stats.len();
    if r < 2 {
        return Err(Error::InsufficientData(format!(
            "at least two groups are needed, got {r}"
        )));
    }
    let total: f64 = stats.iter().map(|g| g.n_eff as f64).sum();
    let dof: f64 = stats.iter().map(|g| g.n_eff as f64 - 1.0).sum();
    if !(dof > 0.0) {
        return Err(Error::InsufficientData(
            "retained counts leave no degrees of freedom".into(),
        ));
    }
    let mu_hat = stats.iter().map(|g| g.n_eff as f64 * g.mu_hat).sum::<f64>() / total;
    let v_hat = stats.iter().map(|g| g.n_eff as f64 * g.v_hat).sum::<f64>() / dof;
    let denom = total - stats.iter().map(|g| (g.n_eff as f64).powi(2)).sum::<f64>() / total;
    if !(denom > 0.0) {
        return Err(Error::InsufficientData(
            "all retained data sit in one group".into(),
        ));
    }
    let between = stats
        .iter()
        .map(|g| g.n_eff as f64 * (g.mu_hat - mu_hat).powi(2))
        .sum::<f64>();
    let a_hat_raw = (between - (r as f64 - 1.0) * v_hat) / denom;
    let a_clamped = !(a_hat_raw > 0.0);
    let a_hat = if a_clamped { 0.0 } else { a_hat_raw };
    let groups = stats
        .iter()
        .map(|g| {
            let z = if a_clamped {
                0.0
            } else {
                let n = g.n as f64;
                n / (n + v_hat / a_hat)
            };
            GroupEstimate {
                id: g.id.clone(),
                n: g.n,
                n_eff: g.n_eff,
                mu_hat: g.mu_hat,
                v_hat: g.v_hat,
                z,
                premium: z * g.mu_hat + (1.0 - z) * mu_hat,
            }
        })
        .collect();
    Ok(PortfolioEstimates {
        spec: *spec,
        method,
        mu_hat,
        v_hat,
        a_hat_raw,
        a_hat,
        a_clamped,
        groups,
    })
}

/// Portfolio estimates with default options.
pub fn portfolio_structurals(
    groups: &[GroupSample],
    spec: &WinsorSpec,
    method: RobustMethod,
) -> Result<PortfolioEstimates> {
    portfolio_structurals_with(groups, spec, method, &NonparametricOptions::default())
}

pub fn portfolio_structurals_with(
    groups: &[GroupSample],
    spec: &WinsorSpec,
    method: RobustMethod,
    opts: &NonparametricOptions,
) -> Result<PortfolioEstimates> {
    let stats = groups
        .iter()
        .map(|g| group_stats(g, spec, method, opts))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&stats, spec, method)
}

/// Premium per group and the portfolio total `Σ n_i P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumTable {
    pub premiums: Vec<(String, f64)>,
    pub total: f64,
}

pub fn group_premiums(est: &PortfolioEstimates) -> PremiumTable {
    let premiums: Vec<(String, f64)> = est.groups.iter().map(|g| (g.id.clone(), g.premium)).collect();
    let total = est.groups.iter().map(|g| g.n as f64 * g.premium).sum();
    PremiumTable { premiums, total }
}
