//! Numerical integration over sub-intervals of the unit interval.
//!
//! Quantile-based integrands are evaluated at a level `w` together with its
//! complement `1 - w`. Carrying the complement separately lets integrands
//! with an endpoint singularity at `w = 1` (heavy-tailed quantiles, `H'`
//! blowing up like `1/(1-w)`) be evaluated at nodes that are far closer to
//! the endpoint than `1 - f64::EPSILON`.
//!
//! Two rules are provided:
//!
//! * [`tanh_sinh`]: double-exponential quadrature with level-wise step
//!   halving. Converges exponentially for integrands that are analytic in
//!   the open interval, including integrable algebraic and logarithmic
//!   endpoint singularities.
//! * [`GaussLegendre`] rules and [`tensor_gauss_legendre`], a tensor-product
//!   rule on a square with node doubling, for smooth two-dimensional work.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// A level in `[0, 1]` carried together with its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitPoint {
    pub w: f64,
    pub wc: f64,
}

impl UnitPoint {
    pub const ZERO: UnitPoint = UnitPoint { w: 0.0, wc: 1.0 };
    pub const ONE: UnitPoint = UnitPoint { w: 1.0, wc: 0.0 };

    /// The level `w`; the complement is computed as `1 - w`.
    pub fn new(w: f64) -> Self {
        UnitPoint { w, wc: 1.0 - w }
    }

    /// The level `1 - wc`, keeping `wc` exact.
    pub fn from_complement(wc: f64) -> Self {
        UnitPoint { w: 1.0 - wc, wc }
    }
}

/// A quadrature value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TanhSinhOptions {
    /// Relative tolerance on the change between successive levels.
    pub rel_tol: f64,
    /// Absolute tolerance floor.
    pub abs_tol: f64,
    /// Deepest level; level `k` uses step `2^-k`.
    pub max_level: u32,
    /// Nodes are not placed closer than this to either endpoint.
    pub min_distance: f64,
}

impl Default for TanhSinhOptions {
    fn default() -> Self {
        TanhSinhOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_level: 10,
            min_distance: 1e-150,
        }
    }
}

impl TanhSinhOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        TanhSinhOptions {
            rel_tol,
            ..Self::default()
        }
    }
}

/// Length of `[lo, hi]`, taken from whichever side keeps more precision.
pub fn width(lo: UnitPoint, hi: UnitPoint) -> f64 {
    if lo.w <= 0.5 {
        hi.w - lo.w
    } else {
        lo.wc - hi.wc
    }
}

/// Integrates `f(w, 1 - w)` over `[lo, hi]` with default options.
pub fn tanh_sinh<F>(f: F, lo: UnitPoint, hi: UnitPoint) -> Result<Estimate>
where
    F: FnMut(UnitPoint) -> f64,
{
    tanh_sinh_with(f, lo, hi, &TanhSinhOptions::default())
}

/// Integrates `f(w, 1 - w)` over `[lo, hi]`.
///
/// Returns [`Error::NonConvergence`] if the level-to-level change does not
/// drop below the tolerance by `max_level`, or if the integrand produces a
/// non-finite value.
pub fn tanh_sinh_with<F>(
    mut f: F,
    lo: UnitPoint,
    hi: UnitPoint,
    opts: &TanhSinhOptions,
) -> Result<Estimate>
where
    F: FnMut(UnitPoint) -> f64,
{
    let len = width(lo, hi);
    if len <= 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }

    // Contribution of the node pair at +t and -t (or the single centre node).
    // Also tracks the weighted L1 mass, which bounds the attainable accuracy
    // when the integral cancels to near zero.
    let mut pair = |t: f64| -> Option<(f64, f64)> {
        let s = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * s.abs()).exp();
        let near = len * e / (1.0 + e);
        // Short intervals get a cutoff relative to their length.
        if near < opts.min_distance.min(len * 1e-30) || near == 0.0 {
            return None;
        }
        let far = len - near;
        let weight = 0.5 * len * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let point = |dl: f64, dr: f64| UnitPoint {
            w: if dl <= dr { lo.w + dl } else { hi.w - dr },
            wc: if dr <= dl { hi.wc + dr } else { lo.wc - dl },
        };
        if t == 0.0 {
            let c = f(point(0.5 * len, 0.5 * len));
            return Some((weight * c, weight * c.abs()));
        }
        let right = f(point(far, near));
        let left = f(point(near, far));
        Some((weight * (right + left), weight * (right.abs() + left.abs())))
    };

    let (mut sum, mut mass) = pair(0.0).unwrap_or((0.0, 0.0));
    let mut k = 1.0;
    while let Some((v, a)) = pair(k) {
        sum += v;
        mass += a;
        k += 1.0;
    }
    let mut h = 1.0;
    let mut prev = sum * h;
    if !prev.is_finite() {
        return Err(Error::NonConvergence {
            what: "tanh-sinh quadrature (non-finite integrand)",
            estimate: prev,
            error_bound: f64::INFINITY,
        });
    }

    for level in 1..=opts.max_level {
        h *= 0.5;
        let mut j = 1.0;
        while let Some((v, a)) = pair(j * h) {
            sum += v;
            mass += a;
            j += 2.0;
        }
        let cur = sum * h;
        if !cur.is_finite() {
            return Err(Error::NonConvergence {
                what: "tanh-sinh quadrature (non-finite integrand)",
                estimate: cur,
                error_bound: f64::INFINITY,
            });
        }
        let diff = (cur - prev).abs();
        let floor = opts.abs_tol.max(64.0 * f64::EPSILON * mass * h);
        if level >= 3 && (diff <= opts.rel_tol * cur.abs() || diff <= floor) {
            return Ok(Estimate {
                value: cur,
                error: diff,
            });
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        what: "tanh-sinh quadrature",
        estimate: prev,
        error_bound: f64::INFINITY,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product Gauss–Legendre on `[a, b]²`, doubling the nodes per axis
/// from `start` until the relative change falls below `rel_tol` or the
/// per-axis budget is exhausted.
pub fn tensor_gauss_legendre<F>(
    mut f: F,
    a: f64,
    b: f64,
    start: usize,
    budget: usize,
    rel_tol: f64,
) -> Result<Estimate>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut n = start.max(1);
    let mut prev = tensor_once(&mut f, a, b, n);
    while n * 2 <= budget {
        n *= 2;
        let cur = tensor_once(&mut f, a, b, n);
        let diff = (cur - prev).abs();
        if diff <= rel_tol * cur.abs() {
            return Ok(Estimate {
                value: cur,
                error: diff,
            });
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        what: "tensor Gauss-Legendre quadrature",
        estimate: prev,
        error_bound: f64::INFINITY,
    })
}

fn tensor_once<F: FnMut(f64, f64) -> f64>(f: &mut F, a: f64, b: f64, n: usize) -> f64 {
    let rule = GaussLegendre::new(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut total = 0.0;
    for (&xi, &wi) in rule.nodes.iter().zip(&rule.weights) {
        let u = mid + half * xi;
        let mut row = 0.0;
        for (&xj, &wj) in rule.nodes.iter().zip(&rule.weights) {
            row += wj * f(u, mid + half * xj);
        }
        total += wi * row;
    }
    total * half * half
}
