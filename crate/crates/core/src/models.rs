//! Conditional loss models and risk-parameter priors.
//!
//! Every conditional model is described by its quantile function `H = F⁻¹`
//! and the derivative `H'`. Both are evaluated at a [`UnitPoint`] so that
//! levels close to one keep their complement exactly.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::Distribution;

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::quadrature::UnitPoint;

/// Family tag of a [`ConditionalModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Exponential,
    Pareto,
    Lognormal,
    LogLogistic,
    Normal,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Exponential => "exponential",
            Family::Pareto => "pareto",
            Family::Lognormal => "lognormal",
            Family::LogLogistic => "loglogistic",
            Family::Normal => "normal",
        };
        f.write_str(s)
    }
}

/// Loss distribution given the risk parameter.
///
/// * `Exponential`: `F(x) = 1 - exp(-x/θ)`.
/// * `Pareto` (Lomax form): `F(x) = 1 - (θ/(x+θ))^t`.
/// * `Lognormal`: `log X ~ N(θ, σ²)`.
/// * `LogLogistic`: `F(x) = 1/(1 + exp(-(log x - θ)/σ))`.
/// * `Normal`: mean `mu`, standard deviation `sd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalModel {
    Exponential { theta: f64 },
    Pareto { t: f64, theta: f64 },
    Lognormal { theta: f64, sigma: f64 },
    LogLogistic { theta: f64, sigma: f64 },
    Normal { mu: f64, sd: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

impl ConditionalModel {
    pub fn exponential(theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        Ok(ConditionalModel::Exponential { theta })
    }

    /// Pareto with shape `t > 2`, so that the variance exists.
    pub fn pareto(t: f64, theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        if !(t.is_finite() && t > 2.0) {
            return Err(invalid(format!("pareto shape t must exceed 2, got {t}")));
        }
        Ok(ConditionalModel::Pareto { t, theta })
    }

    pub fn lognormal(theta: f64, sigma: f64) -> Result<Self> {
        finite("theta", theta)?;
        positive("sigma", sigma)?;
        Ok(ConditionalModel::Lognormal { theta, sigma })
    }

    /// Log-logistic with `0 < σ < 1`. The variance additionally needs `σ < 1/2`.
    pub fn loglogistic(theta: f64, sigma: f64) -> Result<Self> {
        finite("theta", theta)?;
        positive("sigma", sigma)?;
        if sigma >= 1.0 {
            return Err(invalid(format!(
                "loglogistic sigma must be below 1, got {sigma}"
            )));
        }
        Ok(ConditionalModel::LogLogistic { theta, sigma })
    }

    pub fn normal(mu: f64, sd: f64) -> Result<Self> {
        finite("mu", mu)?;
        positive("sd", sd)?;
        Ok(ConditionalModel::Normal { mu, sd })
    }

    pub fn family(&self) -> Family {
        match self {
            ConditionalModel::Exponential { .. } => Family::Exponential,
            ConditionalModel::Pareto { .. } => Family::Pareto,
            ConditionalModel::Lognormal { .. } => Family::Lognormal,
            ConditionalModel::LogLogistic { .. } => Family::LogLogistic,
            ConditionalModel::Normal { .. } => Family::Normal,
        }
    }

    /// Shape parameter that survives scaling: `t` for Pareto, `σ` for the
    /// log families, none otherwise.
    pub fn shape(&self) -> Option<f64> {
        match *self {
            ConditionalModel::Pareto { t, .. } => Some(t),
            ConditionalModel::Lognormal { sigma, .. } => Some(sigma),
            ConditionalModel::LogLogistic { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    /// The distribution of `c·X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale factor", c)?;
        Ok(match *self {
            ConditionalModel::Exponential { theta } => ConditionalModel::Exponential { theta: c * theta },
            ConditionalModel::Pareto { t, theta } => ConditionalModel::Pareto { t, theta: c * theta },
            ConditionalModel::Lognormal { theta, sigma } => ConditionalModel::Lognormal {
                theta: theta + c.ln(),
                sigma,
            },
            ConditionalModel::LogLogistic { theta, sigma } => ConditionalModel::LogLogistic {
                theta: theta + c.ln(),
                sigma,
            },
            ConditionalModel::Normal { mu, sd } => ConditionalModel::Normal {
                mu: c * mu,
                sd: c * sd,
            },
        })
    }

    /// Whether `E[X^k]` is finite.
    pub fn moment_exists(&self, k: u32) -> bool {
        match *self {
            ConditionalModel::Pareto { t, .. } => t > k as f64,
            ConditionalModel::LogLogistic { sigma, .. } => (k as f64) * sigma < 1.0,
            _ => true,
        }
    }

    /// Distribution function. Values outside the support clamp to 0 or 1.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ConditionalModel::Exponential { theta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / theta).exp_m1()
                }
            }
            ConditionalModel::Pareto { t, theta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-t * (x / theta).ln_1p()).exp_m1()
                }
            }
            ConditionalModel::Lognormal { theta, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal::cdf((x.ln() - theta) / sigma)
                }
            }
            ConditionalModel::LogLogistic { theta, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 + (-(x.ln() - theta) / sigma).exp())
                }
            }
            ConditionalModel::Normal { mu, sd } => normal::cdf((x - mu) / sd),
        }
    }

    /// Quantile `H(w)` for `w` in the open unit interval.
    pub fn quantile(&self, w: f64) -> Result<f64> {
        check_level(w)?;
        Ok(self.quantile_at(UnitPoint::new(w)))
    }

    /// Quantile derivative `H'(w)` for `w` in the open unit interval.
    pub fn quantile_deriv(&self, w: f64) -> Result<f64> {
        check_level(w)?;
        Ok(self.quantile_deriv_at(UnitPoint::new(w)))
    }

    /// `H` at a level carried with its complement. Endpoints give the support
    /// bounds (possibly infinite).
    pub fn quantile_at(&self, u: UnitPoint) -> f64 {
        match *self {
            ConditionalModel::Exponential { theta } => -theta * log_complement(u),
            ConditionalModel::Pareto { t, theta } => theta * (-log_complement(u) / t).exp_m1(),
            ConditionalModel::Lognormal { theta, sigma } => (theta + sigma * probit(u)).exp(),
            ConditionalModel::LogLogistic { theta, sigma } => {
                if u.w <= 0.0 {
                    0.0
                } else if u.wc <= 0.0 {
                    f64::INFINITY
                } else {
                    (theta + sigma * (u.w.ln() - u.wc.ln())).exp()
                }
            }
            ConditionalModel::Normal { mu, sd } => mu + sd * probit(u),
        }
    }

    /// `H'` at a level carried with its complement.
    pub fn quantile_deriv_at(&self, u: UnitPoint) -> f64 {
        match *self {
            ConditionalModel::Exponential { theta } => theta / u.wc,
            ConditionalModel::Pareto { t, theta } => {
                theta * (-(t + 1.0) / t * u.wc.ln()).exp() / t
            }
            ConditionalModel::Lognormal { theta, sigma } => {
                let z = probit(u);
                sigma * (theta + sigma * z + 0.5 * z * z).exp() * SQRT_2PI
            }
            ConditionalModel::LogLogistic { theta, sigma } => {
                sigma * (theta + (sigma - 1.0) * u.w.ln() - (sigma + 1.0) * u.wc.ln()).exp()
            }
            ConditionalModel::Normal { sd, .. } => {
                let z = probit(u);
                sd * (0.5 * z * z).exp() * SQRT_2PI
            }
        }
    }

    /// Mean of the full distribution, if finite.
    pub fn mean(&self) -> Result<f64> {
        if !self.moment_exists(1) {
            return Err(Error::MomentNotFinite {
                order: 1,
                model: self.to_string(),
            });
        }
        Ok(match *self {
            ConditionalModel::Exponential { theta } => theta,
            ConditionalModel::Pareto { t, theta } => theta / (t - 1.0),
            ConditionalModel::Lognormal { theta, sigma } => (theta + 0.5 * sigma * sigma).exp(),
            ConditionalModel::LogLogistic { theta, sigma } => {
                let x = std::f64::consts::PI * sigma;
                theta.exp() * x / x.sin()
            }
            ConditionalModel::Normal { mu, .. } => mu,
        })
    }

    /// Draws `count` losses by inverse transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    /// One inverse-transform draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w: f64 = rng.sample(Open01);
        self.quantile_at(UnitPoint::new(w))
    }
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

fn check_level(w: f64) -> Result<()> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "quantile level",
            value: w,
        })
    }
}

// log(1 - w), accurate on both halves of the interval.
pub(crate) fn log_complement(u: UnitPoint) -> f64 {
    if u.w < 0.5 {
        (-u.w).ln_1p()
    } else {
        u.wc.ln()
    }
}

// Φ⁻¹(w), taking the upper tail from the complement.
pub(crate) fn probit(u: UnitPoint) -> f64 {
    if u.w <= 0.5 {
        normal::quantile(u.w)
    } else {
        normal::quantile_upper(u.wc)
    }
}

impl fmt::Display for ConditionalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConditionalModel::Exponential { theta } => write!(f, "exp:theta={theta}"),
            ConditionalModel::Pareto { t, theta } => write!(f, "pareto:t={t},theta={theta}"),
            ConditionalModel::Lognormal { theta, sigma } => {
                write!(f, "lognormal:theta={theta},sigma={sigma}")
            }
            ConditionalModel::LogLogistic { theta, sigma } => {
                write!(f, "loglogistic:theta={theta},sigma={sigma}")
            }
            ConditionalModel::Normal { mu, sd } => write!(f, "normal:mu={mu},sd={sd}"),
        }
    }
}

/// Parses `exp:theta=2`, `pareto:t=3,theta=1`, `lognormal:theta=4,sigma=0.45`,
/// `loglogistic:theta=4,sigma=0.45` or `normal:mu=0,sd=1`.
impl FromStr for ConditionalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("model `{s}` is missing `family:` prefix")))?;
        let mut params = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got `{item}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("`{v}` is not a number")))?;
            params.push((k.trim().to_string(), v));
        }
        let take = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .ok_or_else(|| invalid(format!("model `{s}` needs `{key}`")))
        };
        let allow = |keys: &[&str]| -> Result<()> {
            for (k, _) in &params {
                if !keys.contains(&k.as_str()) {
                    return Err(invalid(format!("unknown parameter `{k}` in `{s}`")));
                }
            }
            Ok(())
        };
        match name.trim() {
            "exp" | "exponential" => {
                allow(&["theta"])?;
                ConditionalModel::exponential(take("theta")?)
            }
            "pareto" => {
                allow(&["t", "theta"])?;
                ConditionalModel::pareto(take("t")?, take("theta")?)
            }
            "lognormal" | "ln" => {
                allow(&["theta", "sigma"])?;
                ConditionalModel::lognormal(take("theta")?, take("sigma")?)
            }
            "loglogistic" | "ll" => {
                allow(&["theta", "sigma"])?;
                ConditionalModel::loglogistic(take("theta")?, take("sigma")?)
            }
            "normal" => {
                allow(&["mu", "sd"])?;
                ConditionalModel::normal(take("mu")?, take("sd")?)
            }
            other => Err(invalid(format!("unknown model family `{other}`"))),
        }
    }
}

/// Prior of the risk parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorModel {
    /// Shape `alpha`, rate `beta`; mean `alpha/beta`.
    Gamma { alpha: f64, beta: f64 },
    /// Mean `mean`, variance `var`.
    Normal { mean: f64, var: f64 },
}

impl PriorModel {
    pub fn gamma(alpha: f64, beta: f64) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("beta", beta)?;
        Ok(PriorModel::Gamma { alpha, beta })
    }

    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        finite("mean", mean)?;
        positive("variance", var)?;
        Ok(PriorModel::Normal { mean, var })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PriorModel::Gamma { alpha, beta } => alpha / beta,
            PriorModel::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PriorModel::Gamma { alpha, beta } => alpha / (beta * beta),
            PriorModel::Normal { var, .. } => var,
        }
    }

    /// Draws `count` risk parameters.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        match *self {
            PriorModel::Gamma { alpha, beta } => {
                let d = rand_distr::Gamma::new(alpha, 1.0 / beta).expect("validated gamma prior");
                d.sample_iter(rng).take(count).collect()
            }
            PriorModel::Normal { mean, var } => {
                let d = rand_distr::Normal::new(mean, var.sqrt()).expect("validated normal prior");
                d.sample_iter(rng).take(count).collect()
            }
        }
    }
}
