//! Robust Bühlmann credibility built on trimmed and winsorized means.
//!
//! The population side covers quantile-based conditional models, robust
//! moments and their structural parameters under a prior, plus asymptotic
//! variances of the sample estimators. The data side estimates the same
//! quantities nonparametrically from grouped losses and prices each group.

pub mod asymptotics;
pub mod credibility;
pub mod error;
pub mod models;
pub mod nonparametric;
pub mod normal;
pub mod quadrature;
pub mod risk;
pub mod seed;
pub mod simulation;

pub use asymptotics::{
    asymptotic_normality_test, process_variance, NormalityReport, VarianceFormula, VarianceResult,
};
pub use credibility::{
    credibility_factor, credibility_premium, m_constants, nonrobust_limit, structural_params,
    MConstants, ModelPair, PairKind, StructuralParams,
};
pub use error::{Error, Result};
pub use models::{ConditionalModel, Family, PriorModel};
pub use nonparametric::{
    aggregate, group_premiums, group_stats, portfolio_structurals, GroupEstimate, GroupSample,
    GroupStats, NonparametricOptions, PortfolioEstimates, PremiumTable, SpacingWindow,
};
pub use risk::{
    check_coherence_axioms, pop_robust_moment, sample_robust_mean, CoherenceReport, RobustMethod,
    WinsorSpec,
};
pub use simulation::{
    emit_table, run_study, Benchmark, RatioReport, StudyConfig, TableFormat,
};
