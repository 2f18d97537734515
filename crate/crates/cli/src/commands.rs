use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use robcred::asymptotics::{
    process_variance_trimmed, process_variance_winsorized_closed, process_variance_winsorized_oracle,
};
use robcred::credibility::credibility_factor;
use robcred::risk::subadditivity_counterexample;
use robcred::simulation::sig6;
use robcred::{
    check_coherence_axioms, emit_table, group_premiums, m_constants, portfolio_structurals, run_study,
    structural_params, ConditionalModel, ModelPair, PairKind, PortfolioEstimates, PriorModel,
    RatioReport, RobustMethod, TableFormat, WinsorSpec,
};

use crate::claims::{into_groups, read_records};
use crate::config::parse_study;
use crate::{CliError, CoherenceArgs, EmpiricalArgs, Scale, SimulateArgs, StructuralArgs, VarianceArgs};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn need(v: Option<f64>, flag: &str, pair: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| usage(format!("--{flag} is required for --pair {pair}")))
}

fn method(s: &str) -> Result<RobustMethod, CliError> {
    Ok(s.parse::<RobustMethod>()?)
}

pub fn structural(a: &StructuralArgs) -> Result<(), CliError> {
    let spec = WinsorSpec::new(a.p, a.q)?;
    let method = method(&a.method)?;
    let gamma = || -> Result<PriorModel, CliError> {
        Ok(PriorModel::gamma(need(a.alpha, "alpha", &a.pair)?, need(a.beta, "beta", &a.pair)?)?)
    };
    let normal = || -> Result<PriorModel, CliError> {
        Ok(PriorModel::normal(need(a.mu, "mu", &a.pair)?, need(a.v2, "v2", &a.pair)?)?)
    };
    let (kind, prior) = match a.pair.as_str() {
        "exp-gamma" => (PairKind::ExpGamma, gamma()?),
        "pareto-gamma" => (
            PairKind::ParetoGamma {
                t: need(a.t, "t", &a.pair)?,
            },
            gamma()?,
        ),
        "lognormal-normal" => (
            PairKind::LognormalNormal {
                sigma: need(a.sigma, "sigma", &a.pair)?,
            },
            normal()?,
        ),
        "loglogistic-normal" => (
            PairKind::LogLogisticNormal {
                sigma: need(a.sigma, "sigma", &a.pair)?,
            },
            normal()?,
        ),
        other => return Err(usage(format!("unknown pair `{other}`"))),
    };
    let pair = ModelPair::new(kind, prior)?;
    let m = m_constants(kind, &spec, method)?;
    let s = structural_params(&pair, &spec, method)?;
    let z = credibility_factor(&s, a.n);
    println!("pair      {kind}");
    println!("spec      {spec} method {method}");
    println!("m1        {}", m.m1);
    println!("m2        {}", m.m2);
    println!("m3        {}", m.m3);
    println!("mu        {}", s.mu);
    println!("v         {}", s.v);
    println!("a         {}", s.a);
    println!("k         {}", s.k);
    println!("{:<10}{z}", format!("Z(n={})", a.n));
    println!("premium   {z} * R + {} * {}", 1.0 - z, s.mu);
    Ok(())
}

#[derive(Serialize)]
struct LongRatioRow {
    epsilon: f64,
    q: f64,
    method: String,
    parameter: &'static str,
    mean: f64,
    se: f64,
    count: usize,
    excluded: usize,
}

fn long_rows(report: &RatioReport) -> Vec<LongRatioRow> {
    let mut rows = Vec::new();
    for c in &report.cells {
        for (name, st, excl) in [("mu", c.mu, 0), ("v", c.v, 0), ("a", c.a, 0), ("k", c.k, c.k_excluded)] {
            rows.push(LongRatioRow {
                epsilon: c.epsilon,
                q: c.q,
                method: c.method.to_string(),
                parameter: name,
                mean: st.mean,
                se: st.se,
                count: st.count,
                excluded: excl,
            });
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let mut cfg = parse_study(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", a.config.display())),
        other => other,
    })?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Scale::Paper = a.scale {
        cfg = cfg.paper_scale();
    }
    let report = run_study(&cfg)?;
    let text = emit_table(&report, TableFormat::Text);
    print!("{text}");
    let excluded: usize = report.cells.iter().map(|c| c.k_excluded).sum();
    if excluded > 0 {
        println!("k ratios exclude {excluded} cell repetitions with a_hat <= 0");
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let csv_path = dir.join("ratios.csv");
        fs::write(&csv_path, emit_table(&report, TableFormat::Csv)).map_err(|e| io_err(&csv_path, e))?;
        let txt = dir.join("ratios.txt");
        fs::write(&txt, &text).map_err(|e| io_err(&txt, e))?;
        write_csv(&dir.join("ratios_long.csv"), &long_rows(&report))?;
    }
    Ok(())
}

/// One output row: a group, or the portfolio summary (`row = portfolio`,
/// where `premium` holds the total and `a_hat` the unclamped estimate).
#[derive(Serialize)]
struct EmpiricalRow {
    q: f64,
    method: String,
    row: &'static str,
    group: String,
    n: usize,
    mu_hat: f64,
    v_hat: f64,
    z: Option<f64>,
    premium: f64,
    a_hat: Option<f64>,
    a_clamped: Option<bool>,
}

fn empirical_rows(q: f64, e: &PortfolioEstimates, out: &mut Vec<EmpiricalRow>) {
    let method = e.method.to_string();
    for g in &e.groups {
        out.push(EmpiricalRow {
            q,
            method: method.clone(),
            row: "group",
            group: g.id.clone(),
            n: g.n,
            mu_hat: g.mu_hat,
            v_hat: g.v_hat,
            z: Some(g.z),
            premium: g.premium,
            a_hat: None,
            a_clamped: None,
        });
    }
    out.push(EmpiricalRow {
        q,
        method,
        row: "portfolio",
        group: String::new(),
        n: e.groups.iter().map(|g| g.n).sum(),
        mu_hat: e.mu_hat,
        v_hat: e.v_hat,
        z: None,
        premium: group_premiums(e).total,
        a_hat: Some(e.a_hat_raw),
        a_clamped: Some(e.a_clamped),
    });
}

pub fn empirical(a: &EmpiricalArgs) -> Result<(), CliError> {
    let method = method(&a.method)?;
    let specs = a
        .q
        .iter()
        .map(|&q| WinsorSpec::new(a.p, q))
        .collect::<Result<Vec<_>, _>>()?;
    let groups = into_groups(read_records(&a.csv, &a.group_col, &a.loss_col)?)?;
    let ests = specs
        .iter()
        .map(|s| portfolio_structurals(&groups, s, method))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = String::new();
    let mut rows = Vec::new();
    for (s, e) in specs.iter().zip(&ests) {
        let _ = writeln!(out, "{s} method {method}");
        let _ = writeln!(out, "  {:<16} {:>8} {:>14} {:>10} {:>14}", "group", "n", "mu_hat", "Z", "premium");
        for g in &e.groups {
            let _ = writeln!(
                out,
                "  {:<16} {:>8} {:>14} {:>10} {:>14}",
                g.id,
                g.n,
                sig6(g.mu_hat),
                sig6(g.z),
                sig6(g.premium)
            );
        }
        let clamp = if e.a_clamped { " (clamped to 0)" } else { "" };
        let _ = writeln!(
            out,
            "  mu_hat {}  v_hat {}  a_hat {}{clamp}  total {}\n",
            sig6(e.mu_hat),
            sig6(e.v_hat),
            sig6(e.a_hat_raw),
            sig6(group_premiums(e).total)
        );
        empirical_rows(s.q(), e, &mut rows);
    }
    if ests.len() > 1 {
        let _ = write!(out, "premium by q ({method})\n  {:<16}", "group");
        for s in &specs {
            let _ = write!(out, " {:>12}", format!("q={}", s.q()));
        }
        out.push('\n');
        for (i, g) in groups.iter().enumerate() {
            let _ = write!(out, "  {:<16}", g.id());
            for e in &ests {
                let _ = write!(out, " {:>12}", sig6(e.groups[i].premium));
            }
            out.push('\n');
        }
        let _ = write!(out, "  {:<16}", "total");
        for e in &ests {
            let _ = write!(out, " {:>12}", sig6(group_premiums(e).total));
        }
        out.push('\n');
    }
    print!("{out}");
    if let Some(path) = &a.out {
        write_csv(path, &rows)?;
    }
    Ok(())
}

pub fn coherence(a: &CoherenceArgs) -> Result<(), CliError> {
    let spec = WinsorSpec::new(a.p, a.q)?;
    let r = check_coherence_axioms(&spec, a.trials, a.seed)?;
    let verdict = |b: bool| if b { "pass" } else { "FAIL" };
    println!("spec {spec}, {} trials, tolerance {:e}", a.trials, r.tolerance);
    for (name, c) in [
        ("monotonicity", r.monotonicity),
        ("homogeneity", r.homogeneity),
        ("translation", r.translation),
    ] {
        println!("  {name:<13} {}  worst {:e}", verdict(c.passed), c.worst);
    }
    match subadditivity_counterexample(&spec) {
        Ok((sum, parts)) => println!(
            "  subadditivity fails: rho(X+Y) = {sum}, rho(X) + rho(Y) = {parts}"
        ),
        Err(_) => println!("  subadditivity counterexample needs 0 < p and q > 0.5"),
    }
    if r.all_passed() {
        Ok(())
    } else {
        Err(CliError::Numeric("an axiom check failed".into()))
    }
}

pub fn variance(a: &VarianceArgs) -> Result<(), CliError> {
    let model: ConditionalModel = a.model.parse()?;
    let spec = WinsorSpec::new(a.p, a.q)?;
    let t = process_variance_trimmed(&model, &spec)?;
    let w = process_variance_winsorized_closed(&model, &spec)?;
    let o = process_variance_winsorized_oracle(&model, &spec)?;
    println!("model {model}, spec {spec}");
    println!("  v_T                  {}  (quadrature error {:e})", t.value, t.error);
    println!("  v_W closed form      {}", w.value);
    println!("  v_W influence        {}  (quadrature error {:e})", o.value, o.error);
    println!("  relative difference  {:e}", (w.value - o.value).abs() / w.value.abs());
    Ok(())
}
