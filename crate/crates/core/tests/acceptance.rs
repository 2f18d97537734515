//! Acceptance suite. Each test prints a single `PASS` or `FAIL` line to the
//! real stdout (bypassing capture) and then asserts the same outcome.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robcred::asymptotics::{
    process_variance_trimmed, process_variance_winsorized_closed, process_variance_winsorized_oracle,
};
use robcred::credibility::{credibility_factor, structural_params};
use robcred::risk::{pop_robust_moment_quadrature, subadditivity_counterexample};
use robcred::*;

fn line(name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance [{tag}] {name}: {detail}");
    let _ = out.flush();
    assert!(pass, "{name}: {detail}");
}

fn spec(p: f64, q: f64) -> WinsorSpec {
    WinsorSpec::new(p, q).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

const GRID: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.2];

fn kinds() -> [PairKind; 4] {
    [
        PairKind::ExpGamma,
        PairKind::ParetoGamma { t: 3.0 },
        PairKind::LognormalNormal { sigma: 0.45 },
        PairKind::LogLogisticNormal { sigma: 0.45 },
    ]
}

#[test]
fn closed_forms_match_quadrature() {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut note = |err: f64, what: String| {
        if !(err <= worst.0) {
            worst = (err, what);
        }
    };
    for kind in kinds() {
        let unit = kind.unit_model().unwrap();
        for p in GRID {
            for q in GRID {
                let s = spec(p, q);
                for method in RobustMethod::ALL {
                    let m = m_constants(kind, &s, method).unwrap();
                    for (k, closed) in [(1, m.m1), (2, m.m2)] {
                        let quad = pop_robust_moment_quadrature(&unit, &s, k, method);
                        let err = quad.map(|v| rel(closed, v)).unwrap_or(f64::INFINITY);
                        note(err, format!("{kind} {s} {method} m{k}"));
                    }
                }
                // Trimmed: double integral against Var(W)/(1-p-q)².
                let w1 = pop_robust_moment(&unit, &s, 1, RobustMethod::Winsorized).unwrap();
                let w2 = pop_robust_moment(&unit, &s, 2, RobustMethod::Winsorized).unwrap();
                let clamp = (w2 - w1 * w1) / (s.width() * s.width());
                let vt = process_variance_trimmed(&unit, &s).map(|r| r.value);
                note(
                    vt.map(|v| rel(v, clamp)).unwrap_or(f64::INFINITY),
                    format!("{kind} {s} T m3"),
                );
                // Winsorized: closed form against the influence-function integral.
                let closed = process_variance_winsorized_closed(&unit, &s).unwrap().value;
                let oracle = process_variance_winsorized_oracle(&unit, &s).map(|r| r.value);
                note(
                    oracle.map(|v| rel(closed, v)).unwrap_or(f64::INFINITY),
                    format!("{kind} {s} W m3"),
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "closed-form m1/m2/m3 vs quadrature, 4 families x 25 (p, q)",
        worst.0 <= 1e-6 && secs < 60.0,
        format!("worst rel err {:.2e} at {}; {secs:.1}s", worst.0, worst.1),
    );
}

#[test]
fn winsorized_variance_forms_agree() {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    for kind in kinds() {
        let unit = kind.unit_model().unwrap();
        for p in GRID {
            for q in GRID {
                let s = spec(p, q);
                let closed = process_variance_winsorized_closed(&unit, &s).unwrap().value;
                let err = process_variance_winsorized_oracle(&unit, &s)
                    .map(|r| rel(r.value, closed))
                    .unwrap_or(f64::INFINITY);
                if !(err <= worst.0) {
                    worst = (err, format!("{kind} {s}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "winsorized variance, influence integral vs closed form",
        worst.0 <= 1e-5 && secs < 120.0,
        format!("worst rel err {:.2e} at {}; {secs:.1}s", worst.0, worst.1),
    );
}

#[test]
fn nonrobust_limits_at_tiny_proportions() {
    let s = spec(1e-8, 1e-8);
    let (e1, e2) = ((0.45f64 * 0.45 / 2.0).exp(), (2.0 * 0.45f64 * 0.45).exp());
    let cases = [
        (PairKind::ExpGamma, [1.0, 2.0, 1.0]),
        (PairKind::ParetoGamma { t: 3.0 }, [0.5, 1.0, 0.75]),
        (PairKind::LognormalNormal { sigma: 0.45 }, [e1, e2, e2 - e1 * e1]),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (kind, want) in cases {
        let mut worst = 0.0f64;
        for method in RobustMethod::ALL {
            let m = m_constants(kind, &s, method).unwrap();
            for (got, w) in [m.m1, m.m2, m.m3].into_iter().zip(want) {
                worst = worst.max((got - w).abs());
            }
        }
        pass &= worst <= 1e-4;
        detail.push(format!("{kind} max |dev| {worst:.2e}"));
    }
    line("non-robust limits at p = q = 1e-8", pass, detail.join("; "))
}

#[test]
fn asymptotic_normality() {
    let start = Instant::now();
    let models = [
        ConditionalModel::exponential(1.0).unwrap(),
        ConditionalModel::lognormal(0.0, 0.45).unwrap(),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, m) in models.iter().enumerate() {
        for q in [0.05, 0.1] {
            for method in RobustMethod::ALL {
                let r = asymptotic_normality_test(m, &spec(0.0, q), method, 10_000, 1000, 2024 + i as u64)
                    .unwrap();
                let ok = (0.90..=1.10).contains(&r.variance) && r.mean.abs() <= 0.1;
                pass &= ok;
                detail.push(format!(
                    "{m} q={q} {method}: mean {:+.3} var {:.3}",
                    r.mean, r.variance
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    line(
        "standardized robust means, n = 1e4, 1000 reps",
        pass,
        format!("{}; {secs:.1}s", detail.join("; ")),
    );
}

#[test]
fn exp_pareto_contamination_study() {
    let start = Instant::now();
    let cfg = StudyConfig::exp_pareto_preset();
    let r = run_study(&cfg).unwrap();
    let t = RobustMethod::Trimmed;
    let base = r.cell(0.0, 0.0, t).unwrap();
    let got = [base.mu.mean, base.v.mean, base.a.mean, base.k.mean];
    let want = [1.01, 1.01, 1.03, 0.98];
    let a_ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.10);

    let kw = r.cell(0.10, 0.05, RobustMethod::Winsorized).unwrap().k.mean;
    let b_ok = (kw - 1.10).abs() <= 0.15;

    let mut c_ok = true;
    for &eps in &cfg.epsilon_grid {
        let mus: Vec<f64> = [0.01, 0.05, 0.10, 0.20]
            .iter()
            .map(|&q| r.cell(eps, q, t).unwrap().mu.mean)
            .collect();
        c_ok &= mus.windows(2).all(|w| w[1] < w[0]);
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "exp/Pareto study at desk scale",
        a_ok && b_ok && c_ok && secs < 600.0,
        format!(
            "eps=0 q=0 ratios (mu, v, a, k) = ({:.3}, {:.3}, {:.3}, {:.3}) [{}]; \
             eps=0.1 q=0.05 W k ratio {kw:.3} [{}]; trimmed mu decreasing in q [{}]; {secs:.1}s",
            got[0],
            got[1],
            got[2],
            got[3],
            ok(a_ok),
            ok(b_ok),
            ok(c_ok)
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "off"
    }
}

#[test]
fn lognormal_loglogistic_contamination_study() {
    let cfg = StudyConfig::lognormal_loglogistic_preset();
    let r = run_study(&cfg).unwrap();
    let raw = r.cell(0.06, 0.0, RobustMethod::Trimmed).unwrap();
    let kt = r.cell(0.06, 0.05, RobustMethod::Trimmed).unwrap().k.mean;
    let kw = r.cell(0.06, 0.05, RobustMethod::Winsorized).unwrap().k.mean;
    let raw_ok = raw.k.mean > 5.0;
    let robust_ok = (0.9..=1.5).contains(&kt) && (0.9..=1.5).contains(&kw);
    line(
        "lognormal/log-logistic study at desk scale",
        raw_ok && robust_ok,
        format!(
            "eps=0.06 q=0 k ratio {:.3} (se {:.3}, {} excluded) [{}]; q=0.05 k ratio T {kt:.3}, W {kw:.3} [{}]",
            raw.k.mean,
            raw.k.se,
            raw.k_excluded,
            ok(raw_ok),
            ok(robust_ok)
        ),
    );
}

#[test]
fn coherence_axioms_and_subadditivity() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, (p, q)) in [(0.05, 0.05), (0.1, 0.2), (0.25, 0.1)].into_iter().enumerate() {
        let rep = check_coherence_axioms(&spec(p, q), 100, 77 + i as u64).unwrap();
        pass &= rep.all_passed() && rep.tolerance <= 1e-10;
        detail.push(format!(
            "({p}, {q}) worst mono {:.1e} homo {:.1e} trans {:.1e}",
            rep.monotonicity.worst, rep.homogeneity.worst, rep.translation.worst
        ));
    }
    let mut gaps = Vec::new();
    for (p, q) in [(0.05, 0.6), (0.1, 0.55), (0.2, 0.7), (0.01, 0.9), (0.3, 0.6)] {
        let (sum, parts) = subadditivity_counterexample(&spec(p, q)).unwrap();
        let gap = sum - parts;
        pass &= gap > 0.0;
        gaps.push(format!("{gap:.4}"));
    }
    detail.push(format!("rho(X+Y) - rho(X) - rho(Y) = [{}]", gaps.join(", ")));
    line("coherence axioms, subadditivity counterexample", pass, detail.join("; "));
}

fn groups(data: &[(&str, &[f64])]) -> Vec<GroupSample> {
    data.iter()
        .map(|(id, xs)| GroupSample::new(*id, xs.to_vec()).unwrap())
        .collect()
}

// Twenty groups, 100 losses each, Pareto t = 2.1 around Gamma(20, 20) scales.
fn heavy_portfolio(seed: u64) -> Vec<GroupSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas = PriorModel::gamma(20.0, 20.0).unwrap().sample(&mut rng, 20);
    thetas
        .iter()
        .enumerate()
        .map(|(i, &th)| {
            let m = ConditionalModel::pareto(2.1, th).unwrap();
            GroupSample::new(format!("g{i:02}"), m.sample(&mut rng, 100)).unwrap()
        })
        .collect()
}

#[test]
fn nonparametric_hand_fixtures() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let five = [1.0, 2.0, 3.0, 4.0, 5.0];
    checks.push((
        "means of 1..5",
        sample_robust_mean(&five, &spec(0.0, 0.2), RobustMethod::Winsorized).unwrap() == 2.8
            && sample_robust_mean(&five, &spec(0.2, 0.2), RobustMethod::Winsorized).unwrap() == 3.0
            && sample_robust_mean(&five, &spec(0.2, 0.2), RobustMethod::Trimmed).unwrap() == 3.0
            && sample_robust_mean(&five, &spec(0.0, 0.2), RobustMethod::Trimmed).unwrap() == 2.5,
    ));

    let two = groups(&[("a", &[1.0, 2.0, 3.0]), ("b", &[4.0, 5.0, 6.0])]);
    let e = portfolio_structurals(&two, &WinsorSpec::NONE, RobustMethod::Trimmed).unwrap();
    let a = 12.5 / 3.0;
    let z = 3.0 / (3.0 + 1.0 / a);
    let close = |x: f64, y: f64| (x - y).abs() <= 4.0 * f64::EPSILON * y.abs();
    checks.push((
        "two groups",
        e.mu_hat == 3.5
            && e.v_hat == 1.0
            && close(e.a_hat, a)
            && !e.a_clamped
            && close(e.groups[0].z, z)
            && close(e.groups[0].premium, z * 2.0 + (1.0 - z) * 3.5)
            && close(e.groups[1].premium, z * 5.0 + (1.0 - z) * 3.5),
    ));

    let same = groups(&[("a", &[1.0, 2.0, 3.0]), ("b", &[1.0, 2.0, 3.0])]);
    let e = portfolio_structurals(&same, &WinsorSpec::NONE, RobustMethod::Winsorized).unwrap();
    checks.push((
        "identical groups clamp",
        e.a_clamped
            && e.a_hat == 0.0
            && e.a_hat_raw < 0.0
            && e.groups.iter().all(|g| g.z == 0.0 && g.premium == 2.0),
    ));

    let heavy = heavy_portfolio(1);
    let mut heavy_ok = true;
    let mut heavy_note = Vec::new();
    for method in RobustMethod::ALL {
        let raw = portfolio_structurals(&heavy, &WinsorSpec::NONE, method).unwrap();
        let robust = portfolio_structurals(&heavy, &spec(0.0, 0.05), method).unwrap();
        heavy_ok &= raw.a_clamped && raw.groups.iter().all(|g| g.z == 0.0) && !robust.a_clamped;
        heavy_note.push(format!(
            "{method}: a(q=0) {:.4}, a(q=0.05) {:.4}",
            raw.a_hat_raw, robust.a_hat_raw
        ));
    }
    checks.push(("heavy-tail portfolio", heavy_ok));

    let pass = checks.iter().all(|c| c.1);
    let summary: Vec<String> = checks.iter().map(|(n, b)| format!("{n} [{}]", ok(*b))).collect();
    line(
        "nonparametric hand fixtures",
        pass,
        format!("{}; {}", summary.join(", "), heavy_note.join(", ")),
    );
}

#[test]
fn synthetic_premium_sweep_over_q() {
    let pf = heavy_portfolio(5);
    let qs = [0.0, 0.01, 0.05, 0.1, 0.2];
    let mut out = String::from("\n  group    ");
    for method in RobustMethod::ALL {
        for q in qs {
            out += &format!("{:>10}", format!("{method} q={q}"));
        }
    }
    let tables: Vec<Vec<PremiumTable>> = RobustMethod::ALL
        .iter()
        .map(|&m| {
            qs.iter()
                .map(|&q| group_premiums(&portfolio_structurals(&pf, &spec(0.0, q), m).unwrap()))
                .collect()
        })
        .collect();
    for (g, group) in pf.iter().enumerate() {
        out += &format!("\n  {:<8} ", group.id());
        for t in &tables {
            for table in t {
                out += &format!("{:>10.4}", table.premiums[g].1);
            }
        }
    }
    out += "\n  total    ";
    let mut pass = true;
    for t in &tables {
        for table in t {
            out += &format!("{:>10.1}", table.total);
        }
        pass &= t.windows(2).all(|w| w[1].total < w[0].total);
    }
    line("synthetic premium table, total decreasing in q", pass, out);
}

#[test]
fn algebraic_invariances() {
    let mut worst_k = 0.0f64;
    for method in RobustMethod::ALL {
        for s in [spec(0.0, 0.0), spec(0.05, 0.1)] {
            for (kind, alpha) in [(PairKind::ExpGamma, 4.0), (PairKind::ParetoGamma { t: 3.0 }, 3.0)] {
                let k0 = structural_params(&ModelPair::new(kind, PriorModel::gamma(alpha, 1.0).unwrap()).unwrap(), &s, method)
                    .unwrap()
                    .k;
                for beta in [0.01, 0.5, 2.0, 1e3] {
                    let pair = ModelPair::new(kind, PriorModel::gamma(alpha, beta).unwrap()).unwrap();
                    worst_k = worst_k.max(rel(structural_params(&pair, &s, method).unwrap().k, k0));
                }
            }
        }
    }

    let mut worst_z = 0.0f64;
    for method in RobustMethod::ALL {
        for s in [spec(0.0, 0.0), spec(0.05, 0.1)] {
            for kind in [
                PairKind::LognormalNormal { sigma: 0.45 },
                PairKind::LogLogisticNormal { sigma: 0.45 },
            ] {
                let z_at = |mu: f64| {
                    let pair = ModelPair::new(kind, PriorModel::normal(mu, 0.5).unwrap()).unwrap();
                    credibility_factor(&structural_params(&pair, &s, method).unwrap(), 50.0)
                };
                let z0 = z_at(0.0);
                for mu in [-3.0, 1.0, 4.0, 8.0] {
                    worst_z = worst_z.max(rel(z_at(mu), z0));
                }
            }
        }
    }

    let pf = heavy_portfolio(5);
    let mut worst_scale = 0.0f64;
    for c in [1e-3, 7.5, 1e4] {
        let scaled: Vec<GroupSample> = pf
            .iter()
            .map(|g| GroupSample::new(g.id(), g.sorted_losses().iter().map(|x| c * x).collect()).unwrap())
            .collect();
        for method in RobustMethod::ALL {
            for s in [spec(0.0, 0.0), spec(0.0, 0.05), spec(0.02, 0.1)] {
                let a = portfolio_structurals(&pf, &s, method).unwrap();
                let b = portfolio_structurals(&scaled, &s, method).unwrap();
                let mut errs = vec![
                    rel(b.mu_hat, c * a.mu_hat),
                    rel(b.v_hat, c * c * a.v_hat),
                    rel(b.a_hat_raw, c * c * a.a_hat_raw),
                ];
                for (x, y) in a.groups.iter().zip(&b.groups) {
                    errs.push(rel(y.z, x.z));
                    errs.push(rel(y.premium, c * x.premium));
                }
                worst_scale = errs.into_iter().fold(worst_scale, f64::max);
            }
        }
    }
    line(
        "algebraic invariances",
        worst_k <= 1e-12 && worst_z <= 1e-12 && worst_scale <= 1e-10,
        format!(
            "k over rate {worst_k:.1e}; Z over prior mean {worst_z:.1e}; pipeline scale {worst_scale:.1e}"
        ),
    );
}
