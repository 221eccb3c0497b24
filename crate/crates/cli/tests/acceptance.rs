//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use llot_core::fixtures;
use llot_core::plan::separation;
use llot_core::selftest::{self, Check};
use llot_core::semiclassics::{log_spaced, sweep};
use llot_core::Result;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        summary: summary.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Result<Outcome>) -> Outcome {
    let start = Instant::now();
    let out = match f() {
        Ok(o) => o,
        Err(e) => outcome(false, format!("error: {e}")),
    };
    let took = start.elapsed();
    let in_time = took <= limit;
    Outcome {
        passed: out.passed && in_time,
        summary: format!("{} [{:.1} s of {} s]", out.summary, took.as_secs_f64(), limit.as_secs()),
    }
}

fn detail(c: &Check) -> String {
    if c.detail.is_empty() {
        String::new()
    } else {
        format!(" ({})", c.detail.join("; "))
    }
}

fn marginal_pinning() -> Result<Outcome> {
    let fx = fixtures::marginal_fixtures()?;
    let mut shape_ok = fx.len() == 5;
    let mut ns: Vec<usize> = fx.iter().map(|f| f.particles()).collect();
    ns.sort_unstable();
    ns.dedup();
    shape_ok &= ns == [1, 2, 3];
    for f in &fx {
        let nodes = f.rho.grid().points_per_axis();
        shape_ok &= f.rho.grid().dim() == 1 && (32..=64).contains(&nodes);
        if f.particles() > 1 {
            let alpha = separation(&f.plan)?.min_pairwise_distance;
            let mut eps = f.eps_values();
            eps.sort_by(f64::total_cmp);
            shape_ok &= eps.len() == 2
                && (eps[0] - alpha / 16.0).abs() <= 1e-15
                && (eps[1] - alpha / 8.0).abs() <= 1e-15;
        }
    }
    let c = selftest::marginal_pinning()?;
    let l1 = c.get("max_l1");
    Ok(outcome(
        shape_ok && c.passed && l1 <= 1e-10,
        format!("max L1 {l1:.2e} <= 1e-10 over 5 fixtures x 2 eps{}", detail(&c)),
    ))
}

fn trace_density() -> Result<Outcome> {
    let c = selftest::state_trace_and_density()?;
    let (t, d) = (c.get("max_trace_error"), c.get("max_density_l1"));
    Ok(outcome(
        c.passed && t <= 1e-10 && d <= 1e-10,
        format!("|trace - 1| {t:.2e}, density L1 {d:.2e}{}", detail(&c)),
    ))
}

fn diagonal() -> Result<Outcome> {
    let c = selftest::diagonal_identity(1000)?;
    let r = c.get("max_relative_error");
    Ok(outcome(
        c.passed && c.get("samples_per_case") == 1000.0 && r <= 1e-12,
        format!("max relative error {r:.2e} <= 1e-12 on 1000 samples per case{}", detail(&c)),
    ))
}

fn kinetic() -> Result<Outcome> {
    let c = selftest::kinetic_refinement()?;
    let (slope, rel) = (c.get("slope"), c.get("relative_mismatch_128"));
    Ok(outcome(
        (1.8..=2.2).contains(&slope) && rel <= 1e-3,
        format!("slope {slope:.3} in [1.8, 2.2], relative mismatch at 128 nodes {rel:.2e} <= 1e-3{}", detail(&c)),
    ))
}

fn bdp() -> Result<Outcome> {
    let c = selftest::bdp_inequality()?;
    let (b, t) = (c.get("max_ratio_to_bound"), c.get("max_ratio_to_trace"));
    Ok(outcome(
        c.passed && b <= 1.05 && t <= 1.05,
        format!("max lhs/bound {b:.4}, max lhs/quadrature {t:.4} (both <= 1.05){}", detail(&c)),
    ))
}

fn potential() -> Result<Outcome> {
    let c = selftest::potential_bound()?;
    let (ratio, slope) = (c.get("max_error_over_bound"), c.get("eps_slope"));
    Ok(outcome(
        c.passed && ratio <= 1.0 && slope >= 1.8,
        format!("max error/bound {ratio:.3} <= 1, eps slope {slope:.3} >= 1.8{}", detail(&c)),
    ))
}

fn transport() -> Result<Outcome> {
    let c = selftest::transport_exactness()?;
    let two = c.get("two_site_value");
    let three = c.get("three_site_value");
    let gaps: Vec<f64> = c
        .metrics
        .iter()
        .filter(|(k, _)| k.ends_with("_duality_gap"))
        .map(|(_, v)| v.abs())
        .collect();
    let worst_gap = gaps.iter().copied().fold(0.0, f64::max);
    let sk = c.get("sinkhorn_beta_200_error");
    Ok(outcome(
        c.passed
            && (two - 1.0).abs() <= 1e-10
            && (three - 2.5).abs() <= 1e-10
            && gaps.len() >= 4
            && worst_gap <= 1e-8
            && sk <= 1e-3,
        format!(
            "two-site {two}, three-site {three}, max LP gap {worst_gap:.1e} over {} instances, sinkhorn error {sk:.1e}{}",
            gaps.len(),
            detail(&c)
        ),
    ))
}

fn sandwich() -> Result<Outcome> {
    let rho = fixtures::semiclassical_density()?;
    let etas = log_spaced(1e-4, 1e-1, 10)?;
    let s = sweep(&rho, 2, &etas)?;
    let all_ok = s.records.iter().all(|r| r.error.is_none());
    let min_gap = s.min_gap();
    let sites = rho.support().len();
    Ok(outcome(
        all_ok && sites == 32 && min_gap >= -1e-8 && s.within_assembled_bound() && (0.4..=0.6).contains(&s.fitted_slope),
        format!(
            "{sites} sites, min gap {min_gap:.2e} >= -1e-8, gap <= C(sqrt(eta)+eta): {}, slope {:.3} in [0.4, 0.6]",
            s.within_assembled_bound(),
            s.fitted_slope
        ),
    ))
}

fn positivity() -> Result<Outcome> {
    let c = selftest::positivity_antisymmetry(100)?;
    let q = c.get("min_rayleigh_quotient");
    Ok(outcome(
        c.passed && q >= -1e-12,
        format!(
            "min Rayleigh quotient {q:.2e} >= -1e-12, {} transpositions flip sign exactly{}",
            c.get("transpositions_checked"),
            detail(&c)
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let run = || -> std::io::Result<(bool, Vec<u8>)> {
        let out = Command::new(env!("CARGO_BIN_EXE_llot")).arg("selftest").output()?;
        Ok((out.status.success(), out.stdout))
    };
    let (ok_a, a) = run()?;
    let (ok_b, b) = run()?;
    Ok(outcome(
        ok_a && ok_b && !a.is_empty() && a == b,
        format!("two `llot selftest` reports, {} bytes, identical: {}", a.len(), a == b),
    ))
}

fn main() -> ExitCode {
    type Criterion = fn() -> Result<Outcome>;
    let criteria: Vec<(u32, &str, Duration, Criterion)> = vec![
        (1, "marginal pinning", Duration::from_secs(10), marginal_pinning),
        (2, "trace and density", Duration::from_secs(30), trace_density),
        (3, "diagonal identity", Duration::from_secs(60), diagonal),
        (4, "kinetic identity", Duration::from_secs(120), kinetic),
        (5, "gradient inequality", Duration::from_secs(120), bdp),
        (6, "potential bound", Duration::from_secs(120), potential),
        (7, "transport exactness", Duration::from_secs(120), transport),
        (8, "semiclassical sandwich", Duration::from_secs(300), sandwich),
        (9, "positivity and antisymmetry", Duration::from_secs(60), positivity),
        (10, "determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        let o = timed(limit, f);
        if !o.passed {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.summary);
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
