//! One function per subcommand. Each returns the process exit code on
//! success; errors are mapped to exit codes by the caller.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use llot_core::io::{self, Report};
use llot_core::mmot::{self, SinkhornOptions, TransportProblem, TransportSolution};
use llot_core::mollifier::BumpProfile;
use llot_core::quantum::{DiagonalCheck, KineticTrace, PositivityReport};
use llot_core::regularizer::{Coulomb, PotentialCheck};
use llot_core::semiclassics::{self, log_spaced};
use llot_core::{selftest, Error, GridDensity, MassConvention, MixedStateKernel, RegularizedPlan, Result};

use crate::{CheckKind, Convention, InputArgs, MmotArgs, QuantumArgs, RegularizeArgs, SelftestArgs, SweepArgs, Solver};

/// Exact identities are reported as passing below this.
const IDENTITY_TOL: f64 = 1e-10;

fn config(args: &impl Serialize, threads: Option<usize>) -> BTreeMap<String, Value> {
    let mut map: BTreeMap<String, Value> = match serde_json::to_value(args) {
        Ok(Value::Object(m)) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    map.insert("threads".into(), threads.map(Value::from).unwrap_or(Value::Null));
    map
}

/// Fails before any computation if an output cannot be created.
fn check_output(path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
        if let Some(dir) = parent {
            if !dir.is_dir() {
                return Err(Error::InvalidParameter(format!("output directory {} does not exist", dir.display())));
            }
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidParameter(format!("cannot open {}: {e}", path.display())))
}

fn read_density(path: &Path, convention: Convention, n: usize) -> Result<GridDensity> {
    let convention = match convention {
        Convention::Probability => MassConvention::Probability,
        Convention::ParticleNumber => MassConvention::ParticleNumber(n),
    };
    Ok(io::read_density_csv(open(path)?, convention)?.to_probability())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("--{name} must be positive, got {v}")))
    }
}

fn regularized(input: &InputArgs) -> Result<RegularizedPlan> {
    positive("eps", input.eps)?;
    let plan = io::read_plan_json(open(&input.plan)?)?;
    let rho = read_density(&input.density, input.convention, plan.n)?;
    RegularizedPlan::build(&plan, &rho, input.eps)
}

#[derive(Serialize)]
struct MarginalResult {
    l1: f64,
    passed: bool,
}

#[derive(Serialize)]
struct KineticBound {
    /// ∫|∇√P_ε|² on the tensor grid.
    lhs: f64,
    /// N(∫|∇√ρ|² + ε^{−2}∫|∇χ|²).
    rhs: f64,
    passed: bool,
}

#[derive(Serialize)]
struct PotentialResult {
    #[serde(flatten)]
    check: PotentialCheck,
    passed: bool,
}

#[derive(Serialize)]
struct RegularizeResult {
    particles: usize,
    dim: usize,
    eps: f64,
    separation: f64,
    marginal: Option<MarginalResult>,
    kinetic: Option<KineticBound>,
    potential: Option<PotentialResult>,
}

pub fn regularize(args: &RegularizeArgs, threads: Option<usize>) -> Result<u8> {
    check_output(args.out.as_deref())?;
    let rp = regularized(&args.input)?;
    let moments = BumpProfile::new(rp.grid().dim())?.moments()?;
    let wants = |k: CheckKind| args.checks.contains(&k);

    let marginal = wants(CheckKind::Marginal).then(|| {
        let l1 = rp.density_of().l1_distance(rp.rho());
        MarginalResult {
            l1,
            passed: l1 <= IDENTITY_TOL,
        }
    });
    let kinetic = if wants(CheckKind::Kinetic) {
        let lhs = rp.kinetic_of_sqrt()?;
        let rhs = rp.kinetic_bound(&moments);
        Some(KineticBound {
            lhs,
            rhs,
            passed: lhs <= rhs * 1.05,
        })
    } else {
        None
    };
    let potential = if wants(CheckKind::Potential) {
        let check = rp.potential_error(&Coulomb, &moments)?;
        let passed = check.lhs <= check.bound;
        Some(PotentialResult { check, passed })
    } else {
        None
    };
    let result = RegularizeResult {
        particles: rp.particles(),
        dim: rp.grid().dim(),
        eps: rp.eps(),
        separation: rp.separation(),
        marginal,
        kinetic,
        potential,
    };
    let report = Report::new("regularize", config(args, threads), result);
    write_text(args.out.as_deref(), &report.to_json()?)?;
    Ok(0)
}

#[derive(Serialize)]
struct QuantumResult {
    particles: usize,
    eps: f64,
    trace: f64,
    density_l1: f64,
    diagonal: DiagonalCheck,
    kinetic: KineticTrace,
    positivity: PositivityReport,
    passed: bool,
}

pub fn quantum_check(args: &QuantumArgs, threads: Option<usize>) -> Result<u8> {
    check_output(args.out.as_deref())?;
    let rp = regularized(&args.input)?;
    let moments = BumpProfile::new(rp.grid().dim())?.moments()?;
    let gamma = MixedStateKernel::new(&rp);
    let trace = gamma.trace()?;
    let density_l1 = gamma.one_particle_density()?.l1_distance(rp.rho());
    let diagonal = gamma.diagonal_check(args.samples, args.seed);
    let kinetic = gamma.kinetic_trace(&moments);
    let mut configs = gamma.support_configurations()?;
    if configs.len() > 300 {
        // an evenly strided subset keeps the dense block small
        let stride = configs.len().div_ceil(300);
        configs = configs.into_iter().step_by(stride).collect();
    }
    let positivity = gamma.positivity(&configs, args.positivity_samples, args.seed);
    let passed = (trace - 1.0).abs() <= IDENTITY_TOL
        && density_l1 <= IDENTITY_TOL
        && diagonal.max_relative_error <= 1e-12
        && positivity.min_ratio >= -1e-12;
    let result = QuantumResult {
        particles: rp.particles(),
        eps: rp.eps(),
        trace,
        density_l1,
        diagonal,
        kinetic,
        positivity,
        passed,
    };
    let report = Report::new("quantum-check", config(args, threads), result);
    write_text(args.out.as_deref(), &report.to_json()?)?;
    Ok(0)
}

#[derive(Serialize)]
struct DualSummary {
    configurations_checked: usize,
    max_violation: f64,
    complementary_slackness: f64,
    passed: bool,
}

#[derive(Serialize)]
struct MmotResult {
    particles: usize,
    sites: usize,
    solver: mmot::SolverKind,
    value: f64,
    marginal_residual: f64,
    duality_gap: Option<f64>,
    entropic_objective: Option<f64>,
    iterations: usize,
    atoms: usize,
    separation: f64,
    dual: Option<DualSummary>,
}

fn solve(args: &MmotArgs, problem: &TransportProblem) -> Result<TransportSolution> {
    match args.solver {
        Solver::Lp => mmot::solve_lp(problem),
        Solver::Sinkhorn => {
            positive("beta", args.beta)?;
            positive("tol", args.tol)?;
            let opts = SinkhornOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                log_domain: !args.plain,
                anneal: !args.no_anneal,
                ..SinkhornOptions::new(args.beta)
            };
            mmot::solve_sinkhorn(problem, &opts)
        }
    }
}

pub fn mmot(args: &MmotArgs, threads: Option<usize>) -> Result<u8> {
    check_output(args.out.as_deref())?;
    check_output(args.report.as_deref())?;
    let rho = read_density(&args.density, args.convention, args.n)?;
    let problem = TransportProblem::new(args.n, &rho)?;
    let sol = solve(args, &problem)?;
    let dual = match &sol.dual_potential {
        Some(v) => {
            let c = mmot::check_dual(&sol, &problem, v, 10_000, args.seed)?;
            Some(DualSummary {
                configurations_checked: c.configurations_checked,
                max_violation: c.max_violation,
                complementary_slackness: c.complementary_slackness,
                passed: c.passed,
            })
        }
        None => None,
    };
    let separation = mmot::plan_separation(&sol)?.min_pairwise_distance;
    if let Some(path) = &args.out {
        io::write_plan_json(BufWriter::new(File::create(path)?), &sol.plan)?;
    }
    let result = MmotResult {
        particles: args.n,
        sites: problem.sites().len(),
        solver: sol.solver,
        value: sol.value,
        marginal_residual: sol.marginal_residual,
        duality_gap: sol.duality_gap,
        entropic_objective: sol.entropic_objective,
        iterations: sol.iterations,
        atoms: sol.plan.atoms.len(),
        separation,
        dual,
    };
    let mut report = Report::new("mmot", config(args, threads), result);
    if args.solver == Solver::Sinkhorn {
        report = report.with_note("entropic solutions carry no dual certificate");
    }
    write_text(args.report.as_deref(), &report.to_json()?)?;
    Ok(0)
}

/// `lo:hi:count` or `a,b,c,...`.
pub fn parse_etas(text: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::InvalidParameter(format!("--etas: {what} in `{text}`"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:count"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lower end"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad("bad upper end"))?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad("bad count"))?;
        log_spaced(lo, hi, count)
    } else {
        let etas = text
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<f64>>>()?;
        if etas.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(bad("values must be positive"));
        }
        Ok(etas)
    }
}

#[derive(Serialize)]
struct SweepSummary {
    e_ot: f64,
    separation: f64,
    fitted_slope: f64,
    min_gap: f64,
    within_assembled_bound: bool,
    failed_etas: usize,
    records: Vec<semiclassics::SweepRecord>,
}

pub fn sweep(args: &SweepArgs, threads: Option<usize>) -> Result<u8> {
    check_output(args.out.as_deref())?;
    check_output(args.report.as_deref())?;
    let etas = parse_etas(&args.etas)?;
    let rho = read_density(&args.density, args.convention, args.n)?;
    let s = semiclassics::sweep(&rho, args.n, &etas)?;
    if let Some(path) = &args.out {
        io::write_sweep_csv(BufWriter::new(File::create(path)?), &s)?;
    }
    let failed = s.records.iter().filter(|r| r.error.is_some()).count();
    let summary = SweepSummary {
        e_ot: s.e_ot,
        separation: s.separation,
        fitted_slope: s.fitted_slope,
        min_gap: s.min_gap(),
        within_assembled_bound: s.within_assembled_bound(),
        failed_etas: failed,
        records: s.records,
    };
    let report = Report::new("sweep", config(args, threads), summary);
    write_text(args.report.as_deref(), &report.to_json()?)?;
    Ok(if failed == etas.len() { 2 } else { 0 })
}

pub fn selftest(args: &SelftestArgs, threads: Option<usize>) -> Result<u8> {
    check_output(args.out.as_deref())?;
    let result = selftest::run();
    let passed = result.passed;
    for c in &result.checks {
        eprintln!("[{}] {:>2} {}", if c.passed { "pass" } else { "FAIL" }, c.id, c.name);
    }
    let report = Report::new("selftest", config(args, threads), result)
        .with_note("all built-in instances are one-dimensional");
    write_text(args.out.as_deref(), &report.to_json()?)?;
    Ok(if passed { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_ranges() {
        let e = parse_etas("1e-4:1e-1:10").unwrap();
        assert_eq!(e.len(), 10);
        assert!((e[0] - 1e-4).abs() < 1e-18 && (e[9] - 0.1).abs() < 1e-15);
        assert_eq!(parse_etas("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_etas("1:2").is_err());
        assert!(parse_etas("0.1,-1").is_err());
    }

    #[test]
    fn missing_output_directory_is_rejected() {
        assert!(check_output(Some(Path::new("/definitely/not/here/report.json"))).is_err());
        assert!(check_output(Some(Path::new("report.json"))).is_ok());
        assert!(check_output(None).is_ok());
    }
}
