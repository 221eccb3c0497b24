//! The built-in property suite run by `llot selftest`.
//!
//! Each check works on the packaged fixtures, records its measured
//! quantities, and compares them with a fixed tolerance. All sampling uses
//! explicit seeds and every reduction is sequential, so the report is
//! byte-for-byte reproducible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fixtures::{self, Fixture};
use crate::grid::GridDensity;
use crate::mmot::{check_dual, solve_lp, solve_sinkhorn, SinkhornOptions, TransportProblem};
use crate::mollifier::{BumpProfile, Moments};
use crate::quantum::MixedStateKernel;
use crate::regularizer::{Coulomb, RegularizedPlan};
use crate::semiclassics::{log_spaced, sweep};
use crate::stats::loglog_slope;
use crate::Result;

/// Seed for every randomized check.
pub const SEED: u64 = 20_180_713;

/// Mesh sizes of the kinetic refinement study.
pub const KINETIC_NODES: [usize; 3] = [32, 64, 128];

/// Grid spacing of the potential ε-sweep.
pub const POTENTIAL_SPACING: f64 = 1.0 / 200.0;

/// Outcome of one property check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub detail: Vec<String>,
}

impl Check {
    fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: true,
            metrics: BTreeMap::new(),
            detail: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    /// Records `ok`, with a message when it fails.
    fn require(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.passed = false;
            self.detail.push(message());
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.metrics.get(key).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn moments() -> Result<Moments> {
    BumpProfile::new(1)?.moments()
}

fn each_case(fixtures: &[Fixture]) -> Result<Vec<(String, RegularizedPlan)>> {
    let mut out = Vec::new();
    for f in fixtures {
        for eps in f.eps_values() {
            let rp = RegularizedPlan::build(&f.plan, &f.rho, eps)?;
            out.push((format!("{} (eps = {eps})", f.name), rp));
        }
    }
    Ok(out)
}

/// L¹ distance between the marginal of P_ε and ρ.
pub fn marginal_pinning() -> Result<Check> {
    let mut c = Check::new(1, "marginal pinning");
    let mut worst: f64 = 0.0;
    for (name, rp) in each_case(&fixtures::marginal_fixtures()?)? {
        let l1 = rp.density_of().l1_distance(rp.rho());
        worst = worst.max(l1);
        c.require(l1 <= 1e-10, || format!("{name}: L1 = {l1:e}"));
    }
    c.metric("max_l1", worst);
    Ok(c)
}

/// Tr Γ_ε = 1 and ρ_Γ = ρ.
pub fn state_trace_and_density() -> Result<Check> {
    let mut c = Check::new(2, "trace and density of the mixed state");
    let (mut trace_err, mut dens_err): (f64, f64) = (0.0, 0.0);
    for (name, rp) in each_case(&fixtures::marginal_fixtures()?)? {
        let gamma = MixedStateKernel::new(&rp);
        let t = (gamma.trace()? - 1.0).abs();
        let d = gamma.one_particle_density()?.l1_distance(rp.rho());
        trace_err = trace_err.max(t);
        dens_err = dens_err.max(d);
        c.require(t <= 1e-10, || format!("{name}: |trace - 1| = {t:e}"));
        c.require(d <= 1e-10, || format!("{name}: density L1 = {d:e}"));
    }
    c.metric("max_trace_error", trace_err);
    c.metric("max_density_l1", dens_err);
    Ok(c)
}

fn sample_configuration(rng: &mut ChaCha8Rng, support: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|_| support[rng.random_range(0..support.len())]).collect()
}

/// Γ_ε(X; X) against P_ε(X) on sampled configurations.
pub fn diagonal_identity(samples: usize) -> Result<Check> {
    let mut c = Check::new(3, "diagonal of the mixed state");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_rel: f64 = 0.0;
    for (name, rp) in each_case(&fixtures::marginal_fixtures()?)? {
        let gamma = MixedStateKernel::new(&rp);
        let support = rp.rho().support();
        let n = rp.particles();
        let mut max_err: f64 = 0.0;
        let mut max_val: f64 = 0.0;
        for _ in 0..samples {
            let x = sample_configuration(&mut rng, &support, n);
            let p = rp.evaluate_nodes(&x);
            let g = gamma.kernel_eval_nodes(&x, &x);
            max_err = max_err.max((g - p).abs());
            max_val = max_val.max(p.abs());
        }
        let rel = if max_val > 0.0 { max_err / max_val } else { max_err };
        worst_rel = worst_rel.max(rel);
        c.require(rel <= 1e-12, || format!("{name}: relative diagonal error {rel:e}"));
    }
    c.metric("samples_per_case", samples as f64);
    c.metric("max_relative_error", worst_rel);
    Ok(c)
}

/// Analytic against quadrature kinetic energy under grid refinement.
pub fn kinetic_refinement() -> Result<Check> {
    let mut c = Check::new(4, "kinetic energy under refinement");
    let m = moments()?;
    let mut spacing = Vec::new();
    let mut mismatch = Vec::new();
    for nodes in KINETIC_NODES {
        let f = fixtures::kinetic_study(nodes)?;
        let rp = RegularizedPlan::build(&f.plan, &f.rho, fixtures::KINETIC_EPS)?;
        let k = MixedStateKernel::new(&rp).kinetic_trace(&m);
        let diff = (k.analytic - k.quadrature).abs();
        c.metric(&format!("analytic_{nodes}"), k.analytic);
        c.metric(&format!("quadrature_{nodes}"), k.quadrature);
        c.metric(&format!("relative_mismatch_{nodes}"), diff / k.analytic);
        spacing.push(f.rho.grid().spacing());
        mismatch.push(diff);
    }
    let slope = loglog_slope(&spacing, &mismatch);
    let finest = c.get(&format!("relative_mismatch_{}", KINETIC_NODES[2]));
    c.metric("slope", slope);
    c.require((1.8..=2.2).contains(&slope), || format!("refinement slope {slope}"));
    c.require(finest <= 1e-3, || format!("relative mismatch at the finest grid {finest:e}"));
    Ok(c)
}

/// ∫|∇√P_ε|² against its two upper bounds.
pub fn bdp_inequality() -> Result<Check> {
    let mut c = Check::new(5, "gradient bound for the square root");
    let m = moments()?;
    let mut worst_bound: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for (name, rp) in each_case(&fixtures::marginal_fixtures()?)? {
        let lhs = rp.kinetic_of_sqrt()?;
        let bound = rp.kinetic_bound(&m);
        let trace = MixedStateKernel::new(&rp).kinetic_trace(&m).quadrature;
        worst_bound = worst_bound.max(lhs / bound);
        worst_trace = worst_trace.max(lhs / trace);
        c.require(lhs <= 1.05 * bound, || format!("{name}: {lhs} > 1.05 x bound {bound}"));
        c.require(lhs <= 1.05 * trace, || format!("{name}: {lhs} > 1.05 x kinetic trace {trace}"));
    }
    c.metric("max_ratio_to_bound", worst_bound);
    c.metric("max_ratio_to_trace", worst_trace);
    Ok(c)
}

/// Coulomb energy error of P_ε against the a-priori bound, and its rate.
pub fn potential_bound() -> Result<Check> {
    let mut c = Check::new(6, "potential energy error");
    let m = moments()?;
    let separated: Vec<Fixture> = fixtures::marginal_fixtures()?
        .into_iter()
        .filter(|f| f.particles() >= 2)
        .collect();
    let mut worst: f64 = 0.0;
    for (name, rp) in each_case(&separated)? {
        let p = rp.potential_error(&Coulomb, &m)?;
        worst = worst.max(p.lhs / p.bound);
        c.require(p.lhs <= p.bound, || format!("{name}: error {} > bound {}", p.lhs, p.bound));
    }
    let study = fixtures::potential_study(POTENTIAL_SPACING)?;
    let mut errors = Vec::new();
    for eps in study.eps_values() {
        let rp = RegularizedPlan::build(&study.plan, &study.rho, eps)?;
        let p = rp.potential_error(&Coulomb, &m)?;
        worst = worst.max(p.lhs / p.bound);
        c.require(p.lhs <= p.bound, || format!("sweep eps = {eps}: error {} > bound {}", p.lhs, p.bound));
        c.metric(&format!("error_eps_{eps}"), p.lhs);
        errors.push(p.lhs);
    }
    let slope = loglog_slope(&study.eps_values(), &errors);
    c.metric("max_error_over_bound", worst);
    c.metric("eps_slope", slope);
    c.require(slope >= 1.8, || format!("eps slope {slope}"));
    Ok(c)
}

fn lp_instance(c: &mut Check, label: &str, n: usize, rho: &GridDensity) -> Result<f64> {
    let p = TransportProblem::new(n, rho)?;
    let s = solve_lp(&p)?;
    let gap = s.duality_gap.unwrap_or(f64::NAN);
    let dual = check_dual(&s, &p, s.dual_potential.as_deref().unwrap_or(&[]), 0, SEED)?;
    c.metric(&format!("{label}_value"), s.value);
    c.metric(&format!("{label}_duality_gap"), gap);
    c.require(gap.abs() <= 1e-8, || format!("{label}: duality gap {gap:e}"));
    c.require(dual.passed, || format!("{label}: dual violation {:e}", dual.max_violation));
    Ok(s.value)
}

/// Exact optima, LP certificates and the entropic approximation.
pub fn transport_exactness() -> Result<Check> {
    let mut c = Check::new(7, "transport solver exactness");
    let two = lp_instance(&mut c, "two_site", 2, &fixtures::two_site_density()?)?;
    c.require((two - 1.0).abs() <= 1e-10, || format!("two-site value {two}"));
    let three = lp_instance(&mut c, "three_site", 3, &fixtures::three_site_density()?)?;
    c.require((three - 2.5).abs() <= 1e-10, || format!("three-site value {three}"));
    let sixteen = lp_instance(&mut c, "sixteen_site", 2, &fixtures::sixteen_site_density()?)?;
    lp_instance(&mut c, "sixteen_site_n3", 3, &fixtures::sixteen_site_density()?)?;
    lp_instance(&mut c, "semiclassical", 2, &fixtures::semiclassical_density()?)?;

    let p = TransportProblem::new(2, &fixtures::sixteen_site_density()?)?;
    let s = solve_sinkhorn(&p, &SinkhornOptions::new(200.0))?;
    let diff = (s.value - sixteen).abs();
    c.metric("sinkhorn_beta_200_value", s.value);
    c.metric("sinkhorn_beta_200_error", diff);
    c.metric("sinkhorn_marginal_residual", s.marginal_residual);
    c.require(diff <= 1e-3, || format!("sinkhorn misses the LP value by {diff:e}"));
    Ok(c)
}

/// Trial-state upper bound against E_OT over a range of η.
pub fn semiclassical_sandwich() -> Result<Check> {
    let mut c = Check::new(8, "semiclassical upper bound");
    let etas = log_spaced(1e-4, 1e-1, 10)?;
    let s = sweep(&fixtures::semiclassical_density()?, 2, &etas)?;
    for r in &s.records {
        if let Some(e) = &r.error {
            c.require(false, || format!("eta = {}: {e}", r.eta));
        }
    }
    let min_gap = s.min_gap();
    c.metric("e_ot", s.e_ot);
    c.metric("min_gap", min_gap);
    c.metric("slope", s.fitted_slope);
    c.require(min_gap >= -1e-8, || format!("negative gap {min_gap:e}"));
    c.require(s.within_assembled_bound(), || "gap exceeds C(sqrt(eta) + eta)".into());
    c.require((0.4..=0.6).contains(&s.fitted_slope), || format!("slope {}", s.fitted_slope));
    Ok(c)
}

/// Positive semidefiniteness on random vectors and exact sign flips.
pub fn positivity_antisymmetry(samples: usize) -> Result<Check> {
    let mut c = Check::new(9, "positivity and antisymmetry");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 9);
    let mut min_ratio = f64::INFINITY;
    let mut flips = 0usize;
    for (name, rp) in each_case(&fixtures::marginal_fixtures()?)? {
        let gamma = MixedStateKernel::new(&rp);
        let n = rp.particles();
        let support = rp.rho().support();
        let mut configs: Vec<Vec<usize>> = (0..300).map(|_| sample_configuration(&mut rng, &support, n)).collect();
        configs.sort();
        configs.dedup();
        let report = gamma.positivity(&configs, samples, rng.random());
        min_ratio = min_ratio.min(report.min_ratio);
        c.require(report.min_ratio >= -1e-12, || format!("{name}: Rayleigh quotient {:e}", report.min_ratio));
        if n < 2 {
            continue;
        }
        for _ in 0..50 {
            let x = sample_configuration(&mut rng, &support, n);
            let y = sample_configuration(&mut rng, &support, n);
            let i = rng.random_range(0..n);
            let j = (i + 1 + rng.random_range(0..n - 1)) % n;
            let mut xs = x.clone();
            xs.swap(i, j);
            let a = gamma.kernel_eval_nodes(&x, &y);
            let b = gamma.kernel_eval_nodes(&xs, &y);
            c.require(a == -b, || format!("{name}: transposition gives {a} and {b}"));
            flips += 1;
        }
    }
    c.metric("min_rayleigh_quotient", min_ratio);
    c.metric("transpositions_checked", flips as f64);
    Ok(c)
}

/// Runs every check. A check that errors out is recorded as failed.
pub fn run() -> SelftestReport {
    type Runner = Box<dyn Fn() -> Result<Check>>;
    let runs: Vec<(u32, &str, Runner)> = vec![
        (1, "marginal pinning", Box::new(marginal_pinning)),
        (2, "trace and density of the mixed state", Box::new(state_trace_and_density)),
        (3, "diagonal of the mixed state", Box::new(|| diagonal_identity(1000))),
        (4, "kinetic energy under refinement", Box::new(kinetic_refinement)),
        (5, "gradient bound for the square root", Box::new(bdp_inequality)),
        (6, "potential energy error", Box::new(potential_bound)),
        (7, "transport solver exactness", Box::new(transport_exactness)),
        (8, "semiclassical upper bound", Box::new(semiclassical_sandwich)),
        (9, "positivity and antisymmetry", Box::new(|| positivity_antisymmetry(100))),
    ];
    let checks: Vec<Check> = runs
        .into_iter()
        .map(|(id, name, f)| match f() {
            Ok(c) => c,
            Err(e) => {
                let mut c = Check::new(id, name);
                c.require(false, || e.to_string());
                c
            }
        })
        .collect();
    SelftestReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
