//! Trial-state upper bounds for the semiclassical Levy–Lieb problem.
//!
//! For an optimal plan P with marginal ρ and a mollifier width ε, the
//! mixed state Γ_ε built from P_ε has energy
//!
//! ```text
//! η·N(∫|∇√ρ|² + ε⁻²∫|∇χ|²) + ∫Φ dP_ε,
//! ```
//!
//! which bounds the rescaled quantum ground-state energy from above. The
//! gap to E_OT(ρ) is minimized over ε for each η and its decay rate in η
//! is fitted on a log-log scale.

use serde::Serialize;

use crate::grid::{h1_seminorm_sqrt, GridDensity};
use crate::mmot::{plan_separation, solve_lp, TransportProblem, PRUNE_THRESHOLD};
use crate::mollifier::{BumpProfile, Moments, ScaledMollifier};
use crate::plan::{separation, AtomicPlan};
use crate::regularizer::{Coulomb, RegularizedPlan};
use crate::stats::loglog_slope;
use crate::{ordered_map, Error, Result};

/// Points in the coarse scan that precedes golden-section refinement.
pub const SCAN_POINTS: usize = 32;

/// Relative width of the final golden-section bracket.
const GOLDEN_TOL: f64 = 1e-6;

/// The two terms of the trial energy at one (η, ε).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialEnergy {
    pub eta: f64,
    pub eps: f64,
    pub kinetic_term: f64,
    pub potential_term: f64,
    pub total: f64,
}

/// Precomputed ingredients shared by every trial energy on one instance.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    rho: GridDensity,
    plan: AtomicPlan,
    moments: Moments,
    sqrt_h1: f64,
    gradient_l1: f64,
    alpha: f64,
    edge_margin: usize,
}

impl TrialSetup {
    /// `plan` must be supported on nodes of `rho`'s grid with marginal ρ.
    pub fn new(rho: &GridDensity, plan: &AtomicPlan) -> Result<Self> {
        let rho = rho.to_probability();
        let plan = plan.symmetrize();
        let alpha = separation(&plan)?.min_pairwise_distance;
        let moments = BumpProfile::new(rho.grid().dim())?.moments()?;
        let grid = rho.grid();
        let mut edge_margin = usize::MAX;
        for atom in &plan.atoms {
            for p in &atom.points {
                for i in grid.multi_index(grid.locate(p)?) {
                    edge_margin = edge_margin.min(i).min(grid.points_per_axis() - 1 - i);
                }
            }
        }
        Ok(Self {
            edge_margin,
            sqrt_h1: h1_seminorm_sqrt(&rho),
            gradient_l1: rho.gradient_l1(),
            rho,
            plan,
            moments,
            alpha,
        })
    }

    pub fn rho(&self) -> &GridDensity {
        &self.rho
    }

    pub fn plan(&self) -> &AtomicPlan {
        &self.plan
    }

    pub fn separation(&self) -> f64 {
        self.alpha
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn particles(&self) -> usize {
        self.plan.n
    }

    /// Admissible widths: from two grid spacings up to just below α̂/4,
    /// further capped so that the kernel reach stays inside the grid.
    pub fn eps_range(&self) -> Result<(f64, f64)> {
        let h = self.rho.grid().spacing();
        let eps_min = 2.0 * h;
        let eps_max = (self.alpha / 4.0).min((self.edge_margin / 2 + 1) as f64 * h);
        let hi = eps_max * (1.0 - 1e-9);
        if hi <= eps_min {
            return Err(Error::EmptyEpsInterval { eps_min, eps_max });
        }
        Ok((eps_min, hi))
    }

    /// η·N(∫|∇√ρ|² + ε⁻²∫|∇χ|²).
    pub fn kinetic_term(&self, eps: f64, eta: f64) -> Result<f64> {
        let m = ScaledMollifier::new(BumpProfile::new(self.rho.grid().dim())?, eps)?;
        Ok(eta * self.particles() as f64 * (self.sqrt_h1 + m.grad_sq(&self.moments)))
    }

    /// ∫Φ dP_ε for the Coulomb cost.
    pub fn potential_term(&self, eps: f64) -> Result<f64> {
        Ok(RegularizedPlan::build(&self.plan, &self.rho, eps)?.integrate(&Coulomb))
    }

    pub fn trial_energy(&self, eps: f64, eta: f64) -> Result<TrialEnergy> {
        if eta.is_nan() || eta < 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be nonnegative, got {eta}")));
        }
        let (lo, hi) = self.eps_range()?;
        if eps < lo || eps > hi {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} outside the admissible range [{lo}, {hi}]"
            )));
        }
        let kinetic_term = self.kinetic_term(eps, eta)?;
        let potential_term = self.potential_term(eps)?;
        Ok(TrialEnergy {
            eta,
            eps,
            kinetic_term,
            potential_term,
            total: kinetic_term + potential_term,
        })
    }

    /// Explicit bound on |∫Φ dP_ε − ∫Φ dP| / ε² for Coulomb Φ:
    /// N³∫|∇ρ|∫|u|²χ² / (α̂−4ε)² + 2N⁴ / (α̂−4ε)³.
    pub fn coulomb_curvature(&self, eps: f64) -> f64 {
        let n = self.particles() as f64;
        let gap = self.alpha - 4.0 * eps;
        n.powi(3) * self.gradient_l1 * self.moments.second_moment.value / (gap * gap)
            + 2.0 * n.powi(4) / gap.powi(3)
    }

    /// C with kinetic + ε²·(curvature bound) = C(√η + η).
    pub fn assembled_constant(&self, eps: f64, eta: f64) -> Result<f64> {
        let upper = self.kinetic_term(eps, eta)? + eps * eps * self.coulomb_curvature(eps);
        Ok(upper / (eta.sqrt() + eta))
    }

    /// Minimizes the trial energy over ε.
    pub fn optimize_eps(&self, eta: f64) -> Result<EpsOptimum> {
        if eta.is_nan() || eta <= 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        let (lo, hi) = self.eps_range()?;
        let mut failure = None;
        let result = minimize_scanned(
            |eps| match self.trial_energy(eps, eta) {
                Ok(t) => t.total,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            lo,
            hi,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(EpsOptimum {
            energy: self.trial_energy(result.x, eta)?,
            unimodal: result.unimodal,
        })
    }
}

/// Minimizer of the trial energy in ε.
#[derive(Clone, Debug, Serialize)]
pub struct EpsOptimum {
    pub energy: TrialEnergy,
    /// Whether the pre-scan looked unimodal (otherwise the best scan point
    /// is returned unrefined).
    pub unimodal: bool,
}

/// Outcome of a scanned one-dimensional minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanMinimum {
    pub x: f64,
    pub value: f64,
    pub unimodal: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    while (b - a) > rel_tol * scale {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Scans `f` at [`SCAN_POINTS`] equispaced points of `[lo, hi]`, then
/// refines around the best point by golden section when the scan is
/// unimodal.
pub fn minimize_scanned(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> ScanMinimum {
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + i as f64 * step).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let best = (0..SCAN_POINTS).fold(0, |b, i| if ys[i] < ys[b] { i } else { b });
    let unimodal = ys[..=best].windows(2).all(|w| w[1] <= w[0]) && ys[best..].windows(2).all(|w| w[1] >= w[0]);
    if !unimodal {
        return ScanMinimum {
            x: xs[best],
            value: ys[best],
            unimodal,
        };
    }
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(SCAN_POINTS - 1)];
    let (x, value) = golden_section(&mut f, a, b, GOLDEN_TOL);
    if value <= ys[best] {
        ScanMinimum { x, value, unimodal }
    } else {
        ScanMinimum {
            x: xs[best],
            value: ys[best],
            unimodal,
        }
    }
}

/// One η of a sweep. A failed η carries its error message and no numbers.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub eta: f64,
    pub eps_opt: Option<f64>,
    pub trial_total: Option<f64>,
    pub kinetic_term: Option<f64>,
    pub potential_term: Option<f64>,
    pub gap: Option<f64>,
    pub assembled_constant: Option<f64>,
    pub unimodal: Option<bool>,
    pub error: Option<String>,
}

/// Results of an η sweep against a fixed E_OT.
#[derive(Clone, Debug, Serialize)]
pub struct Sweep {
    pub e_ot: f64,
    pub separation: f64,
    pub records: Vec<SweepRecord>,
    /// Least-squares slope of ln(gap) against ln(η) over successful records.
    pub fitted_slope: f64,
}

impl Sweep {
    /// Smallest gap, which should be ≥ −1e-8.
    pub fn min_gap(&self) -> f64 {
        self.records.iter().filter_map(|r| r.gap).fold(f64::INFINITY, f64::min)
    }

    /// Whether gap ≤ C(√η + η) for every successful record.
    pub fn within_assembled_bound(&self) -> bool {
        self.records.iter().all(|r| match (r.gap, r.assembled_constant) {
            (Some(g), Some(c)) => g <= c * (r.eta.sqrt() + r.eta),
            _ => true,
        })
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lo < hi and at least 2 points, got {lo}:{hi}:{count}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

fn record(setup: &TrialSetup, e_ot: f64, eta: f64) -> SweepRecord {
    let outcome = setup
        .optimize_eps(eta)
        .and_then(|opt| Ok((setup.assembled_constant(opt.energy.eps, eta)?, opt)));
    match outcome {
        Ok((c, opt)) => SweepRecord {
            eta,
            eps_opt: Some(opt.energy.eps),
            trial_total: Some(opt.energy.total),
            kinetic_term: Some(opt.energy.kinetic_term),
            potential_term: Some(opt.energy.potential_term),
            gap: Some(opt.energy.total - e_ot),
            assembled_constant: Some(c),
            unimodal: Some(opt.unimodal),
            error: None,
        },
        Err(e) => SweepRecord {
            eta,
            eps_opt: None,
            trial_total: None,
            kinetic_term: None,
            potential_term: None,
            gap: None,
            assembled_constant: None,
            unimodal: None,
            error: Some(e.to_string()),
        },
    }
}

/// Sweeps η for a given optimal plan and its value.
pub fn sweep_with_plan(setup: &TrialSetup, e_ot: f64, etas: &[f64]) -> Sweep {
    let records = ordered_map(etas, |&eta| record(setup, e_ot, eta));
    let (x, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| r.gap.map(|g| (r.eta, g)))
        .unzip();
    Sweep {
        e_ot,
        separation: setup.separation(),
        records,
        fitted_slope: loglog_slope(&x, &y),
    }
}

/// Solves the transport problem exactly, then sweeps η.
pub fn sweep(rho: &GridDensity, n: usize, etas: &[f64]) -> Result<Sweep> {
    if etas.len() < 5 {
        return Err(Error::InvalidParameter("a sweep needs at least 5 values of eta".into()));
    }
    let problem = TransportProblem::new(n, rho)?;
    let solution = solve_lp(&problem)?;
    plan_separation(&solution)?;
    let plan = solution.plan.pruned(PRUNE_THRESHOLD)?;
    let setup = TrialSetup::new(rho, &plan)?;
    Ok(sweep_with_plan(&setup, solution.value, etas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    const GRAD_SQ_1D: f64 = 3.077_609_131_231_777;
    use crate::regularizer::SymmetricFunction;

    #[test]
    fn golden_section_recovers_closed_form() {
        for (a, b, eta) in [(1.0, 1.0, 1e-2), (3.0, 0.5, 1e-4), (0.2, 7.0, 0.3)] {
            let (x, _) = golden_section(|e| a * eta / (e * e) + b * e * e, 1e-3, 10.0, 1e-9);
            let exact = (a * eta / b).powf(0.25);
            assert!((x - exact).abs() / exact < 1e-4, "{x} vs {exact}");
            let s = minimize_scanned(|e| a * eta / (e * e) + b * e * e, 1e-3, 10.0);
            assert!(s.unimodal);
            assert!((s.x - exact).abs() / exact < 1e-4);
        }
    }

    #[test]
    fn non_unimodal_scan_falls_back() {
        let s = minimize_scanned(|x| (6.0 * x).sin() + 0.1 * x, 0.0, 10.0);
        assert!(!s.unimodal);
        let step = 10.0 / (SCAN_POINTS - 1) as f64;
        assert!(((s.x / step).round() * step - s.x).abs() < 1e-12);
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(1e-4, 1e-1, 10).unwrap();
        assert_eq!(v.len(), 10);
        assert!((v[0] - 1e-4).abs() < 1e-18 && (v[9] - 1e-1).abs() < 1e-15);
        assert!((v[3] / v[2] - v[7] / v[6]).abs() < 1e-12);
        assert!(log_spaced(1.0, 0.5, 4).is_err());
    }

    fn two_point_setup() -> TrialSetup {
        let f = fixtures::two_points().unwrap();
        TrialSetup::new(&f.rho, &f.plan).unwrap()
    }

    #[test]
    fn two_point_terms_match_hand_assembly() {
        let setup = two_point_setup();
        let (eps, eta) = (0.1, 0.01);
        let t = setup.trial_energy(eps, eta).unwrap();
        // kinetic: 2η(∫|∇√ρ|² + ε⁻²∫|∇χ|²) with the 1D moment
        let kinetic = 2.0 * eta * (h1_seminorm_sqrt(setup.rho()) + GRAD_SQ_1D / (eps * eps));
        // potential: brute-force sum over the tensor grid
        let rp = RegularizedPlan::build(setup.plan(), setup.rho(), eps).unwrap();
        let (tg, values) = rp.tensor().unwrap();
        let mut potential = 0.0;
        for (k, v) in values.iter().enumerate() {
            if *v > 0.0 {
                let x = tg.configuration(k);
                let pts: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
                potential += v * Coulomb.value(&pts);
            }
        }
        potential *= tg.cell_volume();
        assert!((t.kinetic_term - kinetic).abs() <= 1e-12 * kinetic);
        assert!((t.potential_term - potential).abs() <= 1e-12 * potential);
        assert!((t.total - (kinetic + potential)).abs() <= 1e-12 * t.total);
    }

    #[test]
    fn zero_eta_is_potential_only_and_feasible() {
        let rho = fixtures::semiclassical_density().unwrap();
        let problem = TransportProblem::new(2, &rho).unwrap();
        let sol = solve_lp(&problem).unwrap();
        let setup = TrialSetup::new(&rho, &sol.plan).unwrap();
        let (lo, hi) = setup.eps_range().unwrap();
        for eps in [lo, 0.5 * (lo + hi), hi] {
            let t = setup.trial_energy(eps, 0.0).unwrap();
            assert_eq!(t.kinetic_term, 0.0);
            assert_eq!(t.total, t.potential_term);
            assert!(t.total >= sol.value - 1e-8);
        }
    }

    #[test]
    fn potential_term_approaches_transport_value() {
        let rho = fixtures::semiclassical_density().unwrap();
        let sol = solve_lp(&TransportProblem::new(2, &rho).unwrap()).unwrap();
        let setup = TrialSetup::new(&rho, &sol.plan).unwrap();
        let (lo, hi) = setup.eps_range().unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..5 {
            let eps = hi - (hi - lo) * k as f64 / 4.0;
            let err = setup.potential_term(eps).unwrap() - sol.value;
            assert!(err >= -1e-12);
            assert!(err <= eps * eps * setup.coulomb_curvature(eps));
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn optimal_eps_moves_with_eta() {
        let setup = two_point_setup();
        let (_, hi) = setup.eps_range().unwrap();
        let large = setup.optimize_eps(1e3).unwrap();
        assert!((large.energy.eps - hi).abs() < 1e-6 * hi);
        let mut prev = f64::INFINITY;
        for eta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let e = setup.optimize_eps(eta).unwrap().energy.eps;
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn empty_eps_interval() {
        let coarse = crate::grid::Grid::line(0.0, 0.25, 8).unwrap();
        let plan = AtomicPlan::new(2, 1, vec![crate::plan::Atom::line(&[0.5, 1.0], 1.0)]).unwrap();
        let rho = crate::plan::marginal(&plan, &coarse, 0.0).unwrap();
        let setup = TrialSetup::new(&rho, &plan).unwrap();
        assert!(matches!(setup.eps_range(), Err(Error::EmptyEpsInterval { .. })));
        assert!(setup.optimize_eps(0.1).is_err());
    }

    #[test]
    fn semiclassical_sweep_rate() {
        let rho = fixtures::semiclassical_density().unwrap();
        let etas = log_spaced(1e-4, 1e-1, 10).unwrap();
        let s = sweep(&rho, 2, &etas).unwrap();
        for r in &s.records {
            assert!(r.error.is_none(), "{r:?}");
        }
        assert!(s.min_gap() >= -1e-8);
        assert!(s.within_assembled_bound());
        let gaps: Vec<f64> = s.records.iter().map(|r| r.gap.unwrap()).collect();
        assert!(gaps.windows(2).all(|w| w[0] <= w[1] + 1e-8));
        assert!((0.4..=0.6).contains(&s.fitted_slope), "slope {}", s.fitted_slope);
    }
}
