//! Coulomb multi-marginal optimal transport on a finite set of sites.
//!
//! Plans are symmetric, so the unknowns are indexed by N-element subsets
//! of the support of ρ (configurations with two particles on one site
//! have infinite cost and are left out). A subset weight `p_S` is spread
//! evenly over the N! orderings of `S` when the plan is materialized.

mod lp;
mod simplex;
mod sinkhorn;

pub use lp::{solve_lp, MAX_LP_VARIABLES};
pub use simplex::{solve_standard_form, LpSolution};
pub use sinkhorn::{solve_sinkhorn, SinkhornOptions};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grid::GridDensity;
use crate::perm::{factorial, permutations};
use crate::plan::{separation, Atom, AtomicPlan, SeparationReport};
use crate::{Error, Result};

/// Weights below this fraction of the total mass are dropped before
/// separation diagnostics.
pub const PRUNE_THRESHOLD: f64 = 1e-9;

/// Which algorithm produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lp,
    Sinkhorn,
}

/// Minimize ∫Φ dP over symmetric N-particle plans with marginal ρ.
#[derive(Clone, Debug)]
pub struct TransportProblem {
    n: usize,
    marginal: GridDensity,
    sites: Vec<usize>,
    masses: Vec<f64>,
    coords: Vec<Vec<f64>>,
}

impl TransportProblem {
    /// Coulomb problem for `n` particles; `marginal` is rescaled to mass 1
    /// according to its convention.
    pub fn new(n: usize, marginal: &GridDensity) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("transport needs at least 2 particles".into()));
        }
        let marginal = marginal.to_probability();
        let mass = marginal.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensity(format!("marginal mass {mass} is not 1")));
        }
        let sites = marginal.support();
        if sites.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let node_masses = marginal.node_masses();
        let masses = sites.iter().map(|&i| node_masses[i]).collect();
        let coords = sites.iter().map(|&i| marginal.grid().node(i)).collect();
        Ok(Self {
            n,
            marginal,
            sites,
            masses,
            coords,
        })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn marginal(&self) -> &GridDensity {
        &self.marginal
    }

    /// Grid nodes carrying mass.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Probability mass of each site.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn site_coords(&self, s: usize) -> &[f64] {
        &self.coords[s]
    }

    /// Σ_{j<k} |x_j − x_k|^{−1} for site indices; +∞ on repeated sites.
    pub fn cost(&self, subset: &[usize]) -> f64 {
        let mut c = 0.0;
        for j in 0..subset.len() {
            for k in j + 1..subset.len() {
                let d = crate::plan::euclid(&self.coords[subset[j]], &self.coords[subset[k]]);
                if d == 0.0 {
                    return f64::INFINITY;
                }
                c += 1.0 / d;
            }
        }
        c
    }

    /// Number of N-element subsets of the support.
    pub fn subset_count(&self) -> u128 {
        binomial(self.sites.len() as u128, self.n as u128)
    }

    /// All N-element subsets in lexicographic order.
    pub fn subsets(&self) -> Vec<Vec<usize>> {
        let s = self.sites.len();
        let n = self.n;
        let mut out = Vec::new();
        if n > s {
            return out;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            out.push(idx.clone());
            let mut k = n;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < s - n + k {
                    break;
                }
                if k == 0 {
                    return out;
                }
            }
            idx[k] += 1;
            for j in k + 1..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    /// Symmetric atomic plan from subset weights (entries ≤ `floor` are
    /// dropped, the rest renormalized).
    pub fn expand(&self, subsets: &[Vec<usize>], weights: &[f64], floor: f64) -> Result<AtomicPlan> {
        let perms = permutations(self.n);
        let kept: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > floor)
            .map(|(i, &w)| (i, w))
            .collect();
        if kept.is_empty() {
            return Err(Error::PrunedEmpty);
        }
        let total: f64 = kept.iter().map(|k| k.1).sum();
        let share = 1.0 / factorial(self.n);
        let mut atoms = Vec::with_capacity(kept.len() * perms.len());
        for (i, w) in kept {
            for (p, _) in &perms {
                let pts = p.iter().map(|&j| self.coords[subsets[i][j]].clone()).collect();
                atoms.push(Atom::new(pts, w / total * share));
            }
        }
        AtomicPlan::new(self.n, self.marginal.grid().dim(), atoms)
    }

    /// Σ_i |μ_i − m_i| for a plan on the sites.
    pub fn marginal_residual(&self, plan: &AtomicPlan) -> Result<f64> {
        let masses = crate::plan::marginal_masses(plan, self.marginal.grid())?;
        let target = self.marginal.node_masses();
        Ok(masses.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum())
    }
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Output of either solver.
#[derive(Clone, Debug, Serialize)]
pub struct TransportSolution {
    pub plan: AtomicPlan,
    /// ∫Φ dP of the returned plan.
    pub value: f64,
    /// Kantorovich potential per grid node (zero off the support).
    pub dual_potential: Option<Vec<f64>>,
    pub solver: SolverKind,
    pub marginal_residual: f64,
    /// value − N∫v ρ.
    pub duality_gap: Option<f64>,
    /// ⟨Φ, P⟩ + β^{−1} Σ P log P for the entropic solver.
    pub entropic_objective: Option<f64>,
    pub iterations: usize,
}

/// Result of checking a dual potential against the cost.
#[derive(Clone, Debug, Serialize)]
pub struct DualCheck {
    pub configurations_checked: usize,
    /// max over checked X of Σ_j v(x_j) − Φ(X); ≤ 1e-8 passes.
    pub max_violation: f64,
    pub worst_configuration: Option<Vec<Vec<f64>>>,
    /// max over the plan's support of |Φ(X) − Σ_j v(x_j)|.
    pub complementary_slackness: f64,
    pub duality_gap: f64,
    pub passed: bool,
}

/// Verifies Σ_j v(x_j) ≤ Φ(X) + 1e-8 on every N-subset of the support,
/// or on `samples` random subsets (seeded) when there are more than
/// [`MAX_LP_VARIABLES`].
pub fn check_dual(
    sol: &TransportSolution,
    problem: &TransportProblem,
    potential: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DualCheck> {
    let grid = problem.marginal().grid();
    if potential.len() != grid.len() {
        return Err(Error::InvalidParameter("potential must have one value per grid node".into()));
    }
    let v: Vec<f64> = problem.sites().iter().map(|&i| potential[i]).collect();
    let subsets = if problem.subset_count() <= MAX_LP_VARIABLES as u128 {
        problem.subsets()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = problem.sites().len();
        (0..samples)
            .map(|_| {
                let mut pick: Vec<usize> = Vec::with_capacity(problem.n);
                while pick.len() < problem.n {
                    let c = rng.random_range(0..s);
                    if !pick.contains(&c) {
                        pick.push(c);
                    }
                }
                pick.sort_unstable();
                pick
            })
            .collect()
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    for s in &subsets {
        let viol = s.iter().map(|&i| v[i]).sum::<f64>() - problem.cost(s);
        if viol > max_violation {
            max_violation = viol;
            worst = Some(s.iter().map(|&i| problem.site_coords(i).to_vec()).collect());
        }
    }
    let mut slack: f64 = 0.0;
    for atom in &sol.plan.atoms {
        let nodes: Vec<usize> = atom
            .points
            .iter()
            .map(|p| grid.locate(p))
            .collect::<Result<_>>()?;
        let phi = {
            let pts: Vec<&[f64]> = atom.points.iter().map(|p| p.as_slice()).collect();
            crate::regularizer::SymmetricFunction::value(&crate::regularizer::Coulomb, &pts)
        };
        let pot: f64 = nodes.iter().map(|&i| potential[i]).sum();
        slack = slack.max((phi - pot).abs());
    }
    let n = problem.particles() as f64;
    let dual_value: f64 = problem
        .masses()
        .iter()
        .zip(&v)
        .map(|(m, vi)| m * vi)
        .sum::<f64>()
        * n;
    let gap = sol.value - dual_value;
    Ok(DualCheck {
        configurations_checked: subsets.len(),
        max_violation,
        worst_configuration: if max_violation > 1e-8 { worst } else { None },
        complementary_slackness: slack,
        duality_gap: gap,
        passed: max_violation <= 1e-8 && gap >= -1e-8,
    })
}

/// α̂ of the solution's plan after pruning weights below
/// [`PRUNE_THRESHOLD`].
pub fn plan_separation(sol: &TransportSolution) -> Result<SeparationReport> {
    let pruned = sol.plan.pruned(PRUNE_THRESHOLD)?;
    separation(&pruned)
}
