//! Entropic regularization solved by symmetric multi-marginal Sinkhorn.
//!
//! The iterate is `P_S = exp(Σ_{i∈S} u_i − βΦ(S))` over N-subsets, with a
//! single potential `u` shared by all marginals. Each sweep moves `u`
//! a fraction `1/N` of the way toward the exact marginal fit.

use serde::Serialize;

use super::{SolverKind, TransportProblem, TransportSolution, PRUNE_THRESHOLD};
use crate::perm::factorial;
use crate::{Error, Result};

/// Above this β the plain (non-log) iteration refuses to run.
pub const PLAIN_BETA_LIMIT: f64 = 50.0;

/// Largest number of subsets the iteration is allowed to hold.
pub const MAX_SINKHORN_VARIABLES: usize = 20_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct SinkhornOptions {
    /// Inverse temperature.
    pub beta: f64,
    /// Stop when Σ_i |μ_i − m_i| falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Work with log-potentials and log-sum-exp.
    pub log_domain: bool,
    /// Reach `beta` through a doubling sequence starting at β ≤ 1.
    pub anneal: bool,
}

impl SinkhornOptions {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            tol: 1e-10,
            max_iter: 500_000,
            log_domain: true,
            anneal: true,
        }
    }
}

struct Subsets {
    n: usize,
    flat: Vec<u32>,
    cost: Vec<f64>,
}

impl Subsets {
    fn len(&self) -> usize {
        self.cost.len()
    }

    fn get(&self, k: usize) -> &[u32] {
        &self.flat[k * self.n..(k + 1) * self.n]
    }
}

/// Runs the iteration at fixed β from `u`; returns the sweep count.
fn iterate(
    subsets: &Subsets,
    masses: &[f64],
    beta: f64,
    u: &mut [f64],
    opts: &SinkhornOptions,
    tol: f64,
) -> Result<usize> {
    let n = subsets.n as f64;
    let theta = 1.0 / n;
    let s = masses.len();
    let log_m: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let mut t = vec![0.0; subsets.len()];
    for it in 1..=opts.max_iter {
        let log_mu: Vec<f64> = if opts.log_domain {
            let mut peak = vec![f64::NEG_INFINITY; s];
            for (k, tk) in t.iter_mut().enumerate() {
                let idx = subsets.get(k);
                *tk = idx.iter().map(|&i| u[i as usize]).sum::<f64>() - beta * subsets.cost[k];
                for &i in idx {
                    peak[i as usize] = peak[i as usize].max(*tk);
                }
            }
            let mut acc = vec![0.0; s];
            for (k, tk) in t.iter().enumerate() {
                for &i in subsets.get(k) {
                    acc[i as usize] += (tk - peak[i as usize]).exp();
                }
            }
            (0..s).map(|i| peak[i] + acc[i].ln() - n.ln()).collect()
        } else {
            let a: Vec<f64> = u.iter().map(|x| x.exp()).collect();
            let mut acc = vec![0.0; s];
            for k in 0..subsets.len() {
                let idx = subsets.get(k);
                let w = (-beta * subsets.cost[k]).exp() * idx.iter().map(|&i| a[i as usize]).product::<f64>();
                for &i in idx {
                    acc[i as usize] += w;
                }
            }
            if acc.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::NumericalOverflow { beta });
            }
            acc.iter().map(|v| (v / n).ln()).collect()
        };
        if log_mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow { beta });
        }
        let residual: f64 = log_mu
            .iter()
            .zip(masses)
            .map(|(lm, m)| (lm.exp() - m).abs())
            .sum();
        if residual <= tol {
            return Ok(it);
        }
        for i in 0..s {
            u[i] += theta * (log_m[i] - log_mu[i]);
        }
    }
    Ok(opts.max_iter)
}

/// Entropic solution; the plan is pruned at [`PRUNE_THRESHOLD`] of the
/// total mass. No dual certificate is produced.
pub fn solve_sinkhorn(problem: &TransportProblem, opts: &SinkhornOptions) -> Result<TransportSolution> {
    if !opts.beta.is_finite() || opts.beta <= 0.0 {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {}", opts.beta)));
    }
    if !opts.log_domain && opts.beta > PLAIN_BETA_LIMIT {
        return Err(Error::NumericalOverflow { beta: opts.beta });
    }
    let count = problem.subset_count();
    if count > MAX_SINKHORN_VARIABLES as u128 {
        return Err(Error::ProblemTooLarge {
            variables: count,
            limit: MAX_SINKHORN_VARIABLES,
        });
    }
    let list = problem.subsets();
    if list.is_empty() {
        return Err(Error::NoFeasiblePlan);
    }
    let subsets = Subsets {
        n: problem.particles(),
        flat: list.iter().flatten().map(|&i| i as u32).collect(),
        cost: list.iter().map(|s| problem.cost(s)).collect(),
    };
    let masses = problem.masses();

    let mut schedule = vec![opts.beta];
    if opts.anneal {
        while schedule[0] > 1.0 {
            let b = schedule[0] / 2.0;
            schedule.insert(0, b);
        }
    }
    let mut u: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let mut iterations = 0;
    let mut prev_beta = schedule[0];
    for (k, &beta) in schedule.iter().enumerate() {
        for x in u.iter_mut() {
            *x *= beta / prev_beta;
        }
        prev_beta = beta;
        let last = k + 1 == schedule.len();
        let tol = if last { opts.tol } else { opts.tol.max(1e-6) };
        iterations += iterate(&subsets, masses, beta, &mut u, opts, tol)?;
    }

    let beta = opts.beta;
    let mut weights: Vec<f64> = (0..subsets.len())
        .map(|k| subsets.get(k).iter().map(|&i| u[i as usize]).sum::<f64>() - beta * subsets.cost[k])
        .collect();
    let peak = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for w in weights.iter_mut() {
        *w = (*w - peak).exp();
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let log_orderings = factorial(problem.particles()).ln();
    let entropic: f64 = weights
        .iter()
        .zip(&subsets.cost)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| w * c + w * (w.ln() - log_orderings) / beta)
        .sum();

    let plan = problem.expand(&list, &weights, PRUNE_THRESHOLD)?;
    let value = plan.expectation(|x| {
        let pts: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
        crate::regularizer::SymmetricFunction::value(&crate::regularizer::Coulomb, &pts)
    });
    let residual = problem.marginal_residual(&plan)?;
    Ok(TransportSolution {
        plan,
        value,
        dual_potential: None,
        solver: SolverKind::Sinkhorn,
        marginal_residual: residual,
        duality_gap: None,
        entropic_objective: Some(entropic),
        iterations,
    })
}
