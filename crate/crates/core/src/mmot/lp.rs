//! Exact solution of the discrete problem as a linear program over subsets.

use super::simplex::solve_standard_form;
use super::{SolverKind, TransportProblem, TransportSolution};
use crate::{Error, Result};

/// Largest number of subset variables the dense simplex accepts.
pub const MAX_LP_VARIABLES: usize = 200_000;

/// Subset weights below this are treated as zero when building the plan.
const WEIGHT_FLOOR: f64 = 1e-15;

/// Solves the problem exactly.
///
/// One variable per N-subset `S` of the support with cost Φ(S); one
/// equality per site `i`: Σ_{S∋i} p_S = N m_i. The multipliers of these
/// rows form the Kantorovich potential.
pub fn solve_lp(problem: &TransportProblem) -> Result<TransportSolution> {
    let variables = problem.subset_count();
    if variables > MAX_LP_VARIABLES as u128 {
        return Err(Error::ProblemTooLarge {
            variables,
            limit: MAX_LP_VARIABLES,
        });
    }
    let subsets = problem.subsets();
    if subsets.is_empty() {
        return Err(Error::NoFeasiblePlan);
    }
    let rows = problem.sites().len();
    let cols = subsets.len();
    let n = problem.particles() as f64;
    let mut a = vec![0.0; rows * cols];
    for (j, s) in subsets.iter().enumerate() {
        for &i in s {
            a[i * cols + j] = 1.0;
        }
    }
    let b: Vec<f64> = problem.masses().iter().map(|m| n * m).collect();
    let c: Vec<f64> = subsets.iter().map(|s| problem.cost(s)).collect();
    let lp = solve_standard_form(&a, &b, &c)?;

    let plan = problem.expand(&subsets, &lp.x, WEIGHT_FLOOR)?;
    let value = plan.expectation(|x| {
        let pts: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
        crate::regularizer::SymmetricFunction::value(&crate::regularizer::Coulomb, &pts)
    });
    let mut potential = vec![0.0; problem.marginal().grid().len()];
    for (k, &node) in problem.sites().iter().enumerate() {
        potential[node] = lp.y[k];
    }
    let dual: f64 = problem.masses().iter().zip(&lp.y).map(|(m, y)| m * y).sum::<f64>() * n;
    let residual = problem.marginal_residual(&plan)?;
    Ok(TransportSolution {
        plan,
        value,
        dual_potential: Some(potential),
        solver: SolverKind::Lp,
        marginal_residual: residual,
        duality_gap: Some(value - dual),
        entropic_objective: None,
        iterations: lp.pivots,
    })
}
