//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string; the page parses it and
//! draws. The work is done by plain Rust functions returning
//! `serde_json::Value` so that they can be tested natively.

use llot_core::fixtures::cos_bump;
use llot_core::mmot::{solve_lp, solve_sinkhorn, SinkhornOptions, TransportProblem, TransportSolution};
use llot_core::plan::marginal;
use llot_core::{Atom, AtomicPlan, BumpProfile, Grid, GridDensity, MixedStateKernel, RegularizedPlan, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Nodes of the demo grid for the regularizer.
pub const DEMO_NODES: usize = 96;

fn two_bump_plan(grid: &Grid, shift: usize, width: usize) -> Result<AtomicPlan> {
    let h = grid.spacing();
    let centre = (DEMO_NODES - shift) as f64 * h / 2.0;
    let raw: Vec<f64> = (0..grid.len())
        .map(|i| cos_bump(grid.coord(i, 0), centre, width as f64 * h, 2))
        .collect();
    let total: f64 = raw.iter().sum();
    let atoms = raw
        .iter()
        .enumerate()
        .filter(|(i, &m)| m > 0.0 && i + shift < grid.len())
        .map(|(i, &m)| Atom::line(&[grid.coord(i, 0), grid.coord(i + shift, 0)], m / total))
        .collect();
    Ok(AtomicPlan::new(2, 1, atoms)?.symmetrize())
}

fn demo_plan(shift: usize, width: usize, eps: f64) -> Result<(GridDensity, RegularizedPlan)> {
    let grid = Grid::line(0.0, 1.0 / DEMO_NODES as f64, DEMO_NODES)?;
    let plan = two_bump_plan(&grid, shift, width)?;
    let rho = marginal(&plan, &grid, 0.0)?;
    let rp = RegularizedPlan::build(&plan, &rho, eps)?;
    Ok((rho, rp))
}

/// Regularizes the plan coupling a bump with its translate by `shift`
/// nodes. Returns the marginal, the recovered marginal, the 2D density of
/// P_ε and the kinetic figures.
pub fn regularize_value(shift: usize, width: usize, eps: f64) -> Result<Value> {
    let (rho, rp) = demo_plan(shift, width, eps)?;
    let grid = rho.grid();
    let moments = BumpProfile::new(1)?.moments()?;
    let recovered = rp.density_of();
    let gamma = MixedStateKernel::new(&rp);
    let heat: Vec<f64> = (0..DEMO_NODES)
        .flat_map(|a| (0..DEMO_NODES).map(move |b| (a, b)))
        .map(|(a, b)| rp.evaluate_nodes(&[a, b]))
        .collect();
    Ok(json!({
        "nodes": DEMO_NODES,
        "x": (0..DEMO_NODES).map(|i| grid.coord(i, 0)).collect::<Vec<_>>(),
        "rho": rho.values(),
        "recovered": recovered.values(),
        "l1": recovered.l1_distance(&rho),
        "separation": rp.separation(),
        "heat": heat,
        "trace": gamma.trace()?,
        "kinetic_sqrt": rp.kinetic_of_sqrt()?,
        "kinetic_bound": rp.kinetic_bound(&moments),
        "kinetic_trace": gamma.kinetic_trace(&moments),
    }))
}

fn unit_sites(masses: &[f64]) -> Result<GridDensity> {
    GridDensity::normalized(Grid::line(0.0, 1.0, masses.len())?, masses.to_vec())
}

fn solution_value(sol: &TransportSolution) -> Value {
    json!({
        "value": sol.value,
        "residual": sol.marginal_residual,
        "iterations": sol.iterations,
        "atoms": sol.plan.atoms.iter().filter(|a| a.weight > 1e-9).map(|a| json!({
            "x": a.points.iter().map(|p| p[0]).collect::<Vec<_>>(),
            "w": a.weight,
        })).collect::<Vec<_>>(),
    })
}

/// Exact Coulomb transport for `n` particles on unit-spaced sites.
pub fn transport_value(masses: &[f64], n: usize) -> Result<Value> {
    let problem = TransportProblem::new(n, &unit_sites(masses)?)?;
    let sol = solve_lp(&problem)?;
    let mut out = solution_value(&sol);
    out["dual"] = json!(sol.dual_potential);
    out["duality_gap"] = json!(sol.duality_gap);
    Ok(out)
}

/// Entropic transport at inverse temperature `beta`, next to the exact value.
pub fn entropic_value(masses: &[f64], n: usize, beta: f64) -> Result<Value> {
    let problem = TransportProblem::new(n, &unit_sites(masses)?)?;
    let exact = solve_lp(&problem)?.value;
    let sol = solve_sinkhorn(&problem, &SinkhornOptions::new(beta))?;
    let mut out = solution_value(&sol);
    out["exact"] = json!(exact);
    out["entropic_objective"] = json!(sol.entropic_objective);
    Ok(out)
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn regularize(shift: usize, width: usize, eps: f64) -> std::result::Result<String, JsError> {
    to_js(regularize_value(shift, width, eps))
}

#[wasm_bindgen]
pub fn transport(masses: &[f64], n: usize) -> std::result::Result<String, JsError> {
    to_js(transport_value(masses, n))
}

#[wasm_bindgen]
pub fn entropic(masses: &[f64], n: usize, beta: f64) -> std::result::Result<String, JsError> {
    to_js(entropic_value(masses, n, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularized_marginal_matches() {
        let v = regularize_value(32, 6, 2.0 / DEMO_NODES as f64).unwrap();
        assert!(v["l1"].as_f64().unwrap() <= 1e-10);
        assert!((v["trace"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
        assert_eq!(v["heat"].as_array().unwrap().len(), DEMO_NODES * DEMO_NODES);
        let lhs = v["kinetic_sqrt"].as_f64().unwrap();
        assert!(lhs <= v["kinetic_trace"]["quadrature"].as_f64().unwrap() * (1.0 + 1e-9));
    }

    #[test]
    fn every_slider_setting_fits_the_grid() {
        let h = 1.0 / DEMO_NODES as f64;
        for shift in 16..=44 {
            for width in 2..=10 {
                for half_steps in 2..=12 {
                    let eps = 0.5 * half_steps as f64 * h;
                    match demo_plan(shift, width, eps) {
                        Ok(_) => assert!(4.0 * eps < shift as f64 * h),
                        Err(e) => assert!(matches!(e, llot_core::Error::MollifierTooWide { .. }), "{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn two_sites() {
        let v = transport_value(&[1.0, 1.0], 2).unwrap();
        assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn entropic_value_is_close_at_large_beta() {
        let v = entropic_value(&[1.0, 1.0, 1.0], 3, 200.0).unwrap();
        let exact = v["exact"].as_f64().unwrap();
        assert!((exact - 2.5).abs() <= 1e-12);
        assert!((v["value"].as_f64().unwrap() - exact).abs() <= 1e-3);
    }
}
