use llot_core::io::{plan_to_json, read_density_csv, read_plan_json, write_density_csv};
use llot_core::mmot::{check_dual, solve_lp, solve_sinkhorn, SinkhornOptions, TransportProblem};
use llot_core::{Grid, GridDensity, MassConvention};
use proptest::prelude::*;

/// Random site masses on a 12-node line, each at most 1/2 so that a
/// two-particle plan without double occupation exists.
fn feasible_marginal() -> impl Strategy<Value = GridDensity> {
    proptest::collection::vec(0.0f64..1.0, 12).prop_filter_map("infeasible", |raw| {
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let grid = Grid::line(0.0, 0.25, 12).unwrap();
        let values: Vec<f64> = raw.iter().map(|v| v / total / 0.25).collect();
        let rho = GridDensity::from_values(grid, values).ok()?;
        rho.node_masses().iter().all(|&m| m <= 0.5 - 1e-6).then_some(rho)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lp_solution_is_certified(rho in feasible_marginal()) {
        let problem = TransportProblem::new(2, &rho).unwrap();
        let sol = solve_lp(&problem).unwrap();
        prop_assert!(sol.marginal_residual <= 1e-10);
        let v = sol.dual_potential.clone().unwrap();
        let check = check_dual(&sol, &problem, &v, 0, 0).unwrap();
        prop_assert!(check.passed, "{check:?}");
        prop_assert!(check.duality_gap.abs() <= 1e-8);
    }

    #[test]
    fn entropic_value_sits_above_the_lp_value(rho in feasible_marginal()) {
        let problem = TransportProblem::new(2, &rho).unwrap();
        let exact = solve_lp(&problem).unwrap().value;
        let entropic = solve_sinkhorn(&problem, &SinkhornOptions::new(20.0)).unwrap().value;
        prop_assert!(entropic >= exact - 1e-9);
    }

    #[test]
    fn density_csv_roundtrips(rho in feasible_marginal()) {
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rho).unwrap();
        let back = read_density_csv(buf.as_slice(), MassConvention::Probability).unwrap();
        prop_assert_eq!(back.grid().points_per_axis(), rho.grid().points_per_axis());
        prop_assert!(back.l1_distance(&rho) <= 1e-14);
    }
}

#[test]
fn two_sites_one_apart() {
    let grid = Grid::line(0.0, 1.0, 2).unwrap();
    let rho = GridDensity::from_values(grid, vec![0.5, 0.5]).unwrap();
    let sol = solve_lp(&TransportProblem::new(2, &rho).unwrap()).unwrap();
    assert!((sol.value - 1.0).abs() <= 1e-12);
}

#[test]
fn plan_json_roundtrips() {
    let grid = Grid::line(0.0, 0.5, 5).unwrap();
    let rho = GridDensity::from_values(grid, vec![0.4, 0.4, 0.4, 0.4, 0.4]).unwrap();
    let plan = solve_lp(&TransportProblem::new(2, &rho).unwrap()).unwrap().plan;
    let back = read_plan_json(plan_to_json(&plan).unwrap().as_bytes()).unwrap();
    assert_eq!(back, plan);
}
