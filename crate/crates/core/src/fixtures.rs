//! Built-in desk-scale instances used by the self-test, the acceptance
//! suite and the browser demo.

use crate::grid::{Grid, GridDensity};
use crate::perm::permutations;
use crate::plan::{marginal, Atom, AtomicPlan};
use crate::Result;

/// A plan on grid nodes together with its binned marginal.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub plan: AtomicPlan,
    pub rho: GridDensity,
    /// Mollifier widths the fixture is exercised with.
    pub eps: Vec<f64>,
}

impl Fixture {
    fn new(name: &'static str, plan: AtomicPlan, grid: &Grid, eps: Vec<f64>) -> Result<Self> {
        let plan = plan.symmetrize();
        let rho = marginal(&plan, grid, 0.0)?;
        Ok(Self { name, plan, rho, eps })
    }

    pub fn eps_values(&self) -> Vec<f64> {
        self.eps.clone()
    }

    pub fn particles(&self) -> usize {
        self.plan.n
    }
}

/// cos^{2p} bump of half-width `width` centred at `centre`.
pub fn cos_bump(x: f64, centre: f64, width: f64, power: i32) -> f64 {
    let t = x - centre;
    if t.abs() >= width {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * t / width).cos().powi(2 * power)
    }
}

/// Probability masses proportional to `profile` at the nodes of `grid`.
fn node_masses(grid: &Grid, profile: impl Fn(f64) -> f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..grid.len()).map(|i| profile(grid.coord(i, 0))).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// N translated copies of one bump: the atom starting at node `i` is
/// `(x_i, x_i + D, ..., x_i + (N−1)D)`, weighted by the bump mass at `x_i`.
fn translation_plan(grid: &Grid, n: usize, shift_nodes: usize, first: &[f64]) -> Result<AtomicPlan> {
    let h = grid.spacing();
    let atoms = first
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| {
            let x0 = grid.coord(i, 0);
            let coords: Vec<f64> = (0..n).map(|k| x0 + (k * shift_nodes) as f64 * h).collect();
            Atom::line(&coords, m)
        })
        .collect();
    AtomicPlan::new(n, 1, atoms)
}

/// N = 1: a smooth density on `nodes` nodes, with ε = 3h and 5h.
pub fn smooth_single(nodes: usize) -> Result<Fixture> {
    let h = 1.0 / nodes as f64;
    let grid = Grid::line(0.0, h, nodes)?;
    let masses = node_masses(&grid, |x| cos_bump(x, 0.5, 0.25, 2));
    let atoms = masses
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| Atom::line(&[grid.coord(i, 0)], m))
        .collect();
    let plan = AtomicPlan::new(1, 1, atoms)?;
    Fixture::new("smooth single particle", plan, &grid, vec![3.0 * h, 5.0 * h])
}

/// N = 2: two point sites 20 nodes apart on a 32-node grid.
pub fn two_points() -> Result<Fixture> {
    let h = 0.05;
    let grid = Grid::line(0.0, h, 32)?;
    let plan = AtomicPlan::new(2, 1, vec![Atom::line(&[6.0 * h, 26.0 * h], 1.0)])?;
    let alpha = 20.0 * h;
    Fixture::new("two points", plan, &grid, vec![alpha / 8.0, alpha / 16.0])
}

/// N = 2: a smooth bump and its translate by 32 nodes.
pub fn two_bumps(nodes: usize) -> Result<Fixture> {
    let h = 1.0 / 64.0;
    let grid = Grid::line(0.0, h, nodes)?;
    let shift = 32;
    let first = node_masses(&grid, |x| cos_bump(x, 14.0 * h, 6.0 * h, 2));
    let plan = translation_plan(&grid, 2, shift, &first)?;
    let alpha = shift as f64 * h;
    Fixture::new("two bumps", plan, &grid, vec![alpha / 8.0, alpha / 16.0])
}

/// N = 3: the uniform permutation plan on three point sites.
pub fn three_points() -> Result<Fixture> {
    let h = 1.0 / 64.0;
    let grid = Grid::line(0.0, h, 64)?;
    let sites = [12.0 * h, 32.0 * h, 52.0 * h];
    let atoms = permutations(3)
        .into_iter()
        .map(|(p, _)| Atom::line(&[sites[p[0]], sites[p[1]], sites[p[2]]], 1.0 / 6.0))
        .collect();
    let plan = AtomicPlan::new(3, 1, atoms)?;
    let alpha = 20.0 * h;
    Fixture::new("three points", plan, &grid, vec![alpha / 8.0, alpha / 16.0])
}

/// N = 3: three translated bumps coupled cyclically.
pub fn three_bumps() -> Result<Fixture> {
    let h = 1.0 / 64.0;
    let grid = Grid::line(0.0, h, 64)?;
    let first = node_masses(&grid, |x| cos_bump(x, 10.0 * h, 4.5 * h, 2));
    let plan = translation_plan(&grid, 3, 20, &first)?;
    let alpha = 20.0 * h;
    Fixture::new("three bumps", plan, &grid, vec![alpha / 8.0, alpha / 16.0])
}

/// The five plans used for the exact-identity checks.
pub fn marginal_fixtures() -> Result<Vec<Fixture>> {
    Ok(vec![
        smooth_single(48)?,
        two_points()?,
        two_bumps(64)?,
        three_points()?,
        three_bumps()?,
    ])
}

/// Mollifier width of the kinetic refinement study.
pub const KINETIC_EPS: f64 = 0.2;

/// N = 2 smooth instance used to compare the two evaluations of the
/// kinetic energy under grid refinement: a cos⁴ bump of half-width 2 and
/// its translate by about one unit (rounded to whole cells) on `[0, 5.9)`.
pub fn kinetic_study(nodes: usize) -> Result<Fixture> {
    let length = 4.0 * KINETIC_EPS + 2.0 * 2.0 + 1.0 + 0.1;
    let h = length / nodes as f64;
    let grid = Grid::line(0.0, h, nodes)?;
    let width = 2.0;
    let centre = 2.0 * KINETIC_EPS + width + 0.05;
    let shift = (1.0 / h).round() as usize;
    let first = node_masses(&grid, |x| cos_bump(x, centre, width, 2));
    let plan = translation_plan(&grid, 2, shift, &first)?;
    Fixture::new("kinetic study", plan, &grid, vec![KINETIC_EPS])
}

/// N = 2 instance for the ε-sweep of the Coulomb energy error: a bump of
/// half-width 0.5 and its translate by 1.5, spacing `h`.
pub fn potential_study(h: f64) -> Result<Fixture> {
    let width = 0.5;
    let shift = (1.5 / h).round() as usize;
    let margin = (0.2 / h).ceil() as usize + 2;
    let wn = (width / h).round() as usize;
    let nodes = 2 * margin + 2 * wn + shift + 1;
    let grid = Grid::line(0.0, h, nodes)?;
    let centre = (margin + wn) as f64 * h;
    let first = node_masses(&grid, |x| cos_bump(x, centre, width, 2));
    let plan = translation_plan(&grid, 2, shift, &first)?;
    Fixture::new("potential study", plan, &grid, vec![0.1, 0.05, 0.025])
}

/// ρ = ½δ₀ + ½δ₁.
pub fn two_site_density() -> Result<GridDensity> {
    GridDensity::from_values(Grid::line(0.0, 1.0, 2)?, vec![0.5, 0.5])
}

/// ρ = ⅓(δ₀ + δ₁ + δ₂).
pub fn three_site_density() -> Result<GridDensity> {
    GridDensity::from_values(Grid::line(0.0, 1.0, 3)?, vec![1.0 / 3.0; 3])
}

/// A unimodal density on 16 equispaced sites in [−1, 1].
pub fn sixteen_site_density() -> Result<GridDensity> {
    let h = 2.0 / 15.0;
    let grid = Grid::line(-1.0, h, 16)?;
    let values = (0..16)
        .map(|i| {
            let x = -1.0 + i as f64 * h;
            1.25 - x * x
        })
        .collect();
    GridDensity::normalized(grid, values)
}

/// Spacing of the semiclassical instance.
pub const SEMICLASSICAL_SPACING: f64 = 5.0;

/// A smooth N = 2 density on 32 sites: two cos⁴ bumps of 16 sites each,
/// 24 cells apart, embedded in a grid wide enough for ε up to a quarter of
/// the separation.
pub fn semiclassical_density() -> Result<GridDensity> {
    let h = SEMICLASSICAL_SPACING;
    let shift = 24;
    let margin = shift / 2 + 2;
    let grid_nodes = 2 * margin + shift + 16;
    let grid = Grid::line(0.0, h, grid_nodes)?;
    // centre halfway between nodes so that exactly 16 nodes are covered
    let centre = (margin as f64 + 7.5) * h;
    let width = 8.0 * h;
    let first = node_masses(&grid, |x| cos_bump(x, centre, width, 2));
    let mut values = vec![0.0; grid.len()];
    for (i, m) in first.iter().enumerate() {
        if *m > 0.0 {
            values[i] += 0.5 * m / h;
            values[i + shift] += 0.5 * m / h;
        }
    }
    GridDensity::from_values(grid, values)
}
