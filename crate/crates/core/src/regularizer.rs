//! The marginal-preserving regularization P ↦ P_ε.
//!
//! For an atomic plan P with marginal ρ,
//!
//! ```text
//! P_ε(x_1..x_N) = Σ_atoms w ∏_k T_{y_k}(x_k),
//! T_y(x)        = Σ_z ρ(x) κ_ε(x−z) κ_ε(z−y) / (ρ∗κ_ε)(z) · h^d,
//! ```
//!
//! with κ_ε the renormalized grid kernel. Each `T_y` is a probability
//! density, and Σ_y ρ(y)h^d T_y = ρ, which is what pins the marginal.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::grid::{h1_seminorm_sqrt, Grid, GridDensity};
use crate::mollifier::{convolve_with, DiscreteKernel, Moments};
use crate::plan::{marginal_masses, separation, AtomicPlan};
use crate::tensor::TensorGrid;
use crate::{ordered_map, Error, Result};

/// Divisions by the smoothed density below this value are refused.
pub const DENOM_FLOOR: f64 = 1e-300;

/// Tolerance on the L¹ distance between a supplied density and the plan's
/// binned marginal.
pub const MARGINAL_TOL: f64 = 1e-8;

/// Transition density from one atom site `y` to the grid.
#[derive(Clone, Debug)]
pub struct Column {
    pub node: usize,
    /// `(z, κ_ε(z−y) h^d / (ρ∗κ_ε)(z))` over the ε-ball around `y`.
    pub quadrature: Vec<(usize, f64)>,
    /// `(x, T_y(x))` sorted by node, zero entries dropped.
    pub values: Vec<(usize, f64)>,
    coords: Vec<Vec<f64>>,
}

impl Column {
    pub fn value_at(&self, node: usize) -> f64 {
        self.values
            .binary_search_by_key(&node, |e| e.0)
            .map(|i| self.values[i].1)
            .unwrap_or(0.0)
    }
}

/// The regularized plan P_ε, stored through its transition columns.
#[derive(Clone, Debug)]
pub struct RegularizedPlan {
    source: AtomicPlan,
    rho: GridDensity,
    kernel: DiscreteKernel,
    denom: GridDensity,
    columns: Vec<Column>,
    atom_columns: Vec<Vec<usize>>,
    separation: f64,
}

impl RegularizedPlan {
    /// Builds P_ε for a plan whose particles sit on nodes of `rho`'s grid.
    ///
    /// The plan is symmetrized first. `rho` must agree with the plan's
    /// binned marginal; internally the binned marginal itself is used so
    /// that the pinning identity holds to rounding.
    pub fn build(plan: &AtomicPlan, rho: &GridDensity, eps: f64) -> Result<Self> {
        let grid = rho.grid().clone();
        let kernel = DiscreteKernel::on_grid(&grid, eps)?;
        let source = plan.symmetrize();
        let alpha = if source.n >= 2 {
            separation(&source)?.min_pairwise_distance
        } else {
            f64::INFINITY
        };
        if eps >= alpha / 4.0 {
            return Err(Error::MollifierTooWide { eps, alpha });
        }

        let vol = grid.cell_volume();
        let masses = marginal_masses(&source, &grid)?;
        let pinned = GridDensity::from_values(grid.clone(), masses.iter().map(|m| m / vol).collect())?;
        let l1 = pinned.l1_distance(&rho.to_probability());
        if l1 > MARGINAL_TOL {
            return Err(Error::MarginalMismatch { l1 });
        }

        let mut site_ids: BTreeMap<usize, usize> = BTreeMap::new();
        let mut atom_columns = Vec::with_capacity(source.atoms.len());
        for atom in &source.atoms {
            let mut ids = Vec::with_capacity(source.n);
            for p in &atom.points {
                let node = grid.locate(p)?;
                let next = site_ids.len();
                ids.push(*site_ids.entry(node).or_insert(next));
            }
            atom_columns.push(ids);
        }
        let reach = 2 * kernel.radius();
        let n_axis = grid.points_per_axis();
        for &node in site_ids.keys() {
            if grid
                .multi_index(node)
                .iter()
                .any(|&i| i < reach || i + reach >= n_axis)
            {
                return Err(Error::KernelLeavesGrid { node });
            }
        }

        let denom = convolve_with(&pinned, &kernel);
        let mut sites: Vec<(usize, usize)> = site_ids.into_iter().collect();
        sites.sort_by_key(|s| s.1);
        let columns = sites
            .iter()
            .map(|&(node, _)| transition_column(&grid, &pinned, &denom, &kernel, node))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            source,
            rho: pinned,
            kernel,
            denom,
            columns,
            atom_columns,
            separation: alpha,
        })
    }

    pub fn source(&self) -> &AtomicPlan {
        &self.source
    }

    /// The pinned marginal ρ_P.
    pub fn rho(&self) -> &GridDensity {
        &self.rho
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn eps(&self) -> f64 {
        self.kernel.eps()
    }

    /// Cached ρ ∗ κ_ε.
    pub fn denom(&self) -> &GridDensity {
        &self.denom
    }

    pub fn particles(&self) -> usize {
        self.source.n
    }

    /// α̂ of the source plan (infinite for a single particle).
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// `(weight, column ids)` per atom of the symmetrized plan.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, &[usize])> {
        self.source
            .atoms
            .iter()
            .zip(&self.atom_columns)
            .map(|(a, c)| (a.weight, c.as_slice()))
    }

    /// P_ε at a configuration of grid nodes.
    pub fn evaluate_nodes(&self, nodes: &[usize]) -> f64 {
        self.atoms()
            .map(|(w, cols)| {
                w * cols
                    .iter()
                    .zip(nodes)
                    .map(|(&c, &x)| self.columns[c].value_at(x))
                    .product::<f64>()
            })
            .sum()
    }

    /// P_ε at a configuration whose points are grid nodes.
    pub fn evaluate(&self, config: &[Vec<f64>]) -> Result<f64> {
        if config.len() != self.particles() {
            return Err(Error::InvalidParameter(format!(
                "expected {} points, got {}",
                self.particles(),
                config.len()
            )));
        }
        let nodes = config
            .iter()
            .map(|p| self.grid().locate(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.evaluate_nodes(&nodes))
    }

    /// One-particle marginal of P_ε, averaged over the N coordinates.
    pub fn density_of(&self) -> GridDensity {
        let grid = self.grid();
        let vol = grid.cell_volume();
        let col_mass: Vec<f64> = self
            .columns
            .iter()
            .map(|c| c.values.iter().map(|e| e.1).sum::<f64>() * vol)
            .collect();
        let n = self.particles();
        let mut out = vec![0.0; grid.len()];
        for (w, cols) in self.atoms() {
            for k in 0..n {
                let others: f64 = (0..n).filter(|&j| j != k).map(|j| col_mass[cols[j]]).product();
                let f = w * others / n as f64;
                for &(x, t) in &self.columns[cols[k]].values {
                    out[x] += f * t;
                }
            }
        }
        GridDensity::from_values(grid.clone(), out).expect("marginal of a nonnegative plan")
    }

    /// The smoothed plan Q_ε = Σ_atoms w ∏ κ_ε(z_k − y_k).
    pub fn smoothed(&self) -> SmoothedPlan<'_> {
        SmoothedPlan { rp: self }
    }

    /// P_ε on the full N-fold tensor grid.
    pub fn tensor(&self) -> Result<(TensorGrid, Vec<f64>)> {
        let t = TensorGrid::new(self.grid(), self.particles())?;
        let mut values = vec![0.0; t.len()];
        let mut idx = vec![0usize; self.particles()];
        for (w, cols) in self.atoms() {
            let lists: Vec<&[(usize, f64)]> = cols.iter().map(|&c| self.columns[c].values.as_slice()).collect();
            for_each_tuple(&lists, |pos, prod| {
                for (k, &p) in pos.iter().enumerate() {
                    idx[k] = lists[k][p].0;
                }
                values[t.flat(&idx)] += w * prod;
            });
        }
        Ok((t, values))
    }

    /// ∫|∇√P_ε|² by finite differences on the tensor grid.
    pub fn kinetic_of_sqrt(&self) -> Result<f64> {
        let (t, values) = self.tensor()?;
        Ok(t.sqrt_dirichlet_energy(&values))
    }

    /// N(∫|∇√ρ|² + ε^{−2}∫|∇χ|²), the upper bound on ∫|∇√P_ε|².
    pub fn kinetic_bound(&self, moments: &Moments) -> f64 {
        self.particles() as f64
            * (h1_seminorm_sqrt(&self.rho) + self.kernel.mollifier().grad_sq(moments))
    }

    /// ∫Φ dP_ε as a finite sum over the support of P_ε.
    pub fn integrate(&self, phi: &dyn SymmetricFunction) -> f64 {
        let vol = self.grid().cell_volume().powi(self.particles() as i32);
        let items: Vec<(f64, &[usize])> = self.atoms().collect();
        let per_atom = ordered_map(&items, |&(w, cols)| {
            let lists: Vec<&[(usize, f64)]> = cols.iter().map(|&c| self.columns[c].values.as_slice()).collect();
            let mut pts: Vec<&[f64]> = cols.iter().map(|&c| self.columns[c].coords[0].as_slice()).collect();
            let mut acc = 0.0;
            for_each_tuple(&lists, |pos, prod| {
                for (k, &p) in pos.iter().enumerate() {
                    pts[k] = self.columns[cols[k]].coords[p].as_slice();
                }
                acc += prod * phi.value(&pts);
            });
            w * acc
        });
        per_atom.iter().sum::<f64>() * vol
    }

    /// ∫Φ dP over the atoms of the source plan.
    pub fn integrate_source(&self, phi: &dyn SymmetricFunction) -> f64 {
        self.source.expectation(|x| {
            let pts: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
            phi.value(&pts)
        })
    }

    /// Measured |∫Φ dP_ε − ∫Φ dP| and the a-priori bound
    /// ε²{Σ_j‖∇_jΦ‖ · ∫|∇ρ| · ∫|u|²χ² + 2Σ_{jk}‖∇_j∇_kΦ‖}.
    ///
    /// Sup norms are taken over grid configurations within 2ε (per axis)
    /// of the atoms, which contains every segment between an atom and a
    /// point of the support of P_ε.
    pub fn potential_error(&self, phi: &dyn SymmetricFunction, moments: &Moments) -> Result<PotentialCheck> {
        let n = self.particles();
        let grid = self.grid();
        let reach = 2 * self.kernel.radius() as isize;
        let side = (2 * reach + 1) as usize;
        let d = grid.dim();
        let box_offsets: Vec<Vec<isize>> = (0..side.pow(d as u32))
            .map(|mut f| {
                let mut off = vec![0isize; d];
                for a in (0..d).rev() {
                    off[a] = (f % side) as isize - reach;
                    f /= side;
                }
                off
            })
            .collect();
        // boxes around each site, shared by all atoms through the column ids
        let boxes: Vec<Vec<Vec<f64>>> = self
            .columns
            .iter()
            .map(|c| {
                box_offsets
                    .iter()
                    .filter_map(|o| grid.offset(c.node, o))
                    .map(|x| grid.node(x))
                    .collect()
            })
            .collect();

        let items: Vec<&[usize]> = self.atom_columns.iter().map(|c| c.as_slice()).collect();
        let per_atom = ordered_map(&items, |cols| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut grad = vec![0.0f64; n];
            let mut hess = vec![0.0f64; n * n];
            let lists: Vec<Vec<(usize, f64)>> = cols
                .iter()
                .map(|&c| (0..boxes[c].len()).map(|i| (i, 1.0)).collect())
                .collect();
            let refs: Vec<&[(usize, f64)]> = lists.iter().map(|l| l.as_slice()).collect();
            let mut pts: Vec<&[f64]> = cols.iter().map(|&c| boxes[c][0].as_slice()).collect();
            let mut failure = None;
            for_each_tuple(&refs, |pos, _| {
                if failure.is_some() {
                    return;
                }
                for (k, &p) in pos.iter().enumerate() {
                    pts[k] = boxes[cols[k]][p].as_slice();
                }
                for j in 0..n {
                    match phi.grad_block_norm(&pts, j) {
                        Some(g) => grad[j] = grad[j].max(g),
                        None => failure = Some(Error::MissingDerivatives),
                    }
                    for k in 0..n {
                        match phi.hessian_block_norm(&pts, j, k) {
                            Some(hv) => hess[j * n + k] = hess[j * n + k].max(hv),
                            None => failure = Some(Error::MissingDerivatives),
                        }
                    }
                }
            });
            match failure {
                Some(e) => Err(e),
                None => Ok((grad, hess)),
            }
        });
        let mut grad_sup = vec![0.0f64; n];
        let mut hess_sup = vec![0.0f64; n * n];
        for r in per_atom {
            let (g, h) = r?;
            for (a, b) in grad_sup.iter_mut().zip(g) {
                *a = a.max(b);
            }
            for (a, b) in hess_sup.iter_mut().zip(h) {
                *a = a.max(b);
            }
        }

        let regularized = self.integrate(phi);
        let exact = self.integrate_source(phi);
        let tv = self.rho.gradient_l1();
        let eps = self.eps();
        let m2 = moments.second_moment.value;
        let bound = eps * eps * (grad_sup.iter().sum::<f64>() * tv * m2 + 2.0 * hess_sup.iter().sum::<f64>());
        Ok(PotentialCheck {
            regularized,
            exact,
            lhs: (regularized - exact).abs(),
            bound,
            grad_sup,
            hessian_sup: hess_sup,
            gradient_l1: tv,
            gradient_unresolved: self.rho.gradient_unresolved(),
        })
    }
}

fn transition_column(
    grid: &Grid,
    rho: &GridDensity,
    denom: &GridDensity,
    kernel: &DiscreteKernel,
    y: usize,
) -> Result<Column> {
    let vol = grid.cell_volume();
    let mut quadrature = Vec::with_capacity(kernel.offsets().len());
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (oz, kz) in kernel.offsets().iter().zip(kernel.weights()) {
        let z = grid.offset(y, oz).ok_or(Error::KernelLeavesGrid { node: y })?;
        let dz = denom.values()[z];
        if dz <= DENOM_FLOOR {
            return Err(Error::DensityVanishes { node: z });
        }
        let q = kz * vol / dz;
        quadrature.push((z, q));
        for (ox, kx) in kernel.offsets().iter().zip(kernel.weights()) {
            let x = grid.offset(z, ox).ok_or(Error::KernelLeavesGrid { node: y })?;
            let r = rho.values()[x];
            if r > 0.0 {
                *acc.entry(x).or_insert(0.0) += r * kx * q;
            }
        }
    }
    quadrature.sort_by_key(|e| e.0);
    let values: Vec<(usize, f64)> = acc.into_iter().filter(|e| e.1 > 0.0).collect();
    let coords = values.iter().map(|e| grid.node(e.0)).collect();
    Ok(Column {
        node: y,
        quadrature,
        values,
        coords,
    })
}

/// Calls `f(positions, product)` for every tuple drawn from `lists`, where
/// `product` multiplies the selected values.
pub(crate) fn for_each_tuple(lists: &[&[(usize, f64)]], mut f: impl FnMut(&[usize], f64)) {
    let n = lists.len();
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut pos = vec![0usize; n];
    // partial products: prefix[k] = Π_{j<k} lists[j][pos[j]].1
    let mut prefix = vec![1.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] * lists[k][0].1;
    }
    loop {
        f(&pos, prefix[n]);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pos[k] += 1;
            if pos[k] < lists[k].len() {
                break;
            }
            pos[k] = 0;
        }
        for j in k..n {
            prefix[j + 1] = prefix[j] * lists[j][pos[j]].1;
        }
    }
}

/// Q_ε, the plan smoothed by κ_ε in every coordinate.
#[derive(Clone, Copy, Debug)]
pub struct SmoothedPlan<'a> {
    rp: &'a RegularizedPlan,
}

impl SmoothedPlan<'_> {
    /// Q_ε at a configuration of grid nodes.
    pub fn evaluate_nodes(&self, nodes: &[usize]) -> f64 {
        let rp = self.rp;
        let k = rp.kernel();
        rp.atoms()
            .map(|(w, cols)| {
                w * cols
                    .iter()
                    .zip(nodes)
                    .map(|(&c, &z)| {
                        let y = rp.columns[c].node;
                        let dx: Vec<f64> = rp
                            .grid()
                            .node(z)
                            .iter()
                            .zip(rp.grid().node(y))
                            .map(|(a, b)| a - b)
                            .collect();
                        k.mollifier().eval(&dx).powi(2) * k.rescale()
                    })
                    .product::<f64>()
            })
            .sum()
    }

    /// Σ_z Q_ε(z) h^{dN}, which is 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        let rp = self.rp;
        rp.atoms()
            .map(|(w, cols)| {
                w * cols
                    .iter()
                    .map(|&c| rp.columns[c].quadrature.iter().map(|q| q.1 * rp.denom.values()[q.0]).sum::<f64>())
                    .product::<f64>()
            })
            .sum()
    }
}

/// Outcome of the potential-energy error check.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialCheck {
    pub regularized: f64,
    pub exact: f64,
    pub lhs: f64,
    pub bound: f64,
    pub grad_sup: Vec<f64>,
    /// Row-major N×N block sup norms.
    pub hessian_sup: Vec<f64>,
    pub gradient_l1: f64,
    /// ρ jumps by more than half its maximum between neighbours, so the
    /// grid value of ∫|∇ρ| is not a converged quantity.
    pub gradient_unresolved: bool,
}

/// A symmetric function of N points with optional first and second block
/// derivatives.
pub trait SymmetricFunction: Sync {
    fn value(&self, x: &[&[f64]]) -> f64;
    /// |∇_{x_j} Φ(x)|.
    fn grad_block_norm(&self, x: &[&[f64]], j: usize) -> Option<f64>;
    /// Frobenius norm of ∇_{x_j}∇_{x_k} Φ(x), an upper bound on the
    /// operator norm.
    fn hessian_block_norm(&self, x: &[&[f64]], j: usize, k: usize) -> Option<f64>;
}

/// Σ_{j<k} |x_j − x_k|^{−1}.
#[derive(Clone, Copy, Debug, Default)]
pub struct Coulomb;

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// ∂_{x_j}∂_{x_k} |x_j − x_k|^{−1} = (I − 3 r̂ r̂ᵀ)/r³ with r = x_j − x_k.
fn pair_hessian(r: &[f64]) -> Vec<f64> {
    let d = r.len();
    let len = norm(r);
    let inv3 = 1.0 / (len * len * len);
    let mut m = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            let delta = if a == b { 1.0 } else { 0.0 };
            m[a * d + b] = (delta - 3.0 * r[a] * r[b] / (len * len)) * inv3;
        }
    }
    m
}

impl SymmetricFunction for Coulomb {
    fn value(&self, x: &[&[f64]]) -> f64 {
        let mut v = 0.0;
        for j in 0..x.len() {
            for k in j + 1..x.len() {
                v += 1.0 / norm(&diff(x[j], x[k]));
            }
        }
        v
    }

    fn grad_block_norm(&self, x: &[&[f64]], j: usize) -> Option<f64> {
        let mut g = vec![0.0; x[j].len()];
        for k in 0..x.len() {
            if k != j {
                let r = diff(x[j], x[k]);
                let l = norm(&r);
                for (gi, ri) in g.iter_mut().zip(&r) {
                    *gi -= ri / (l * l * l);
                }
            }
        }
        Some(norm(&g))
    }

    fn hessian_block_norm(&self, x: &[&[f64]], j: usize, k: usize) -> Option<f64> {
        if j != k {
            return Some(norm(&pair_hessian(&diff(x[j], x[k]))));
        }
        let d = x[j].len();
        let mut m = vec![0.0; d * d];
        for l in 0..x.len() {
            if l != j {
                for (a, b) in m.iter_mut().zip(pair_hessian(&diff(x[j], x[l]))) {
                    *a -= b;
                }
            }
        }
        Some(norm(&m))
    }
}

type PointFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type PointVecFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Σ_j φ(x_j), optionally with ∇φ and the flattened Hessian of φ.
pub struct OneBody {
    value: PointFn,
    gradient: Option<PointVecFn>,
    hessian: Option<PointVecFn>,
}

impl OneBody {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_derivatives(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self.hessian = Some(Box::new(hessian));
        self
    }
}

impl SymmetricFunction for OneBody {
    fn value(&self, x: &[&[f64]]) -> f64 {
        x.iter().map(|p| (self.value)(p)).sum()
    }

    fn grad_block_norm(&self, x: &[&[f64]], j: usize) -> Option<f64> {
        self.gradient.as_ref().map(|g| norm(&g(x[j])))
    }

    fn hessian_block_norm(&self, x: &[&[f64]], j: usize, k: usize) -> Option<f64> {
        let h = self.hessian.as_ref()?;
        Some(if j == k { norm(&h(x[j])) } else { 0.0 })
    }
}

/// Φ ≡ c.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl SymmetricFunction for Constant {
    fn value(&self, _: &[&[f64]]) -> f64 {
        self.0
    }

    fn grad_block_norm(&self, _: &[&[f64]], _: usize) -> Option<f64> {
        Some(0.0)
    }

    fn hessian_block_norm(&self, _: &[&[f64]], _: usize, _: usize) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mollifier::BumpProfile;
    use crate::plan::{marginal, Atom};

    fn moments() -> Moments {
        BumpProfile::new(1).unwrap().moments().unwrap()
    }

    /// Two antipodal point pairs on a 16-node grid.
    fn tiny() -> (AtomicPlan, GridDensity) {
        let g = Grid::line(0.0, 0.1, 16).unwrap();
        let plan = AtomicPlan::new(
            2,
            1,
            vec![Atom::line(&[0.4, 1.1], 0.3), Atom::line(&[0.5, 1.1], 0.7)],
        )
        .unwrap();
        let rho = marginal(&plan, &g, 0.0).unwrap();
        (plan, rho)
    }

    #[test]
    fn matches_exhaustive_sum_oracle() {
        let (plan, rho) = tiny();
        let eps = 0.15;
        let rp = RegularizedPlan::build(&plan, &rho, eps).unwrap();
        let g = rho.grid();
        let n = g.len();
        let h = g.spacing();
        // independent kernel: χ_ε² on nodes, renormalized by brute force
        let m = rp.kernel().mollifier();
        let kern = |i: usize, j: usize| m.eval(&[(i as f64 - j as f64) * h]).powi(2);
        let total: f64 = (0..n).map(|i| kern(8, i)).sum::<f64>() * h;
        let kappa = |i: usize, j: usize| kern(i, j) / total;
        let r = rho.values();
        let den: Vec<f64> = (0..n).map(|z| (0..n).map(|x| r[x] * kappa(x, z)).sum::<f64>() * h).collect();
        let t = |x: usize, y: usize| -> f64 {
            (0..n)
                .filter(|&z| den[z] > 0.0)
                .map(|z| r[x] * kappa(x, z) * kappa(z, y) / den[z])
                .sum::<f64>()
                * h
        };
        let sym = plan.symmetrize();
        for x1 in 0..n {
            for x2 in 0..n {
                let oracle: f64 = sym
                    .atoms
                    .iter()
                    .map(|a| {
                        let y1 = g.locate(&a.points[0]).unwrap();
                        let y2 = g.locate(&a.points[1]).unwrap();
                        a.weight * t(x1, y1) * t(x2, y2)
                    })
                    .sum();
                let v = rp.evaluate_nodes(&[x1, x2]);
                assert!((v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{x1} {x2}: {v} vs {oracle}");
            }
        }
    }

    #[test]
    fn single_particle_reproduces_rho() {
        let f = fixtures::smooth_single(48).unwrap();
        for eps in f.eps_values() {
            let rp = RegularizedPlan::build(&f.plan, &f.rho, eps).unwrap();
            let tensor = rp.tensor().unwrap().1;
            for (a, b) in tensor.iter().zip(f.rho.values()) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
            assert!(rp.density_of().l1_distance(&f.rho) < 1e-13);
            let k = rp.kinetic_of_sqrt().unwrap();
            assert!((k - h1_seminorm_sqrt(&f.rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_wide_mollifier_and_mismatched_density() {
        let (plan, rho) = tiny();
        assert!(matches!(
            RegularizedPlan::build(&plan, &rho, 0.2),
            Err(Error::MollifierTooWide { .. })
        ));
        let flat = GridDensity::normalized(rho.grid().clone(), vec![1.0; 16]).unwrap();
        assert!(matches!(
            RegularizedPlan::build(&plan, &flat, 0.15),
            Err(Error::MarginalMismatch { .. })
        ));
        let edge = AtomicPlan::new(2, 1, vec![Atom::line(&[0.0, 1.1], 1.0)]).unwrap();
        let rho = marginal(&edge, rho.grid(), 0.0).unwrap();
        assert!(matches!(
            RegularizedPlan::build(&edge, &rho, 0.15),
            Err(Error::KernelLeavesGrid { .. })
        ));
    }

    #[test]
    fn marginal_pinned_for_every_eps() {
        for f in fixtures::marginal_fixtures().unwrap() {
            for eps in f.eps_values() {
                let rp = RegularizedPlan::build(&f.plan, &f.rho, eps).unwrap();
                let l1 = rp.density_of().l1_distance(&f.rho);
                assert!(l1 <= 1e-10, "{}: eps {eps} l1 {l1}", f.name);
                assert!((rp.smoothed().total_mass() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn support_and_symmetry() {
        let f = fixtures::two_bumps(64).unwrap();
        let eps = f.eps_values()[0];
        let rp = RegularizedPlan::build(&f.plan, &f.rho, eps).unwrap();
        let (t, values) = rp.tensor().unwrap();
        let alpha = rp.separation();
        for (i, &v) in values.iter().enumerate() {
            let nodes = t.nodes(i);
            let swapped = [nodes[1], nodes[0]];
            assert!((v - values[t.flat(&swapped)]).abs() <= 1e-15 * v.abs().max(1e-300));
            let x = t.configuration(i);
            if (x[0][0] - x[1][0]).abs() < alpha - 4.0 * eps {
                assert_eq!(v, 0.0);
            }
            assert!(v >= 0.0);
            if v > 0.0 {
                assert!(f.rho.values()[nodes[0]] > 0.0 && f.rho.values()[nodes[1]] > 0.0);
            }
        }
    }

    #[test]
    fn bdp_inequality_on_fixtures() {
        let m = moments();
        for f in fixtures::marginal_fixtures().unwrap() {
            for eps in f.eps_values() {
                let rp = RegularizedPlan::build(&f.plan, &f.rho, eps).unwrap();
                let lhs = rp.kinetic_of_sqrt().unwrap();
                let rhs = rp.kinetic_bound(&m);
                assert!(lhs <= rhs * 1.05, "{}: {lhs} > {rhs}", f.name);
            }
        }
    }

    #[test]
    fn potential_error_trivial_cases() {
        let f = fixtures::two_bumps(64).unwrap();
        let m = moments();
        let rp = RegularizedPlan::build(&f.plan, &f.rho, f.eps_values()[0]).unwrap();
        let c = rp.potential_error(&Constant(3.0), &m).unwrap();
        assert!(c.lhs < 1e-13 && c.bound == 0.0);
        let one = OneBody::new(|x| x[0].sin()).with_derivatives(|x| vec![x[0].cos()], |x| vec![-x[0].sin()]);
        let c = rp.potential_error(&one, &m).unwrap();
        assert!(c.lhs <= 1e-10, "{}", c.lhs);
        let bare = OneBody::new(|x| x[0]);
        assert!(matches!(rp.potential_error(&bare, &m), Err(Error::MissingDerivatives)));
        let coul = rp.potential_error(&Coulomb, &m).unwrap();
        assert!(coul.lhs <= coul.bound);
        assert!(coul.regularized >= coul.exact - 1e-12 || coul.lhs <= coul.bound);
    }

    #[test]
    fn coulomb_derivatives_match_finite_differences() {
        let x = [[0.1, 0.3], [1.0, -0.5], [-0.7, 0.9]];
        let pts: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
        let d = 1e-5;
        // gradient block of particle 1
        let mut g = [0.0; 2];
        for (a, ga) in g.iter_mut().enumerate() {
            let mut p = x;
            let mut q = x;
            p[1][a] += d;
            q[1][a] -= d;
            let vp = Coulomb.value(&p.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
            let vq = Coulomb.value(&q.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
            *ga = (vp - vq) / (2.0 * d);
        }
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((Coulomb.grad_block_norm(&pts, 1).unwrap() - gn).abs() < 1e-6);
        // one-dimensional pair: second mixed derivative of 1/|a-b| is -2/r³
        let p: Vec<&[f64]> = vec![&[0.0], &[2.0]];
        assert!((Coulomb.hessian_block_norm(&p, 0, 1).unwrap() - 2.0 / 8.0).abs() < 1e-15);
        assert!((Coulomb.hessian_block_norm(&p, 0, 0).unwrap() - 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn tuple_iteration_covers_product() {
        let a = [(0, 2.0), (1, 3.0)];
        let b = [(5, 1.0), (6, 10.0), (7, 100.0)];
        let mut seen = vec![];
        for_each_tuple(&[&a, &b], |pos, prod| seen.push((pos.to_vec(), prod)));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], (vec![0, 0], 2.0));
        assert_eq!(seen[5], (vec![1, 2], 300.0));
    }
}
