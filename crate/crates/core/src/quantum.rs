//! Slater determinants and the fermionic mixed state
//!
//! ```text
//! Γ_ε = Σ_atoms w Σ_z ∏_k q_k(z_k) |S_z⟩⟨S_z|,   S_z = (N!)^{−1/2} det[φ_{z_i}(x_j)],
//! ```
//!
//! with orbitals φ_z = √ρ · √κ_ε(· − z) and `q_k(z) = κ_ε(z − y_k) h^d / (ρ∗κ_ε)(z)`.
//! Orbitals attached to different particles of an atom have disjoint
//! supports, which reduces every trace to products of one-particle sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::grid::{h1_seminorm_sqrt, Grid, GridDensity};
use crate::mollifier::{Moments, ScaledMollifier};
use crate::perm::{determinant, factorial, permutations};
use crate::plan::euclid;
use crate::regularizer::RegularizedPlan;
use crate::{ordered_map, Error, Result};

/// N orbitals `x ↦ χ_ε(x − z_k)`, optionally multiplied by √ρ.
#[derive(Clone, Debug)]
pub struct OrbitalSet<'a> {
    mollifier: ScaledMollifier,
    centers: Vec<Vec<f64>>,
    rho: Option<&'a GridDensity>,
}

impl<'a> OrbitalSet<'a> {
    pub fn new(mollifier: ScaledMollifier, centers: Vec<Vec<f64>>) -> Self {
        Self {
            mollifier,
            centers,
            rho: None,
        }
    }

    /// Orbitals √ρ·χ_{ε,z}; evaluation points must then be grid nodes.
    pub fn weighted(mollifier: ScaledMollifier, centers: Vec<Vec<f64>>, rho: &'a GridDensity) -> Self {
        Self {
            mollifier,
            centers,
            rho: Some(rho),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Supports are disjoint when all centers are at least 2ε apart.
    pub fn disjoint(&self) -> bool {
        let two_eps = 2.0 * self.mollifier.eps();
        (0..self.len()).all(|i| (i + 1..self.len()).all(|j| euclid(&self.centers[i], &self.centers[j]) >= two_eps))
    }

    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.centers[k]).map(|(a, b)| a - b).collect();
        let bump = self.mollifier.eval(&d);
        match self.rho {
            None => bump,
            Some(rho) => rho
                .grid()
                .nearest_node(x)
                .map(|n| rho.values()[n].sqrt() * bump)
                .unwrap_or(0.0),
        }
    }

    fn matrix(&self, config: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| config.iter().map(|x| self.eval(i, x)).collect())
            .collect()
    }
}

/// (N!)^{−1/2} det[φ_i(x_j)].
pub fn slater(orbitals: &OrbitalSet<'_>, config: &[Vec<f64>]) -> f64 {
    determinant(orbitals.matrix(config)) / factorial(orbitals.len()).sqrt()
}

/// `(det[χ_{ε,z_i}(x_j)]², Σ_σ ∏_k χ_ε(x_k − z_{σ(k)})²)`, equal when the
/// orbital supports are disjoint.
pub fn det_square_identity(orbitals: &OrbitalSet<'_>, config: &[Vec<f64>]) -> Result<(f64, f64)> {
    if !orbitals.disjoint() {
        return Err(Error::OverlappingSupports);
    }
    let m = orbitals.matrix(config);
    let det = determinant(m.clone());
    let rhs = permutations(orbitals.len())
        .iter()
        .map(|(p, _)| (0..orbitals.len()).map(|k| m[p[k]][k].powi(2)).product::<f64>())
        .sum();
    Ok((det * det, rhs))
}

/// Kinetic energy of Γ_ε evaluated three ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KineticTrace {
    /// N(∫|∇√ρ|² + E_h) with E_h the forward-difference energy of √κ_ε.
    pub analytic: f64,
    /// Σ_ℓ Tr(−Δ_ℓ Γ_ε) through the orbital factorization.
    pub quadrature: f64,
    /// N(∫|∇√ρ|² + ε^{−2}∫|∇χ|²) with the continuum moment of χ.
    pub continuum: f64,
}

/// Smallest Rayleigh quotient found over random test vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub configurations: usize,
    pub samples: usize,
    /// min ⟨ψ, Γψ⟩ / ‖ψ‖².
    pub min_ratio: f64,
    /// Largest diagonal entry of the sampled block, for scale.
    pub max_diagonal: f64,
}

/// Largest deviation of Γ_ε(X; X) from P_ε(X) over sampled X.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalCheck {
    pub samples: usize,
    pub max_abs_error: f64,
    pub max_value: f64,
    /// max_abs_error / max_value.
    pub max_relative_error: f64,
}

/// Γ_ε as an evaluator over grid configurations.
pub struct MixedStateKernel<'a> {
    rp: &'a RegularizedPlan,
    sqrt_rho: Vec<f64>,
    side: usize,
    amp_table: Vec<f64>,
}

impl<'a> MixedStateKernel<'a> {
    pub fn new(rp: &'a RegularizedPlan) -> Self {
        let k = rp.kernel();
        let d = rp.grid().dim();
        let r = k.radius() as isize;
        let side = 2 * k.radius() + 1;
        let mut amp_table = vec![0.0; side.pow(d as u32)];
        for (off, a) in k.offsets().iter().zip(k.amplitudes()) {
            let idx = off.iter().fold(0usize, |acc, &o| acc * side + (o + r) as usize);
            amp_table[idx] = *a;
        }
        Self {
            rp,
            sqrt_rho: rp.rho().values().iter().map(|v| v.sqrt()).collect(),
            side,
            amp_table,
        }
    }

    pub fn regularized(&self) -> &RegularizedPlan {
        self.rp
    }

    fn grid(&self) -> &Grid {
        self.rp.grid()
    }

    /// Table index of the offset `x − z`, if inside the kernel box.
    fn offset_index(&self, x: usize, z: usize) -> Option<usize> {
        let g = self.grid();
        let r = self.rp.kernel().radius() as isize;
        let mut idx = 0usize;
        for a in 0..g.dim() {
            let s = g.stride(a);
            let n = g.points_per_axis();
            let ix = ((x / s) % n) as isize;
            let iz = ((z / s) % n) as isize;
            let o = ix - iz;
            if o.abs() > r {
                return None;
            }
            idx = idx * self.side + (o + r) as usize;
        }
        Some(idx)
    }

    /// √κ_ε(x − z).
    fn amp(&self, x: usize, z: usize) -> f64 {
        self.offset_index(x, z).map(|i| self.amp_table[i]).unwrap_or(0.0)
    }

    /// Γ_ε(X; X′) for configurations of grid nodes.
    ///
    /// Both arguments are sorted first and the permutation signs applied
    /// afterwards, so transposing two particles negates the value bit for
    /// bit.
    pub fn kernel_eval_nodes(&self, x: &[usize], xp: &[usize]) -> f64 {
        let (xs, sx) = sort_with_sign(x);
        let (xps, sxp) = sort_with_sign(xp);
        if sx == 0.0 || sxp == 0.0 {
            return 0.0;
        }
        sx * sxp * self.kernel_sorted(&xs, &xps)
    }

    fn kernel_sorted(&self, x: &[usize], xp: &[usize]) -> f64 {
        let n = x.len();
        let amplitude: f64 = x
            .iter()
            .chain(xp)
            .map(|&i| self.sqrt_rho[i])
            .product();
        if amplitude == 0.0 {
            return 0.0;
        }
        let reach = 2 * self.rp.kernel().radius();
        let g = self.grid();
        let perms = permutations(n);
        let mut total = 0.0;
        for (w, cols) in self.rp.atoms() {
            // every particle needs a point of each configuration within 2ε
            let near = cols.iter().all(|&c| {
                let y = self.rp.columns()[c].node;
                x.iter().any(|&xi| g.index_distance(xi, y) <= reach)
                    && xp.iter().any(|&xi| g.index_distance(xi, y) <= reach)
            });
            if near {
                total += w * self.signed_sum(n, &perms, |i, j, l| self.m_entry(cols, x, xp, i, j, l));
            }
        }
        total * amplitude / factorial(n)
    }

    fn m_entry(&self, cols: &[usize], x: &[usize], xp: &[usize], i: usize, j: usize, l: usize) -> f64 {
        let quad = &self.rp.columns()[cols[i]].quadrature;
        let mut acc = 0.0;
        for &(z, q) in quad {
            let a = self.amp(x[j], z);
            if a != 0.0 {
                acc += q * a * self.amp(xp[l], z);
            }
        }
        acc
    }

    fn signed_sum(&self, n: usize, perms: &[(Vec<usize>, f64)], entry: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let mut table = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    table[(i * n + j) * n + l] = entry(i, j, l);
                }
            }
        }
        let mut s = 0.0;
        for (sigma, ss) in perms {
            for (tau, st) in perms {
                let mut prod = ss * st;
                for i in 0..n {
                    prod *= table[(i * n + sigma[i]) * n + tau[i]];
                    if prod == 0.0 {
                        break;
                    }
                }
                s += prod;
            }
        }
        s
    }

    /// Γ_ε(X; X′) for configurations whose points are grid nodes.
    pub fn kernel_eval(&self, x: &[Vec<f64>], xp: &[Vec<f64>]) -> Result<f64> {
        let g = self.grid();
        let a = x.iter().map(|p| g.locate(p)).collect::<Result<Vec<_>>>()?;
        let b = xp.iter().map(|p| g.locate(p)).collect::<Result<Vec<_>>>()?;
        Ok(self.kernel_eval_nodes(&a, &b))
    }

    /// Configurations drawn from the support of ρ, the only place the
    /// diagonal of Γ_ε can be nonzero.
    pub fn support_configurations(&self) -> Result<Vec<Vec<usize>>> {
        let support = self.rp.rho().support();
        let n = self.rp.particles();
        let count = (support.len() as u128).pow(n as u32);
        if count > crate::tensor::MAX_TENSOR_ENTRIES as u128 {
            return Err(Error::TensorTooLarge {
                entries: count,
                limit: crate::tensor::MAX_TENSOR_ENTRIES,
            });
        }
        Ok((0..count as usize)
            .map(|mut f| {
                let mut c = vec![0; n];
                for k in (0..n).rev() {
                    c[k] = support[f % support.len()];
                    f /= support.len();
                }
                c
            })
            .collect())
    }

    /// Tr Γ_ε as the grid quadrature of its diagonal.
    pub fn trace(&self) -> Result<f64> {
        let configs = self.support_configurations()?;
        let diag = ordered_map(&configs, |c| self.kernel_eval_nodes(c, c));
        Ok(diag.iter().sum::<f64>() * self.grid().cell_volume().powi(self.rp.particles() as i32))
    }

    /// One-particle density: the diagonal integrated over particles 2..N.
    pub fn one_particle_density(&self) -> Result<GridDensity> {
        let configs = self.support_configurations()?;
        let diag = ordered_map(&configs, |c| self.kernel_eval_nodes(c, c));
        let mut out = vec![0.0; self.grid().len()];
        let vol = self.grid().cell_volume().powi(self.rp.particles() as i32 - 1);
        for (c, v) in configs.iter().zip(&diag) {
            out[c[0]] += v * vol;
        }
        GridDensity::from_values(self.grid().clone(), out)
    }

    /// Σ_x ρ(x) κ_ε(x − z) h^d, the squared norm of the orbital at z.
    fn orbital_norm(&self, z: usize) -> f64 {
        let g = self.grid();
        let k = self.rp.kernel();
        k.offsets()
            .iter()
            .zip(k.weights())
            .filter_map(|(o, w)| g.offset(z, o).map(|x| self.rp.rho().values()[x] * w))
            .sum::<f64>()
            * g.cell_volume()
    }

    /// Per-column Σ_z q(z)‖φ_z‖².
    fn column_norms(&self) -> Vec<f64> {
        self.rp
            .columns()
            .iter()
            .map(|c| c.quadrature.iter().map(|&(z, q)| q * self.orbital_norm(z)).sum())
            .collect()
    }

    /// Tr Γ_ε through the orbital factorization, Σ_atoms w ∏_k A_k.
    pub fn trace_factorized(&self) -> f64 {
        let a = self.column_norms();
        self.rp
            .atoms()
            .map(|(w, cols)| w * cols.iter().map(|&c| a[c]).product::<f64>())
            .sum()
    }

    /// One-particle density through the orbital factorization.
    pub fn one_particle_density_factorized(&self) -> GridDensity {
        let g = self.grid();
        let k = self.rp.kernel();
        let a = self.column_norms();
        let n = self.rp.particles();
        let rho = self.rp.rho().values();
        // per column: x ↦ Σ_z q(z) ρ(x) κ(x−z)
        let profiles: Vec<Vec<(usize, f64)>> = self
            .rp
            .columns()
            .iter()
            .map(|c| {
                let mut acc = std::collections::BTreeMap::new();
                for &(z, q) in &c.quadrature {
                    for (o, w) in k.offsets().iter().zip(k.weights()) {
                        if let Some(x) = g.offset(z, o) {
                            *acc.entry(x).or_insert(0.0) += q * rho[x] * w;
                        }
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        let mut out = vec![0.0; g.len()];
        for (w, cols) in self.rp.atoms() {
            for i in 0..n {
                let others: f64 = (0..n).filter(|&j| j != i).map(|j| a[cols[j]]).product();
                let f = w * others / n as f64;
                for &(x, v) in &profiles[cols[i]] {
                    out[x] += f * v;
                }
            }
        }
        GridDensity::from_values(g.clone(), out).expect("nonnegative density")
    }

    /// Kinetic energy Σ_ℓ Tr(−Δ_ℓ Γ_ε).
    ///
    /// The quadrature route sums, per atom, Σ_j B_j ∏_{k≠j} A_k where
    /// `B_j = Σ_z q_j(z) ∫|∇φ_z|²` and the orbital energy uses forward
    /// differences of the grid orbital φ_z = √ρ·√κ_ε(· − z), the same
    /// stencil as the Dirichlet energy of √P_ε.
    pub fn kinetic_trace(&self, moments: &Moments) -> KineticTrace {
        let g = self.grid();
        let k = self.rp.kernel();
        let n = self.rp.particles() as f64;
        let d = g.dim();
        let h = g.spacing();
        let vol = g.cell_volume();
        let r = k.radius() as isize;
        let side = (2 * r + 2) as usize;
        // offsets x − z in [−r−1, r]^d reach every forward difference touching the orbital
        let window: Vec<Vec<isize>> = (0..side.pow(d as u32))
            .map(|mut f| {
                let mut o = vec![0isize; d];
                for a in (0..d).rev() {
                    o[a] = (f % side) as isize - r - 1;
                    f /= side;
                }
                o
            })
            .collect();
        let units: Vec<Vec<isize>> = (0..d)
            .map(|a| (0..d).map(|b| isize::from(a == b)).collect())
            .collect();
        let orbital = |x: usize, z: usize| self.sqrt_rho[x] * self.amp(x, z);
        let energy = |z: usize| -> f64 {
            let mut acc = 0.0;
            for o in &window {
                let Some(x) = g.offset(z, o) else { continue };
                let fx = orbital(x, z);
                for e in &units {
                    let fe = g.offset(x, e).map(|y| orbital(y, z)).unwrap_or(0.0);
                    acc += (fe - fx) * (fe - fx);
                }
            }
            acc * vol / (h * h)
        };
        let a = self.column_norms();
        let b: Vec<f64> = self
            .rp
            .columns()
            .iter()
            .map(|c| c.quadrature.iter().map(|&(z, q)| q * energy(z)).sum())
            .collect();
        let quadrature = self
            .rp
            .atoms()
            .map(|(w, cols)| {
                w * (0..cols.len())
                    .map(|j| {
                        b[cols[j]]
                            * (0..cols.len())
                                .filter(|&l| l != j)
                                .map(|l| a[cols[l]])
                                .product::<f64>()
                    })
                    .sum::<f64>()
            })
            .sum();
        let h1 = h1_seminorm_sqrt(self.rp.rho());
        KineticTrace {
            analytic: n * (h1 + k.difference_energy()),
            quadrature,
            continuum: n * (h1 + k.mollifier().grad_sq(moments)),
        }
    }

    /// Dense block of Γ_ε on `configs`, row-major.
    pub fn matrix(&self, configs: &[Vec<usize>]) -> Vec<f64> {
        let m = configs.len();
        let rows = ordered_map(&(0..m).collect::<Vec<_>>(), |&i| {
            (i..m)
                .map(|j| self.kernel_eval_nodes(&configs[i], &configs[j]))
                .collect::<Vec<f64>>()
        });
        let mut out = vec![0.0; m * m];
        for (i, row) in rows.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                out[i * m + i + off] = *v;
                out[(i + off) * m + i] = *v;
            }
        }
        out
    }

    /// Rayleigh quotients of Γ_ε for standard-normal test vectors on
    /// `configs`, drawn from a ChaCha8 stream seeded with `seed`.
    pub fn positivity(&self, configs: &[Vec<usize>], samples: usize, seed: u64) -> PositivityReport {
        let m = configs.len();
        let gamma = self.matrix(configs);
        let vol = self.grid().cell_volume().powi(self.rp.particles() as i32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..samples {
            let psi: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut q = 0.0;
            for i in 0..m {
                let row = &gamma[i * m..(i + 1) * m];
                q += psi[i] * row.iter().zip(&psi).map(|(g, p)| g * p).sum::<f64>();
            }
            let norm: f64 = psi.iter().map(|p| p * p).sum();
            min_ratio = min_ratio.min(q * vol / norm);
        }
        PositivityReport {
            configurations: m,
            samples,
            min_ratio,
            max_diagonal: (0..m).map(|i| gamma[i * m + i]).fold(0.0, f64::max),
        }
    }

    /// Compares Γ_ε(X; X) with P_ε(X) on `samples` configurations drawn
    /// uniformly from supp ρ^N.
    pub fn diagonal_check(&self, samples: usize, seed: u64) -> DiagonalCheck {
        let support = self.rp.rho().support();
        let n = self.rp.particles();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut err, mut top): (f64, f64) = (0.0, 0.0);
        for _ in 0..samples {
            let x: Vec<usize> = (0..n).map(|_| support[rng.random_range(0..support.len())]).collect();
            let p = self.rp.evaluate_nodes(&x);
            err = err.max((self.kernel_eval_nodes(&x, &x) - p).abs());
            top = top.max(p.abs());
        }
        DiagonalCheck {
            samples,
            max_abs_error: err,
            max_value: top,
            max_relative_error: if top > 0.0 { err / top } else { err },
        }
    }
}

/// Sorted copy and the sign of the sorting permutation (0 on repeats).
fn sort_with_sign(x: &[usize]) -> (Vec<usize>, f64) {
    let mut v = x.to_vec();
    let mut sign = 1.0;
    // insertion sort counts transpositions
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        sign = 0.0;
    }
    (v, sign)
}
