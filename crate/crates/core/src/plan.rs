//! Finitely supported symmetric N-particle plans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridDensity};
use crate::mollifier::{BumpProfile, ScaledMollifier};
use crate::perm::permutations;
use crate::{Error, Result};

/// One configuration `(x_1, ..., x_N)` with its probability weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "x")]
    pub points: Vec<Vec<f64>>,
    #[serde(rename = "w")]
    pub weight: f64,
}

impl Atom {
    pub fn new(points: Vec<Vec<f64>>, weight: f64) -> Self {
        Self { points, weight }
    }

    /// Convenience constructor for one-dimensional configurations.
    pub fn line(coords: &[f64], weight: f64) -> Self {
        Self::new(coords.iter().map(|&c| vec![c]).collect(), weight)
    }

    /// Smallest distance between two distinct particles.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.min(euclid(&self.points[i], &self.points[j]));
            }
        }
        best
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A probability measure on `(ℝ^d)^N` with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicPlan {
    pub n: usize,
    pub dim: usize,
    pub atoms: Vec<Atom>,
}

impl AtomicPlan {
    /// Validates shapes, positivity of weights and unit total mass.
    pub fn new(n: usize, dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidPlan("n and dim must be positive".into()));
        }
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        for (k, a) in atoms.iter().enumerate() {
            if a.points.len() != n || a.points.iter().any(|p| p.len() != dim) {
                return Err(Error::InvalidPlan(format!(
                    "atom {k} does not have {n} points of dimension {dim}"
                )));
            }
            if a.points.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::InvalidPlan(format!("atom {k} has non-finite coordinates")));
            }
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::InvalidPlan(format!(
                    "atom {k} has non-positive weight {}",
                    a.weight
                )));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPlan(format!("total weight {total} differs from 1")));
        }
        Ok(Self { n, dim, atoms })
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Average over all coordinate permutations. Atoms with identical
    /// configurations are merged; output order is lexicographic in the
    /// coordinates' bit patterns, so the result is deterministic.
    pub fn symmetrize(&self) -> AtomicPlan {
        let perms = permutations(self.n);
        let scale = 1.0 / perms.len() as f64;
        let mut merged: BTreeMap<Vec<u64>, (Vec<Vec<f64>>, f64)> = BTreeMap::new();
        for atom in &self.atoms {
            for (p, _) in &perms {
                let pts: Vec<Vec<f64>> = p.iter().map(|&i| atom.points[i].clone()).collect();
                let entry = merged
                    .entry(config_key(&pts))
                    .or_insert_with(|| (pts, 0.0));
                entry.1 += atom.weight * scale;
            }
        }
        AtomicPlan {
            n: self.n,
            dim: self.dim,
            atoms: merged
                .into_values()
                .map(|(points, weight)| Atom { points, weight })
                .collect(),
        }
    }

    /// True when every permuted configuration carries the same weight as
    /// the original, within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let mut weights: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        for a in &self.atoms {
            *weights.entry(config_key(&a.points)).or_insert(0.0) += a.weight;
        }
        let perms = permutations(self.n);
        self.atoms.iter().all(|a| {
            let w = weights[&config_key(&a.points)];
            perms.iter().all(|(p, _)| {
                let pts: Vec<Vec<f64>> = p.iter().map(|&i| a.points[i].clone()).collect();
                weights
                    .get(&config_key(&pts))
                    .map(|v| (v - w).abs() <= tol)
                    .unwrap_or(false)
            })
        })
    }

    /// Σ_atoms w Φ(X).
    pub fn expectation(&self, f: impl Fn(&[Vec<f64>]) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.points)).sum()
    }

    /// Drops atoms with weight below `threshold` and renormalizes.
    pub fn pruned(&self, threshold: f64) -> Result<AtomicPlan> {
        let kept: Vec<Atom> = self
            .atoms
            .iter()
            .filter(|a| a.weight >= threshold)
            .cloned()
            .collect();
        if kept.is_empty() {
            return Err(Error::PrunedEmpty);
        }
        let total: f64 = kept.iter().map(|a| a.weight).sum();
        Ok(AtomicPlan {
            n: self.n,
            dim: self.dim,
            atoms: kept
                .into_iter()
                .map(|a| Atom {
                    weight: a.weight / total,
                    ..a
                })
                .collect(),
        })
    }
}

fn config_key(points: &[Vec<f64>]) -> Vec<u64> {
    // +0.0 and -0.0 must collide
    points
        .iter()
        .flatten()
        .map(|c| if *c == 0.0 { 0 } else { c.to_bits() })
        .collect()
}

/// Node masses of the one-particle marginal, each particle binned to its
/// nearest node.
pub fn marginal_masses(plan: &AtomicPlan, grid: &Grid) -> Result<Vec<f64>> {
    if plan.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if plan.dim != grid.dim() {
        return Err(Error::InvalidPlan(format!(
            "plan dimension {} does not match grid dimension {}",
            plan.dim,
            grid.dim()
        )));
    }
    let mut mass = vec![0.0; grid.len()];
    let share = 1.0 / plan.n as f64;
    for atom in &plan.atoms {
        for p in &atom.points {
            let node = grid
                .nearest_node(p)
                .ok_or_else(|| Error::OffGrid { point: p.clone() })?;
            mass[node] += atom.weight * share;
        }
    }
    Ok(mass)
}

/// One-particle marginal ρ_P as a probability density on `grid`.
///
/// `bandwidth = 0` bins each particle to its nearest node. A positive
/// bandwidth additionally convolves with the squared mollifier of that
/// width, which is meant for plotting only.
pub fn marginal(plan: &AtomicPlan, grid: &Grid, bandwidth: f64) -> Result<GridDensity> {
    if bandwidth.is_nan() || bandwidth < 0.0 {
        return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be >= 0")));
    }
    let vol = grid.cell_volume();
    let values = marginal_masses(plan, grid)?
        .into_iter()
        .map(|m| m / vol)
        .collect();
    let rho = GridDensity::from_values(grid.clone(), values)?;
    if bandwidth == 0.0 {
        return Ok(rho);
    }
    let m = ScaledMollifier::new(BumpProfile::new(grid.dim())?, bandwidth)?;
    crate::mollifier::convolve_sq(&rho, &m)
}

/// Minimum pairwise distance of a plan's particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub min_pairwise_distance: f64,
    /// An atom with two coincident particles, if any.
    pub violating_atom: Option<Vec<Vec<f64>>>,
}

impl SeparationReport {
    /// Whether every atom lies in the set where all pairwise distances are
    /// at least `alpha`.
    pub fn separated_by(&self, alpha: f64) -> bool {
        self.min_pairwise_distance >= alpha
    }
}

/// α̂ = min over atoms and pairs i ≠ j of |x_i − x_j|.
pub fn separation(plan: &AtomicPlan) -> Result<SeparationReport> {
    if plan.n < 2 {
        return Err(Error::SeparationUndefined);
    }
    if plan.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let mut best = f64::INFINITY;
    let mut violating = None;
    for a in &plan.atoms {
        let d = a.min_pairwise_distance();
        if d < best {
            best = d;
        }
        if d == 0.0 && violating.is_none() {
            violating = Some(a.points.clone());
        }
    }
    Ok(SeparationReport {
        min_pairwise_distance: best,
        violating_atom: violating,
    })
}
