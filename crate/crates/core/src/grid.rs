//! Uniform grids and densities sampled on them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform tensor grid in `dim` dimensions.
///
/// Node `i` sits at `origin + multi_index(i) * spacing`; multi-indices are
/// flattened row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    origin: Vec<f64>,
    spacing: f64,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(origin: Vec<f64>, spacing: f64, points_per_axis: usize) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be > 0, got {spacing}")));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points per axis, got {points_per_axis}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            dim,
            origin,
            spacing,
            points_per_axis,
        })
    }

    /// One-dimensional grid `origin, origin + h, ..., origin + (n-1) h`.
    pub fn line(origin: f64, spacing: f64, points: usize) -> Result<Self> {
        Self::new(vec![origin], spacing, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of a node, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = node % self.points_per_axis;
            node /= self.points_per_axis;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Stride of `axis` in the flat node index.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        let i = (node / self.stride(axis)) % self.points_per_axis;
        self.origin[axis] + i as f64 * self.spacing
    }

    pub fn node(&self, node: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.coord(node, a)).collect()
    }

    /// Node displaced by an integer offset, or `None` if it leaves the grid.
    pub fn offset(&self, node: usize, off: &[isize]) -> Option<usize> {
        let mut out = 0usize;
        for (a, &d) in off.iter().enumerate().take(self.dim) {
            let i = (node / self.stride(a)) % self.points_per_axis;
            let j = i as isize + d;
            if j < 0 || j >= self.points_per_axis as isize {
                return None;
            }
            out = out * self.points_per_axis + j as usize;
        }
        Some(out)
    }

    /// Largest per-axis index distance between two nodes.
    pub fn index_distance(&self, a: usize, b: usize) -> usize {
        (0..self.dim)
            .map(|ax| {
                let s = self.stride(ax);
                let ia = (a / s) % self.points_per_axis;
                let ib = (b / s) % self.points_per_axis;
                ia.abs_diff(ib)
            })
            .max()
            .unwrap_or(0)
    }

    /// Euclidean distance between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        (0..self.dim)
            .map(|ax| {
                let d = self.coord(a, ax) - self.coord(b, ax);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Nearest node to `point`, `None` outside the grid's extent (half a
    /// cell of slack on each side).
    pub fn nearest_node(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim {
            return None;
        }
        let mut idx = Vec::with_capacity(self.dim);
        for (a, &x) in point.iter().enumerate() {
            let t = ((x - self.origin[a]) / self.spacing).round();
            if !(t >= 0.0 && t < self.points_per_axis as f64) {
                return None;
            }
            idx.push(t as usize);
        }
        Some(self.flat_index(&idx))
    }

    /// Node at `point` within a relative tolerance of the spacing.
    pub fn locate(&self, point: &[f64]) -> Result<usize> {
        let off = || Error::OffGrid {
            point: point.to_vec(),
        };
        let node = self.nearest_node(point).ok_or_else(off)?;
        let snapped = self.node(node);
        let dev = snapped
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev > 1e-6 * self.spacing {
            return Err(off());
        }
        Ok(node)
    }
}

/// How the total mass of an external density is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassConvention {
    /// ∫ρ = 1, the marginal of a probability measure.
    Probability,
    /// ∫ρ = N, the usual DFT normalization.
    ParticleNumber(usize),
}

impl MassConvention {
    pub fn target_mass(&self) -> f64 {
        match *self {
            MassConvention::Probability => 1.0,
            MassConvention::ParticleNumber(n) => n as f64,
        }
    }
}

/// Nonnegative density sampled on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    convention: MassConvention,
}

impl GridDensity {
    /// Wraps raw values without checking the total mass.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidDensity(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity(format!(
                "value at node {i} is negative or not finite"
            )));
        }
        Ok(Self {
            grid,
            values,
            convention: MassConvention::Probability,
        })
    }

    /// Density with the mass required by `convention` (checked to 1e-10).
    pub fn with_convention(
        grid: Grid,
        values: Vec<f64>,
        convention: MassConvention,
    ) -> Result<Self> {
        let mut d = Self::from_values(grid, values)?;
        d.convention = convention;
        let m = d.mass();
        let target = convention.target_mass();
        if (m - target).abs() > 1e-10 * target.max(1.0) {
            return Err(Error::InvalidDensity(format!(
                "mass {m} does not match the {convention:?} convention ({target})"
            )));
        }
        Ok(d)
    }

    /// Rescales arbitrary nonnegative values to a probability density.
    pub fn normalized(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::from_values(grid, values)?;
        let m = d.mass();
        if m <= 0.0 {
            return Err(Error::EmptyMeasure);
        }
        d.values.iter_mut().for_each(|v| *v /= m);
        Ok(d)
    }

    /// The same density under the probability convention.
    pub fn to_probability(&self) -> GridDensity {
        let scale = self.convention.target_mass();
        GridDensity {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v / scale).collect(),
            convention: MassConvention::Probability,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn convention(&self) -> MassConvention {
        self.convention
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Node masses `value * h^d`.
    pub fn node_masses(&self) -> Vec<f64> {
        let w = self.grid.cell_volume();
        self.values.iter().map(|v| v * w).collect()
    }

    /// Nodes carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] > 0.0).collect()
    }

    /// Quadrature L¹ distance to another density on the same grid.
    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// ∫|∇ρ| from forward differences; the total variation in one dimension.
    pub fn gradient_l1(&self) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let mut total = 0.0;
        for i in 0..g.len() {
            let mut sq = 0.0;
            for a in 0..g.dim() {
                let mut off = vec![0isize; g.dim()];
                off[a] = 1;
                if let Some(j) = g.offset(i, &off) {
                    let d = (self.values[j] - self.values[i]) / h;
                    sq += d * d;
                }
            }
            total += sq.sqrt();
        }
        total * g.cell_volume()
    }

    /// True when the density jumps by more than half its maximum between
    /// neighbouring nodes, i.e. its gradient is not resolved by the grid.
    pub fn gradient_unresolved(&self) -> bool {
        let g = &self.grid;
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return false;
        }
        (0..g.len()).any(|i| {
            (0..g.dim()).any(|a| {
                let mut off = vec![0isize; g.dim()];
                off[a] = 1;
                g.offset(i, &off)
                    .map(|j| (self.values[j] - self.values[i]).abs() > 0.5 * max)
                    .unwrap_or(false)
            })
        })
    }
}

/// ∫|∇√ρ|² by finite differences of √ρ.
///
/// Differences are taken between neighbouring nodes, i.e. central
/// differences at cell midpoints, and integrated with the midpoint rule.
/// The square root is applied before differencing, so zeros of ρ need no
/// special treatment. Second-order accurate for smooth √ρ.
pub fn h1_seminorm_sqrt(rho: &GridDensity) -> f64 {
    let g = rho.grid();
    let h = g.spacing();
    let sqrt: Vec<f64> = rho.values().iter().map(|v| v.sqrt()).collect();
    let mut total = 0.0;
    for a in 0..g.dim() {
        let mut off = vec![0isize; g.dim()];
        off[a] = 1;
        for i in 0..g.len() {
            if let Some(j) = g.offset(i, &off) {
                let d = (sqrt[j] - sqrt[i]) / h;
                total += d * d;
            }
        }
    }
    total * g.cell_volume()
}

/// Pointwise central-difference gradient of √ρ at every node (one-sided at
/// the edges of the grid).
pub fn sqrt_gradient(rho: &GridDensity) -> Vec<Vec<f64>> {
    let g = rho.grid();
    let h = g.spacing();
    let sqrt: Vec<f64> = rho.values().iter().map(|v| v.sqrt()).collect();
    (0..g.len())
        .map(|i| {
            (0..g.dim())
                .map(|a| {
                    let mut fwd = vec![0isize; g.dim()];
                    fwd[a] = 1;
                    let mut bwd = vec![0isize; g.dim()];
                    bwd[a] = -1;
                    match (g.offset(i, &fwd), g.offset(i, &bwd)) {
                        (Some(p), Some(m)) => (sqrt[p] - sqrt[m]) / (2.0 * h),
                        (Some(p), None) => (sqrt[p] - sqrt[i]) / h,
                        (None, Some(m)) => (sqrt[i] - sqrt[m]) / h,
                        (None, None) => 0.0,
                    }
                })
                .collect()
        })
        .collect()
}
