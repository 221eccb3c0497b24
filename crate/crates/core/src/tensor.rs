//! Dense functions on the N-fold product of a grid.

use crate::grid::Grid;
use crate::{Error, Result};

/// Largest tensor the crate will materialize.
pub const MAX_TENSOR_ENTRIES: usize = 1 << 23;

/// `grid × ... × grid` (N factors), flattened with particle 0 slowest.
#[derive(Clone, Debug)]
pub struct TensorGrid {
    grid: Grid,
    n: usize,
    len: usize,
}

impl TensorGrid {
    pub fn new(grid: &Grid, n: usize) -> Result<Self> {
        let entries = (grid.len() as u128).pow(n as u32);
        if entries > MAX_TENSOR_ENTRIES as u128 {
            return Err(Error::TensorTooLarge {
                entries,
                limit: MAX_TENSOR_ENTRIES,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            n,
            len: entries as usize,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Volume element h^{dN}.
    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume().powi(self.n as i32)
    }

    pub fn nodes(&self, mut flat: usize) -> Vec<usize> {
        let m = self.grid.len();
        let mut out = vec![0; self.n];
        for k in (0..self.n).rev() {
            out[k] = flat % m;
            flat /= m;
        }
        out
    }

    pub fn flat(&self, nodes: &[usize]) -> usize {
        let m = self.grid.len();
        nodes.iter().fold(0, |acc, &i| acc * m + i)
    }

    /// Configuration coordinates of a tensor entry.
    pub fn configuration(&self, flat: usize) -> Vec<Vec<f64>> {
        self.nodes(flat).into_iter().map(|i| self.grid.node(i)).collect()
    }

    /// ∫|∇√f|² with forward differences between neighbouring entries along
    /// every particle and axis.
    pub fn sqrt_dirichlet_energy(&self, values: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let d = self.grid.dim();
        let roots: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
        let mut total = 0.0;
        for (flat, &r) in roots.iter().enumerate() {
            let nodes = self.nodes(flat);
            for k in 0..self.n {
                for a in 0..d {
                    let mut off = vec![0isize; d];
                    off[a] = 1;
                    if let Some(next) = self.grid.offset(nodes[k], &off) {
                        let mut moved = nodes.clone();
                        moved[k] = next;
                        let diff = (roots[self.flat(&moved)] - r) / h;
                        total += diff * diff;
                    }
                }
            }
        }
        total * self.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = Grid::line(0.0, 1.0, 5).unwrap();
        let t = TensorGrid::new(&g, 3).unwrap();
        assert_eq!(t.len(), 125);
        for i in 0..t.len() {
            assert_eq!(t.flat(&t.nodes(i)), i);
        }
        assert_eq!(t.configuration(t.flat(&[1, 2, 4])), vec![vec![1.0], vec![2.0], vec![4.0]]);
    }

    #[test]
    fn size_limit() {
        let g = Grid::line(0.0, 1.0, 300).unwrap();
        assert!(matches!(TensorGrid::new(&g, 3), Err(Error::TensorTooLarge { .. })));
    }

    #[test]
    fn product_energy_is_sum() {
        // √(f⊗f) = √f ⊗ √f, and with ∫f = 1 the energy doubles.
        let n = 40;
        let h = 0.1;
        let g = Grid::line(0.0, h, n).unwrap();
        let f: Vec<f64> = (0..n)
            .map(|i| ((i as f64 - 20.0) * 0.15).cos().powi(2).max(0.0))
            .collect();
        let s: f64 = f.iter().sum::<f64>() * h;
        let f: Vec<f64> = f.iter().map(|v| v / s).collect();
        let rho = crate::GridDensity::from_values(g.clone(), f.clone()).unwrap();
        let single = crate::grid::h1_seminorm_sqrt(&rho);
        let t = TensorGrid::new(&g, 2).unwrap();
        let values: Vec<f64> = (0..t.len())
            .map(|i| {
                let v = t.nodes(i);
                f[v[0]] * f[v[1]]
            })
            .collect();
        assert!((t.sqrt_dirichlet_energy(&values) - 2.0 * single).abs() < 1e-10);
    }
}
