//! Dense two-phase tableau simplex with Bland's anti-cycling rule.

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

/// Optimal primal and dual solution of `min cᵀx, Ax = b, x ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Dual multipliers y with Aᵀy ≤ c and bᵀy = cᵀx.
    pub y: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows × (cols + rows artificial + 1 rhs)
    data: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.data[r * w + c];
        for k in 0..w {
            self.data[r * w + k] /= p;
        }
        self.data[r * w + c] = 1.0;
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                let row = &mut self.data[i * w..(i + 1) * w];
                for (x, pk) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pk;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for all columns.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let total = self.cols + self.rows;
        let mut d: Vec<f64> = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate().take(total) {
                    *dj -= cb * self.at(r, j);
                }
            }
        }
        d
    }

    /// Runs Bland's rule on `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize, pivots: &mut usize, limit: usize) -> Result<()> {
        loop {
            let d = self.reduced_costs(cost);
            let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
            let entering = (0..allowed).find(|&j| d[j] < -1e-11 * scale && !self.basis.contains(&j));
            let Some(c) = entering else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    let better = match best {
                        None => true,
                        Some((br, bb, _)) => ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[r] < bb),
                    };
                    if better {
                        best = Some((ratio, self.basis[r], r));
                    }
                }
            }
            let Some((_, _, r)) = best else {
                // unbounded cannot occur for bounded transport polytopes
                return Err(Error::InvalidParameter("linear program is unbounded".into()));
            };
            self.pivot(r, c);
            *pivots += 1;
            if *pivots > limit {
                return Err(Error::SimplexIterationLimit(limit));
            }
        }
    }
}

/// Solves `min cᵀx` subject to `Ax = b`, `x ≥ 0` with `b ≥ 0`.
///
/// `a` is row-major with `b.len()` rows. Returns
/// [`Error::NoFeasiblePlan`] when phase one ends with positive
/// infeasibility.
pub fn solve_standard_form(a: &[f64], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let rows = b.len();
    let cols = c.len();
    if a.len() != rows * cols {
        return Err(Error::InvalidParameter("constraint matrix has the wrong size".into()));
    }
    if b.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("right-hand side must be nonnegative".into()));
    }
    let width = cols + rows + 1;
    let mut data = vec![0.0; rows * width];
    for r in 0..rows {
        data[r * width..r * width + cols].copy_from_slice(&a[r * cols..(r + 1) * cols]);
        data[r * width + cols + r] = 1.0;
        data[r * width + width - 1] = b[r];
    }
    let mut t = Tableau {
        rows,
        cols,
        data,
        basis: (cols..cols + rows).collect(),
        width,
    };
    let limit = 50 * (rows + cols) + 1000;
    let mut pivots = 0;

    // phase one: minimize the sum of artificials
    let mut phase1 = vec![0.0; cols + rows];
    phase1[cols..].iter_mut().for_each(|v| *v = 1.0);
    t.optimize(&phase1, cols, &mut pivots, limit)?;
    let infeasibility: f64 = (0..rows).filter(|&r| t.basis[r] >= cols).map(|r| t.rhs(r)).sum();
    let b_scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if infeasibility > 1e-9 * b_scale {
        return Err(Error::NoFeasiblePlan);
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..rows {
        if t.basis[r] >= cols {
            if let Some(j) = (0..cols).find(|&j| t.at(r, j).abs() > PIVOT_TOL && !t.basis.contains(&j)) {
                t.pivot(r, j);
                pivots += 1;
            }
        }
    }

    // phase two: artificials may not re-enter
    let mut phase2 = vec![0.0; cols + rows];
    phase2[..cols].copy_from_slice(c);
    t.optimize(&phase2, cols, &mut pivots, limit)?;

    let mut x = vec![0.0; cols];
    for r in 0..rows {
        if t.basis[r] < cols {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let d = t.reduced_costs(&phase2);
    // reduced cost of artificial i is 0 − y_i
    let y: Vec<f64> = (0..rows).map(|i| -d[cols + i]).collect();
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution { x, y, value, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_with_known_optimum() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        let a = [1.0, 1.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0];
        let b = [4.0, 6.0];
        let c = [-1.0, -2.0, 0.0, 0.0];
        let s = solve_standard_form(&a, &b, &c).unwrap();
        assert!((s.value + 5.0).abs() < 1e-12);
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        let dual: f64 = s.y.iter().zip(&b).map(|(y, b)| y * b).sum();
        assert!((dual - s.value).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x1 = 1 and x1 = 2
        let a = [1.0, 1.0];
        let b = [1.0, 2.0];
        let c = [1.0];
        assert!(matches!(solve_standard_form(&a, &b, &c), Err(Error::NoFeasiblePlan)));
    }

    #[test]
    fn redundant_rows_are_fine() {
        // x1 + x2 = 1 twice
        let a = [1.0, 1.0, 1.0, 1.0];
        let b = [1.0, 1.0];
        let c = [2.0, 1.0];
        let s = solve_standard_form(&a, &b, &c).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert_eq!(s.x, vec![0.0, 1.0]);
    }
}
