//! The radial bump χ(x) = c·exp(−1/(1−|x|²)), its rescalings
//! χ_ε(x) = ε^{−d/2} χ(x/ε), and the grid kernel κ_ε ∝ χ_ε².

use serde::Serialize;

use crate::grid::{Grid, GridDensity};
use crate::quadrature::{integrate, Estimate};
use crate::{Error, Result};

const QUAD_TOL: f64 = 1e-13;

/// Surface area of the unit sphere in ℝ^d.
fn sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(d/2) by recurrence from Γ(1/2) = √π or Γ(1) = 1
    let mut gamma = if dim.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut s = if dim.is_multiple_of(2) { 1.0 } else { 0.5 };
    while s + 0.5 < dim as f64 / 2.0 {
        gamma *= s;
        s += 1.0;
    }
    2.0 * PI.powf(dim as f64 / 2.0) / gamma
}

/// Unnormalized profile exp(−1/(1−r²)).
fn raw_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// χ in `dim` dimensions, normalized so that ∫χ² = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BumpProfile {
    dim: usize,
    norm: f64,
}

/// ∫|∇χ|² and ∫|u|²χ(u)², each with a quadrature error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub grad_sq: Estimate,
    pub second_moment: Estimate,
}

impl BumpProfile {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let area = sphere_area(dim);
        let sq = integrate(
            |r| r.powi(dim as i32 - 1) * raw_profile(r * r).powi(2),
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        Ok(Self {
            dim,
            norm: 1.0 / (area * sq.value).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The normalization constant c.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.norm * raw_profile(x.iter().map(|v| v * v).sum())
    }

    /// ∇χ(x) = −2x χ(x) / (1 − |x|²)².
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            return vec![0.0; x.len()];
        }
        let f = -2.0 * self.norm * raw_profile(r2) / ((1.0 - r2) * (1.0 - r2));
        x.iter().map(|v| f * v).collect()
    }

    /// Radial quadrature of the two moments.
    pub fn moments(&self) -> Result<Moments> {
        let area = sphere_area(self.dim);
        let c2 = self.norm * self.norm;
        let d = self.dim as i32;
        let grad = integrate(
            |r| {
                let r2 = r * r;
                if r2 >= 1.0 {
                    return 0.0;
                }
                let dr = 2.0 * r / ((1.0 - r2) * (1.0 - r2));
                r.powi(d - 1) * raw_profile(r2).powi(2) * dr * dr
            },
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        let second = integrate(
            |r| r.powi(d + 1) * raw_profile(r * r).powi(2),
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        let scale = area * c2;
        Ok(Moments {
            grad_sq: Estimate {
                value: grad.value * scale,
                error: grad.error * scale,
            },
            second_moment: Estimate {
                value: second.value * scale,
                error: second.error * scale,
            },
        })
    }
}

/// χ_ε for a fixed ε > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaledMollifier {
    base: BumpProfile,
    eps: f64,
}

impl ScaledMollifier {
    pub fn new(base: BumpProfile, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
        }
        Ok(Self { base, eps })
    }

    pub fn base(&self) -> &BumpProfile {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn amplitude(&self) -> f64 {
        self.eps.powf(-(self.base.dim as f64) / 2.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x.iter().map(|v| v / self.eps).collect();
        self.amplitude() * self.base.eval(&u)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = x.iter().map(|v| v / self.eps).collect();
        let s = self.amplitude() / self.eps;
        self.base.gradient(&u).into_iter().map(|g| g * s).collect()
    }

    /// ∫|∇χ_ε|² = ε^{−2} ∫|∇χ|².
    pub fn grad_sq(&self, m: &Moments) -> f64 {
        m.grad_sq.value / (self.eps * self.eps)
    }

    /// ∫|u|²χ_ε(u)² = ε² ∫|u|²χ(u)².
    pub fn second_moment(&self, m: &Moments) -> f64 {
        m.second_moment.value * self.eps * self.eps
    }
}

/// Kernel weights below this fraction of the central weight are dropped,
/// so that no division by the smoothed density meets an underflowed entry.
pub const KERNEL_CUTOFF: f64 = 1e-100;

/// χ_ε² sampled on the grid offsets inside the ε-ball and rescaled so that
/// Σ κ h^d = 1 exactly.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    mollifier: ScaledMollifier,
    spacing: f64,
    offsets: Vec<Vec<isize>>,
    weights: Vec<f64>,
    amplitudes: Vec<f64>,
    amplitude_gradients: Vec<Vec<f64>>,
    rescale: f64,
    radius: usize,
}

impl DiscreteKernel {
    pub fn new(mollifier: ScaledMollifier, spacing: f64) -> Result<Self> {
        let eps = mollifier.eps();
        if eps < spacing {
            return Err(Error::KernelUnresolved { eps, spacing });
        }
        let dim = mollifier.base().dim();
        let radius = (eps / spacing).floor() as usize;
        let side = 2 * radius + 1;
        let peak = mollifier.eval(&vec![0.0; dim]);
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        let mut grads = Vec::new();
        for flat in 0..side.pow(dim as u32) {
            let mut rem = flat;
            let mut off = vec![0isize; dim];
            for a in (0..dim).rev() {
                off[a] = (rem % side) as isize - radius as isize;
                rem /= side;
            }
            let x: Vec<f64> = off.iter().map(|&o| o as f64 * spacing).collect();
            let v = mollifier.eval(&x);
            if v * v > KERNEL_CUTOFF * peak * peak {
                offsets.push(off);
                raw.push(v);
                grads.push(mollifier.gradient(&x));
            }
        }
        let vol = spacing.powi(dim as i32);
        let total: f64 = raw.iter().map(|v| v * v).sum::<f64>() * vol;
        let rescale = 1.0 / total;
        let root = rescale.sqrt();
        Ok(Self {
            mollifier,
            spacing,
            weights: raw.iter().map(|v| v * v * rescale).collect(),
            amplitudes: raw.iter().map(|v| v * root).collect(),
            amplitude_gradients: grads
                .into_iter()
                .map(|g| g.into_iter().map(|c| c * root).collect())
                .collect(),
            offsets,
            rescale,
            radius,
        })
    }

    /// Kernel for `eps` on `grid` with the standard bump.
    pub fn on_grid(grid: &Grid, eps: f64) -> Result<Self> {
        let m = ScaledMollifier::new(BumpProfile::new(grid.dim())?, eps)?;
        Self::new(m, grid.spacing())
    }

    pub fn mollifier(&self) -> &ScaledMollifier {
        &self.mollifier
    }

    pub fn eps(&self) -> f64 {
        self.mollifier.eps()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Integer offsets `o` with |o·h| < ε.
    pub fn offsets(&self) -> &[Vec<isize>] {
        &self.offsets
    }

    /// κ_ε(o·h), summing to 1/h^d.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// √κ_ε(o·h).
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Analytic gradient of √κ_ε at the offsets.
    pub fn amplitude_gradients(&self) -> &[Vec<f64>] {
        &self.amplitude_gradients
    }

    /// Ratio between κ_ε and the continuum χ_ε²; tends to 1 as h/ε → 0.
    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    /// Largest per-axis offset in nodes.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Σ_o |∇√κ_ε(o·h)|² h^d, the grid counterpart of ε^{−2}∫|∇χ|².
    pub fn grad_energy(&self) -> f64 {
        let vol = self.spacing.powi(self.offsets[0].len() as i32);
        self.amplitude_gradients
            .iter()
            .map(|g| g.iter().map(|c| c * c).sum::<f64>())
            .sum::<f64>()
            * vol
    }

    /// Σ_o Σ_axes (√κ_ε(o+e) − √κ_ε(o))² h^{d−2}: the forward-difference
    /// Dirichlet energy of the sampled amplitude.
    pub fn difference_energy(&self) -> f64 {
        let d = self.offsets[0].len();
        let r = self.radius as isize;
        let side = (2 * r + 1) as usize;
        let mut table = vec![0.0; side.pow(d as u32)];
        let index = |o: &[isize]| -> Option<usize> {
            o.iter().try_fold(0usize, |acc, &c| {
                (c.abs() <= r).then(|| acc * side + (c + r) as usize)
            })
        };
        for (o, a) in self.offsets.iter().zip(&self.amplitudes) {
            if let Some(i) = index(o) {
                table[i] = *a;
            }
        }
        let wide = side + 1;
        let mut acc = 0.0;
        for mut f in 0..wide.pow(d as u32) {
            let mut o = vec![0isize; d];
            for a in (0..d).rev() {
                o[a] = (f % wide) as isize - r - 1;
                f /= wide;
            }
            let here = index(&o).map(|i| table[i]).unwrap_or(0.0);
            for a in 0..d {
                o[a] += 1;
                let next = index(&o).map(|i| table[i]).unwrap_or(0.0);
                o[a] -= 1;
                acc += (next - here) * (next - here);
            }
        }
        acc * self.spacing.powi(d as i32 - 2)
    }

    /// Σ_o |o·h|² κ_ε(o·h) h^d.
    pub fn second_moment(&self) -> f64 {
        let vol = self.spacing.powi(self.offsets[0].len() as i32);
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| {
                let r2: f64 = o.iter().map(|&i| (i as f64 * self.spacing).powi(2)).sum();
                r2 * w
            })
            .sum::<f64>()
            * vol
    }
}

/// ρ ∗ κ_ε on the same grid. Contributions that would land outside the
/// grid are dropped, so mass is preserved whenever the support of ρ stays
/// at least ε away from the boundary.
pub fn convolve_sq(rho: &GridDensity, m: &ScaledMollifier) -> Result<GridDensity> {
    let grid = rho.grid();
    let kernel = DiscreteKernel::new(*m, grid.spacing())?;
    Ok(convolve_with(rho, &kernel))
}

pub(crate) fn convolve_with(rho: &GridDensity, kernel: &DiscreteKernel) -> GridDensity {
    let grid = rho.grid();
    let vol = grid.cell_volume();
    let mut out = vec![0.0; grid.len()];
    for (x, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (off, w) in kernel.offsets().iter().zip(kernel.weights()) {
            if let Some(y) = grid.offset(x, off) {
                acc += rho.values()[y] * w;
            }
        }
        *o = acc * vol;
    }
    GridDensity::from_values(grid.clone(), out).expect("convolution of a density is a density")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Frozen reference values for the 1D bump.
    const NORM_1D: f64 = 2.741_155_145_706_972;
    const GRAD_SQ_1D: f64 = 3.077_609_131_231_777;
    const SECOND_1D: f64 = 0.114_927_245_845_481_9;

    fn trapezoid(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(-1.0 + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(1) - 2.0).abs() < 1e-15);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn normalized_in_several_dimensions() {
        let b = BumpProfile::new(1).unwrap();
        assert!((b.norm() - NORM_1D).abs() < 1e-12);
        // 2D: check ∫χ² = 1 by a polar trapezoid
        let b2 = BumpProfile::new(2).unwrap();
        let n = 200_000;
        let h = 1.0 / n as f64;
        let s: f64 = (1..n)
            .map(|i| {
                let r = i as f64 * h;
                r * b2.eval(&[r, 0.0]).powi(2)
            })
            .sum::<f64>()
            * h
            * 2.0
            * std::f64::consts::PI;
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moments_match_trapezoid_oracle() {
        let b = BumpProfile::new(1).unwrap();
        let m = b.moments().unwrap();
        assert!(m.grad_sq.error <= 1e-9 && m.second_moment.error <= 1e-9);
        let n = 1_000_000;
        let g = trapezoid(|x| b.gradient(&[x])[0].powi(2), n);
        let s = trapezoid(|x| x * x * b.eval(&[x]).powi(2), n);
        assert!((m.grad_sq.value / g - 1.0).abs() < 1e-8);
        assert!((m.second_moment.value / s - 1.0).abs() < 1e-8);
        assert!((m.grad_sq.value - GRAD_SQ_1D).abs() < 1e-10);
        assert!((m.second_moment.value - SECOND_1D).abs() < 1e-10);
        assert!(m.second_moment.value < 1.0);
    }

    #[test]
    fn scaled_moments() {
        let b = BumpProfile::new(1).unwrap();
        let m = b.moments().unwrap();
        for eps in [1.0, 0.1, 0.01] {
            let s = ScaledMollifier::new(b, eps).unwrap();
            let sq = integrate(|x| s.eval(&[x]).powi(2), -eps, eps, 1e-13).unwrap();
            assert!((sq.value - 1.0).abs() < 1e-10, "eps {eps}");
            let g = integrate(|x| s.gradient(&[x])[0].powi(2), -eps, eps, 1e-13 / (eps * eps)).unwrap();
            assert!((g.value / s.grad_sq(&m) - 1.0).abs() < 1e-8);
            let mm = integrate(|x| x * x * s.eval(&[x]).powi(2), -eps, eps, 1e-15).unwrap();
            assert!((mm.value / s.second_moment(&m) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn eval_examples() {
        let b = BumpProfile::new(1).unwrap();
        let s = ScaledMollifier::new(b, 0.3).unwrap();
        assert_eq!(s.eval(&[0.3]), 0.0);
        assert_eq!(s.eval(&[-0.31]), 0.0);
        let unit = ScaledMollifier::new(b, 1.0).unwrap();
        assert!((unit.eval(&[0.0]) - b.norm() * (-1f64).exp()).abs() < 1e-15);
        let b3 = BumpProfile::new(3).unwrap();
        let s3 = ScaledMollifier::new(b3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mx: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(s3.eval(&x), s3.eval(&mx));
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = ScaledMollifier::new(BumpProfile::new(2).unwrap(), 0.5).unwrap();
        let x = [0.1, -0.2];
        let g = s.gradient(&x);
        let d = 1e-6;
        for a in 0..2 {
            let mut p = x;
            let mut m = x;
            p[a] += d;
            m[a] -= d;
            let fd = (s.eval(&p) - s.eval(&m)) / (2.0 * d);
            assert!((fd - g[a]).abs() < 1e-6 * g[a].abs().max(1.0));
        }
    }

    #[test]
    fn h1_of_squared_bump_is_gradient_moment() {
        let b = BumpProfile::new(1).unwrap();
        let g_sq = b.moments().unwrap().grad_sq.value;
        for h in [0.1f64, 0.05, 0.02, 0.01] {
            let n = (2.4 / h).round() as usize + 1;
            let grid = Grid::line(-1.2, h, n).unwrap();
            let v = (0..n).map(|i| b.eval(&[grid.coord(i, 0)]).powi(2)).collect();
            let rho = GridDensity::from_values(grid, v).unwrap();
            let rel = (crate::grid::h1_seminorm_sqrt(&rho) - g_sq).abs() / g_sq;
            assert!(rel <= 2.5 * h * h, "h {h}: {rel}");
        }
    }

    #[test]
    fn discrete_kernel_normalized() {
        let g = Grid::line(0.0, 0.01, 10).unwrap();
        for eps in [0.02, 0.037, 0.1] {
            let k = DiscreteKernel::on_grid(&g, eps).unwrap();
            let s: f64 = k.weights().iter().sum::<f64>() * g.cell_volume();
            assert!((s - 1.0).abs() < 1e-14);
            let a: f64 = k.amplitudes().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
            assert!((a - 1.0).abs() < 1e-14);
        }
        assert!(matches!(
            DiscreteKernel::on_grid(&g, 0.005),
            Err(Error::KernelUnresolved { .. })
        ));
    }

    #[test]
    fn discrete_energy_approaches_continuum() {
        let b = BumpProfile::new(1).unwrap();
        let m = b.moments().unwrap();
        let g = Grid::line(0.0, 1.0 / 32.0, 10).unwrap();
        let k = DiscreteKernel::on_grid(&g, 1.0).unwrap();
        assert!((k.grad_energy() / m.grad_sq.value - 1.0).abs() < 1e-4);
        assert!((k.second_moment() / m.second_moment.value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn convolution_examples() {
        let g = Grid::line(-1.0, 0.02, 101).unwrap();
        let s = ScaledMollifier::new(BumpProfile::new(1).unwrap(), 0.1).unwrap();
        let k = DiscreteKernel::new(s, 0.02).unwrap();
        // point mass at the centre node
        let mut v = vec![0.0; 101];
        v[50] = 1.0 / 0.02;
        let rho = GridDensity::from_values(g.clone(), v).unwrap();
        let out = convolve_sq(&rho, &s).unwrap();
        for (off, w) in k.offsets().iter().zip(k.weights()) {
            let node = (50 + off[0]) as usize;
            assert!((out.values()[node] - w).abs() < 1e-12);
        }
        assert!((out.mass() - 1.0).abs() < 1e-14);
        // constant density
        let flat = GridDensity::from_values(g.clone(), vec![0.5; 101]).unwrap();
        let out = convolve_sq(&flat, &s).unwrap();
        for i in 10..91 {
            assert!((out.values()[i] - 0.5).abs() < 1e-12);
        }
        assert!(matches!(
            convolve_sq(&flat, &ScaledMollifier::new(*s.base(), 0.01).unwrap()),
            Err(Error::KernelUnresolved { .. })
        ));
    }

    #[test]
    fn convolution_error_is_second_order_in_eps() {
        let n = 4001;
        let h = 8.0 / (n - 1) as f64;
        let g = Grid::line(-4.0, h, n).unwrap();
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let x = -4.0 + i as f64 * h;
                (-x * x / 0.5).exp()
            })
            .collect();
        let rho = GridDensity::normalized(g, v).unwrap();
        let b = BumpProfile::new(1).unwrap();
        let epss = [0.4, 0.2, 0.1, 0.05];
        let errs: Vec<f64> = epss
            .iter()
            .map(|&e| {
                let c = convolve_sq(&rho, &ScaledMollifier::new(b, e).unwrap()).unwrap();
                c.l1_distance(&rho)
            })
            .collect();
        let slope = crate::loglog_slope(&epss, &errs);
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    }
}
