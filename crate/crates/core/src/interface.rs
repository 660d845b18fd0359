//! Equispaced interface grid on the unit circle and the Fourier plate space.
//!
//! Coefficient layout per component: `[a_0, a_1, b_1, ..., a_K, b_K]` for
//! `f(z) = a_0 + Σ a_m cos(mz) + b_m sin(mz)`. When `K = M/2` the slot `b_K`
//! is kept at zero, since `sin(Kz)` vanishes on the grid.

use crate::error::{FpsiError, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct InterfaceGrid {
    pub m: usize,
    pub k: usize,
    pub samples: Vec<f64>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

impl InterfaceGrid {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if m == 0 || m % 2 == 1 {
            return Err(FpsiError::InvalidGrid(format!("sample count M={m} must be even and positive")));
        }
        if k < 2 {
            return Err(FpsiError::InvalidGrid(format!("mode count K={k} must be at least 2")));
        }
        if 2 * k > m {
            return Err(FpsiError::InvalidGrid(format!("K={k} exceeds M/2={} (aliasing)", m / 2)));
        }
        let samples = (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect();
        let mut cos_table = Vec::with_capacity(m);
        let mut sin_table = Vec::with_capacity(m);
        for i in 0..m {
            let (s, c) = match (4 * i) % m == 0 {
                true => match 4 * i / m {
                    0 => (0.0, 1.0),
                    1 => (1.0, 0.0),
                    2 => (0.0, -1.0),
                    _ => (-1.0, 0.0),
                },
                false => (2.0 * PI * i as f64 / m as f64).sin_cos(),
            };
            cos_table.push(c);
            sin_table.push(s);
        }
        Ok(Self { m, k, samples, cos_table, sin_table })
    }

    pub fn n_coeffs(&self) -> usize {
        2 * self.k + 1
    }

    /// Trapezoid weight 2π/M.
    pub fn weight(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    /// (mode number, is sine slot) of a coefficient index.
    pub fn mode_of(&self, i: usize) -> (usize, bool) {
        if i == 0 {
            (0, false)
        } else {
            ((i + 1) / 2, i % 2 == 0)
        }
    }

    fn is_nyquist(&self, mode: usize) -> bool {
        2 * mode == self.m
    }

    /// Weight of a coefficient in the discrete L² inner product.
    pub fn coeff_weight(&self, i: usize) -> f64 {
        let (mode, sine) = self.mode_of(i);
        if mode == 0 {
            2.0 * PI
        } else if self.is_nyquist(mode) {
            if sine {
                0.0
            } else {
                2.0 * PI
            }
        } else {
            PI
        }
    }

    /// `cos(mode * z_j)` from the exact table.
    pub fn cos_at(&self, mode: usize, j: usize) -> f64 {
        self.cos_table[(mode * j) % self.m]
    }

    pub fn sin_at(&self, mode: usize, j: usize) -> f64 {
        self.sin_table[(mode * j) % self.m]
    }

    /// Basis function of coefficient `i` at sample `j`.
    pub fn basis_at(&self, i: usize, j: usize) -> f64 {
        let (mode, sine) = self.mode_of(i);
        if mode == 0 {
            1.0
        } else if sine {
            if self.is_nyquist(mode) {
                0.0
            } else {
                self.sin_at(mode, j)
            }
        } else {
            self.cos_at(mode, j)
        }
    }

    /// Discrete Fourier projection of samples onto the retained modes.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.m);
        let mut c = vec![0.0; self.n_coeffs()];
        for i in 0..self.n_coeffs() {
            let w = self.coeff_weight(i);
            if w == 0.0 {
                continue;
            }
            let s: f64 = (0..self.m).map(|j| f[j] * self.basis_at(i, j)).sum();
            c[i] = s * self.weight() / w;
        }
        c
    }

    /// Values at the grid samples.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        (0..self.m).map(|j| (0..self.n_coeffs()).map(|i| c[i] * self.basis_at(i, j)).sum()).collect()
    }

    /// Row-major `n_coeffs × M` projection matrix.
    pub fn projection_matrix(&self) -> Vec<f64> {
        let n = self.n_coeffs();
        let mut p = vec![0.0; n * self.m];
        for i in 0..n {
            let w = self.coeff_weight(i);
            if w == 0.0 {
                continue;
            }
            for j in 0..self.m {
                p[i * self.m + j] = self.basis_at(i, j) * self.weight() / w;
            }
        }
        p
    }

    /// Row-major `M × n_coeffs` synthesis matrix.
    pub fn synthesis_matrix(&self) -> Vec<f64> {
        let n = self.n_coeffs();
        let mut s = vec![0.0; n * self.m];
        for j in 0..self.m {
            for i in 0..n {
                s[j * n + i] = self.basis_at(i, j);
            }
        }
        s
    }

    /// Evaluate the `order`-th derivative of a coefficient vector at any z.
    pub fn eval_at(&self, c: &[f64], z: f64, order: u32) -> f64 {
        let mut v = if order == 0 { c[0] } else { 0.0 };
        for mode in 1..=self.k {
            let (a, b) = (c[2 * mode - 1], c[2 * mode]);
            let mf = mode as f64;
            let (s, co) = (mf * z).sin_cos();
            // d^n/dz^n of a cos + b sin cycles with period 4.
            let scale = mf.powi(order as i32);
            let term = match order % 4 {
                0 => a * co + b * s,
                1 => -a * s + b * co,
                2 => -a * co - b * s,
                _ => a * s - b * co,
            };
            v += scale * term;
        }
        v
    }
}

/// Vector-valued function in the Fourier plate space.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateField {
    pub c: [Vec<f64>; 2],
}

impl PlateField {
    pub fn zeros(grid: &InterfaceGrid) -> Self {
        let n = grid.n_coeffs();
        Self { c: [vec![0.0; n], vec![0.0; n]] }
    }

    pub fn from_samples(grid: &InterfaceGrid, s: &[Vec<f64>; 2]) -> Self {
        Self { c: [grid.project(&s[0]), grid.project(&s[1])] }
    }

    /// Project a function of z sampled on the grid.
    pub fn from_fn(grid: &InterfaceGrid, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let vals: Vec<[f64; 2]> = grid.samples.iter().map(|&z| f(z)).collect();
        let s = [vals.iter().map(|v| v[0]).collect(), vals.iter().map(|v| v[1]).collect()];
        Self::from_samples(grid, &s)
    }

    pub fn samples(&self, grid: &InterfaceGrid) -> [Vec<f64>; 2] {
        [grid.synthesize(&self.c[0]), grid.synthesize(&self.c[1])]
    }

    pub fn eval(&self, grid: &InterfaceGrid, z: f64, order: u32) -> [f64; 2] {
        [grid.eval_at(&self.c[0], z, order), grid.eval_at(&self.c[1], z, order)]
    }

    /// Spectral derivative d/dz.
    pub fn derivative(&self, grid: &InterfaceGrid) -> Self {
        let mut out = Self::zeros(grid);
        for comp in 0..2 {
            for mode in 1..=grid.k {
                let mf = mode as f64;
                let (a, b) = (self.c[comp][2 * mode - 1], self.c[comp][2 * mode]);
                out.c[comp][2 * mode - 1] = mf * b;
                out.c[comp][2 * mode] = -mf * a;
            }
        }
        out
    }

    /// Spectral second derivative (the interface Laplacian).
    pub fn laplacian(&self, grid: &InterfaceGrid) -> Self {
        let mut out = self.clone();
        for comp in 0..2 {
            out.c[comp][0] = 0.0;
            for i in 1..grid.n_coeffs() {
                let mf = grid.mode_of(i).0 as f64;
                out.c[comp][i] *= -mf * mf;
            }
        }
        out
    }

    pub fn dot(&self, other: &Self, grid: &InterfaceGrid) -> f64 {
        let mut s = 0.0;
        for comp in 0..2 {
            for i in 0..grid.n_coeffs() {
                s += grid.coeff_weight(i) * self.c[comp][i] * other.c[comp][i];
            }
        }
        s
    }

    /// Discrete L²(Γ) norm squared (equal to the trapezoid rule on the grid).
    pub fn norm_sq(&self, grid: &InterfaceGrid) -> f64 {
        self.dot(self, grid)
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for comp in 0..2 {
            for (o, v) in out.c[comp].iter_mut().zip(&other.c[comp]) {
                *o += a * v;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        for comp in 0..2 {
            out.c[comp].iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max(sup|f - g|, sup|f' - g'|) over a grid refined `refine` times.
    pub fn c1_distance(&self, other: &Self, grid: &InterfaceGrid, refine: usize) -> f64 {
        let d = self.sub(other);
        let n = grid.m * refine.max(1);
        let mut worst = 0.0f64;
        for j in 0..n {
            let z = 2.0 * PI * j as f64 / n as f64;
            for order in 0..2 {
                let v = d.eval(grid, z, order);
                worst = worst.max((v[0] * v[0] + v[1] * v[1]).sqrt());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let g = InterfaceGrid::new(8, 2).unwrap();
        for (j, z) in g.samples.iter().enumerate() {
            assert!((z - j as f64 * PI / 4.0).abs() < 1e-15);
        }
        assert!(InterfaceGrid::new(7, 2).is_err());
        assert!(InterfaceGrid::new(8, 5).is_err());
        assert!(InterfaceGrid::new(8, 1).is_err());
        assert!(InterfaceGrid::new(8, 4).is_ok());
    }

    #[test]
    fn band_limited_round_trip() {
        let g = InterfaceGrid::new(64, 16).unwrap();
        let f: Vec<f64> = g.samples.iter().map(|&z| 0.3 + (3.0 * z).cos() - 0.2 * (16.0 * z).sin() + 0.7 * (16.0 * z).cos()).collect();
        let c = g.project(&f);
        let back = g.synthesize(&c);
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_mode_round_trip_and_parseval() {
        let g = InterfaceGrid::new(16, 8).unwrap();
        let f: Vec<f64> = g.samples.iter().map(|&z| (8.0 * z).cos() + 0.5 * (3.0 * z).sin()).collect();
        let c = g.project(&f);
        assert!((c[15] - 1.0).abs() < 1e-14 && c[16] == 0.0);
        let p = PlateField { c: [c.clone(), vec![0.0; c.len()]] };
        let trap: f64 = f.iter().map(|v| v * v).sum::<f64>() * g.weight();
        assert!((p.norm_sq(&g) - trap).abs() < 1e-12);
    }

    #[test]
    fn spectral_derivative_matches_eval() {
        let g = InterfaceGrid::new(32, 6).unwrap();
        let p = PlateField::from_fn(&g, |z| [(2.0 * z).sin(), 0.1 * (5.0 * z).cos()]);
        let d = p.derivative(&g);
        for z in [0.1, 1.3, 4.0] {
            let a = d.eval(&g, z, 0);
            let b = p.eval(&g, z, 1);
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
            assert!((a[0] - 2.0 * (2.0 * z).cos()).abs() < 1e-12);
        }
    }
}
