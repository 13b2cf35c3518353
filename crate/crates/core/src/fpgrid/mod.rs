//! Finite-volume Fokker–Planck lab on `(-1, 1)`.
//!
//! The generator acts on cell densities `p_i` as
//!
//! ```text
//! (L p)_i = (F_{i+1/2} - F_{i-1/2}) / h,
//! F_{i+1/2} = f(x_{i+1/2}) [ T (p_{i+1} - p_i)/h + p̄ W'(x_{i+1/2}) ],
//! ```
//!
//! with the Chang–Cooper weighting `p̄ = δ p_i + (1-δ) p_{i+1}`,
//! `δ = 1/z - 1/(e^z - 1)`, `z = h W'(x_{i+1/2}) / T`. The weighting follows
//! the sign of `W'` (it tends to full upwinding as `|z|` grows), keeps every
//! off-diagonal coupling positive for all `h`, and is exact for piecewise
//! linear `W`. Faces at `±1` carry no flux since `f(±1) = 0`.

mod evolve;
mod grid2d;
mod spectrum;

use nalgebra::DMatrix;

use crate::auxiliary::{effective_gradient_raw, AuxWorkspace, AuxiliarySpec};
use crate::error::{QdError, Result};
use crate::potentials::Potential;

pub use evolve::{
    b_function, evolve_density, hit_bound, z_trace, DensityPath, EvolveConfig, FokkerPlanck, HitBoundRow, ZtTrace,
    HIT_BOUND_SLACK, ZT_RANGE_RESOLUTION,
};
pub use grid2d::{evolve_density_2d, Grid2DProblem};
pub use spectrum::{
    gap_bound_sweep, poincare_c, rayleigh_ratio, spectral_gap, spectral_gap_symmetric, GapReport, GapSweep,
    SpectrumInfo, GAP_BOUND_FACTOR, SLOPE_MARGIN,
};

pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid1D {
    cells: usize,
}

impl Grid1D {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < MIN_CELLS {
            return Err(QdError::config(format!(
                "grid needs at least {MIN_CELLS} cells, got {cells}"
            )));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        2.0 / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.h()
    }

    /// Face `j` sits at `-1 + j h`, `j = 0..=cells`.
    pub fn face(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }
}

/// `B(z) = z / (e^z - 1)`, with `B(0) = 1`.
#[inline]
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Tridiagonal generator; `lower[i] = L[i+1][i]`, `upper[i] = L[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub gain: f64,
    pub label: String,
}

impl GeneratorMatrix {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * p[i];
                if i > 0 {
                    s += self.lower[i - 1] * p[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * p[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s += self.upper[j - 1];
                }
                if j + 1 < n {
                    s += self.lower[j];
                }
                s
            })
            .collect()
    }

    pub fn inf_norm(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.lower[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.upper[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i == j + 1 {
                self.lower[j]
            } else if j == i + 1 {
                self.upper[i]
            } else {
                0.0
            }
        })
    }

    /// Normalized null vector (`Σ p_i h = 1`) from detailed balance,
    /// `p_{i+1}/p_i = L[i+1][i] / L[i][i+1]`.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.size();
        let mut logp = vec![0.0; n];
        for i in 0..n - 1 {
            logp[i + 1] = logp[i] + self.lower[i].ln() - self.upper[i].ln();
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let mass: f64 = p.iter().sum::<f64>() * self.h;
        for v in p.iter_mut() {
            *v /= mass;
        }
        p
    }

    /// Similar symmetric tridiagonal matrix `D^{-1/2} L D^{1/2}` as `(diag, off)`.
    pub fn symmetrized(&self) -> (Vec<f64>, Vec<f64>) {
        let off = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (l * u).sqrt())
            .collect();
        (self.diag.clone(), off)
    }

    /// Solves `(I - dt L) y = rhs` by the Thomas algorithm. The matrix is
    /// column diagonally dominant, so no pivoting is needed.
    pub fn solve_implicit(&self, dt: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        let b0 = 1.0 - dt * self.diag[0];
        if b0 == 0.0 {
            return Err(QdError::Numeric("singular implicit-Euler system".into()));
        }
        c_prime[0] = if n > 1 { -dt * self.upper[0] / b0 } else { 0.0 };
        d_prime[0] = rhs[0] / b0;
        for i in 1..n {
            let a = -dt * self.lower[i - 1];
            let b = 1.0 - dt * self.diag[i];
            let denom = b - a * c_prime[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(QdError::Numeric(format!("implicit-Euler pivot {i} vanished")));
            }
            c_prime[i] = if i + 1 < n { -dt * self.upper[i] / denom } else { 0.0 };
            d_prime[i] = (rhs[i] - a * d_prime[i - 1]) / denom;
        }
        let mut y = vec![0.0; n];
        y[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = d_prime[i] - c_prime[i] * y[i + 1];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QdError::Numeric(
                "implicit-Euler solve produced non-finite values".into(),
            ));
        }
        Ok(y)
    }
}

/// Assembles the conservative generator of `p ↦ d/dx[f (T p' + p W')]`.
pub fn build_generator(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    temperature: f64,
    grid: &Grid1D,
    gain: f64,
) -> Result<GeneratorMatrix> {
    if p.dim() != 1 {
        return Err(QdError::UnsupportedDimension {
            n: p.dim(),
            what: "1-D generator",
        });
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(QdError::config(format!("generator needs T > 0, got {temperature}")));
    }
    if !(gain > 0.0) {
        return Err(QdError::config(format!("gain w={gain} must be > 0")));
    }
    if !(gamma >= 0.0) {
        return Err(QdError::config(format!("Γ={gamma} must be >= 0")));
    }
    let n = grid.cells();
    let h = grid.h();
    let mut lower = vec![0.0; n - 1];
    let mut upper = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut ws = AuxWorkspace::new(1);
    let mut ag = [0.0];
    let mut wp = [0.0];
    for j in 1..n {
        let xf = grid.face(j);
        effective_gradient_raw(p, aux, gamma, &[xf], &mut ws, &mut ag, &mut wp);
        if !wp[0].is_finite() {
            return Err(QdError::Evaluation {
                what: "W'",
                point: vec![xf],
            });
        }
        let f = (1.0 - xf * xf) / gain;
        let scale = f * temperature / (h * h);
        let z = h * wp[0] / temperature;
        let fwd = scale * bernoulli(z); // i -> i+1
        let bwd = scale * bernoulli(-z); // i+1 -> i
        lower[j - 1] = fwd;
        upper[j - 1] = bwd;
        diag[j - 1] -= fwd;
        diag[j] -= bwd;
    }
    Ok(GeneratorMatrix {
        lower,
        diag,
        upper,
        h,
        temperature,
        gamma,
        gain,
        label: format!("{} aux={} Γ={gamma} T={temperature}", p.name(), aux.kind()),
    })
}

#[cfg(test)]
mod tests;
