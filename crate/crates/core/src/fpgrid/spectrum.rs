use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{b_function, build_generator, GeneratorMatrix, Grid1D};
use crate::auxiliary::{aux_range, AuxiliarySpec};
use crate::error::{QdError, Result};
use crate::gibbs::{density_grid, m_star, tv_between, GibbsSpec};
use crate::potentials::Potential;
use crate::schedules::QuantumSchedule;

/// Eigenvalues with imaginary parts above `IMAG_TOL * ρ(L)` are an error.
const IMAG_TOL: f64 = 1e-8;
const SCHUR_MAX_ITER: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInfo {
    /// Second-smallest `|Re λ|`.
    pub gap: f64,
    /// `|Re λ|` of the eigenvalue closest to zero.
    pub zero_eigenvalue: f64,
    pub spectral_radius: f64,
    pub max_imag: f64,
}

fn summarize(mut re_abs: Vec<f64>, spectral_radius: f64, max_imag: f64) -> Result<SpectrumInfo> {
    if re_abs.len() < 2 {
        return Err(QdError::Numeric("spectrum needs at least two eigenvalues".into()));
    }
    re_abs.sort_by(f64::total_cmp);
    Ok(SpectrumInfo {
        gap: re_abs[1],
        zero_eigenvalue: re_abs[0],
        spectral_radius,
        max_imag,
    })
}

/// Spectral gap from the dense nonsymmetric eigenproblem of `L`.
pub fn spectral_gap(l: &GeneratorMatrix) -> Result<SpectrumInfo> {
    let dense = l.to_dense();
    let schur = Schur::try_new(dense, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| QdError::Numeric(format!("Schur decomposition did not converge for {}", l.label)))?;
    let eig = schur.complex_eigenvalues();
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_imag > IMAG_TOL * rho.max(f64::MIN_POSITIVE) {
        return Err(QdError::Numeric(format!(
            "generator {} has complex eigenvalues (max |Im| = {max_imag:e}, ρ = {rho:e})",
            l.label
        )));
    }
    summarize(eig.iter().map(|z| z.re.abs()).collect(), rho, max_imag)
}

/// Spectral gap through the symmetrized tridiagonal form; cheaper and used
/// as a cross-check of [`spectral_gap`].
pub fn spectral_gap_symmetric(l: &GeneratorMatrix) -> Result<SpectrumInfo> {
    let (d, off) = l.symmetrized();
    let n = d.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            d[i]
        } else if i == j + 1 {
            off[j]
        } else if j == i + 1 {
            off[i]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| QdError::Numeric("symmetric eigensolver did not converge".into()))?;
    let rho = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    summarize(eig.eigenvalues.iter().map(|v| v.abs()).collect(), rho, 0.0)
}

fn poincare_cache() -> &'static Mutex<HashMap<(usize, u64), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Weighted Poincaré constant `c = inf ∫ f φ'^2 / (2 ∫ φ^2)` over mean-zero
/// `φ` with `f = (1 - x^2)/w`, discretized on `grid`.
///
/// Computed as the smallest eigenvalue of the cell stiffness matrix with the
/// constant mode shifted out of the way. Results are cached per `(N, w)`.
pub fn poincare_c(grid: &Grid1D, gain: f64) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(QdError::config(format!("gain w={gain} must be > 0")));
    }
    let key = (grid.cells(), gain.to_bits());
    if let Some(&c) = poincare_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(c);
    }
    let n = grid.cells();
    let h = grid.h();
    // A = K / (4h) with K_ij from 2 Σ_faces f (Δφ)^2 / h.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 1..n {
        let xf = grid.face(j);
        let f = (1.0 - xf * xf) / gain;
        let k = 2.0 * f / h / (4.0 * h);
        a[(j - 1, j - 1)] += k;
        a[(j, j)] += k;
        a[(j - 1, j)] -= k;
        a[(j, j - 1)] -= k;
    }
    let shift = 2.0
        * (0..n)
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    a.add_scalar_mut(shift / n as f64);
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| QdError::Numeric("Poincaré eigensolver did not converge".into()))?;
    let c = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    poincare_cache().lock().expect("cache poisoned").insert(key, c);
    Ok(c)
}

/// Dirichlet form over variance, `E(φ, φ) / Var_π(φ)`, with `π` the
/// stationary law of `l`. Every such ratio bounds the gap from above.
pub fn rayleigh_ratio(l: &GeneratorMatrix, phi: &[f64]) -> Result<f64> {
    let n = l.size();
    if phi.len() != n {
        return Err(QdError::config(format!(
            "test function has {} values, grid has {n}",
            phi.len()
        )));
    }
    let pi: Vec<f64> = l.stationary().iter().map(|p| p * l.h).collect();
    let mean: f64 = pi.iter().zip(phi).map(|(p, v)| p * v).sum();
    let var: f64 = pi.iter().zip(phi).map(|(p, v)| p * (v - mean) * (v - mean)).sum();
    let second: f64 = pi.iter().zip(phi).map(|(p, v)| p * v * v).sum();
    if !(var > 1e-12 * second) {
        return Err(QdError::config("test function is constant under the stationary law"));
    }
    let energy: f64 = (0..n - 1)
        .map(|i| pi[i] * l.lower[i] * (phi[i + 1] - phi[i]).powi(2))
        .sum();
    Ok(energy / var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub temperature: f64,
    pub gamma: f64,
    pub gap: f64,
    /// Gap from the symmetrized problem.
    pub gap_symmetric: f64,
    pub max_imag: f64,
    pub c: f64,
    pub m_star: f64,
    /// `c T exp(-2 M*/T)`.
    pub bound: f64,
    pub bound_ratio: f64,
    pub pass: bool,
    /// TV between the generator's null vector and the cell Gibbs masses.
    pub stationary_tv: f64,
    /// `max |column sum|` relative to `‖L‖∞`.
    pub mass_defect: f64,
    /// `(t, B(t))` probes when a quantum schedule is supplied; `None`
    /// marks a non-positive denominator.
    pub b_probe: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSweep {
    pub potential: String,
    pub aux: String,
    pub cells: usize,
    pub gain: f64,
    pub reports: Vec<GapReport>,
    /// Least-squares slope of `ln γ` against `1/T`.
    pub arrhenius_slope: Option<f64>,
    /// `-2 M* (1 + 0.1)`.
    pub slope_floor: Option<f64>,
    pub slope_pass: Option<bool>,
    pub all_pass: bool,
}

pub const GAP_BOUND_FACTOR: f64 = 0.9;
pub const SLOPE_MARGIN: f64 = 0.1;
const B_PROBE_TIMES: [f64; 4] = [0.0, 1.0, 10.0, 100.0];

/// Gap of the generator at each temperature, compared against
/// `c T exp(-2 M*/T)` at fixed `Γ`.
#[allow(clippy::too_many_arguments)]
pub fn gap_bound_sweep(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    temperatures: &[f64],
    grid: &Grid1D,
    gain: f64,
    m_star_resolution: usize,
    schedule: Option<&QuantumSchedule>,
) -> Result<GapSweep> {
    if temperatures.is_empty() {
        return Err(QdError::config("gap sweep needs at least one temperature"));
    }
    let c = poincare_c(grid, gain)?;
    let ms = m_star(p, aux, gamma, m_star_resolution)?;
    let m_tilde = if aux.is_none() {
        0.0
    } else {
        aux_range(aux, p, m_star_resolution)?.range
    };
    let reports = temperatures
        .par_iter()
        .map(|&t| -> Result<GapReport> {
            let l = build_generator(p, aux, gamma, t, grid, gain)?;
            let dense = spectral_gap(&l)?;
            let sym = spectral_gap_symmetric(&l)?;
            let gibbs = density_grid(
                &GibbsSpec {
                    potential: p.clone(),
                    aux: aux.clone(),
                    gamma,
                    temperature: t,
                },
                grid.cells(),
            )?;
            let stat: Vec<f64> = l.stationary().iter().map(|v| v * l.h).collect();
            let stationary_tv = tv_between(&stat, &gibbs.masses())?;
            let norm = l.inf_norm();
            let mass_defect = l.column_sums().iter().map(|s| s.abs()).fold(0.0, f64::max) / norm;
            let bound = c * t * (-2.0 * ms / t).exp();
            let b_probe = match schedule {
                Some(q) => B_PROBE_TIMES
                    .iter()
                    .map(|&tp| -> Result<(f64, Option<f64>)> {
                        let (g, gdot) = q.at(tp);
                        let ms_t = m_star(p, aux, g, m_star_resolution)?;
                        Ok((tp, b_function(m_tilde, c, t, gdot, ms_t)))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            Ok(GapReport {
                temperature: t,
                gamma,
                gap: dense.gap,
                gap_symmetric: sym.gap,
                max_imag: dense.max_imag,
                c,
                m_star: ms,
                bound,
                bound_ratio: dense.gap / bound,
                pass: dense.gap >= GAP_BOUND_FACTOR * bound,
                stationary_tv,
                mass_defect,
                b_probe,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (arrhenius_slope, slope_floor, slope_pass) = if reports.len() >= 2 {
        let xs: Vec<f64> = reports.iter().map(|r| 1.0 / r.temperature).collect();
        let ys: Vec<f64> = reports.iter().map(|r| r.gap.ln()).collect();
        let slope = least_squares_slope(&xs, &ys);
        let floor = -2.0 * ms * (1.0 + SLOPE_MARGIN);
        (Some(slope), Some(floor), Some(slope >= floor))
    } else {
        (None, None, None)
    };
    let all_pass = reports.iter().all(|r| r.pass) && slope_pass.unwrap_or(true);
    Ok(GapSweep {
        potential: p.name().to_string(),
        aux: aux.kind().to_string(),
        cells: grid.cells(),
        gain,
        reports,
        arrhenius_slope,
        slope_floor,
        slope_pass,
        all_pass,
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
