//! Gibbs and Γ-tilted densities on tensor grids, set masses and histogram
//! distances.
//!
//! Densities are midpoint-rule discretizations of
//! `μ_Γ(x) ∝ exp(-(V(x) - Γ Ṽ(x)) / T)` on `resolution^n` equal cells
//! covering `(-1,1)^n`, `n <= 3`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::auxiliary::{effective_value_raw, AuxWorkspace, AuxiliarySpec};
use crate::dynamics::TargetSet;
use crate::error::{QdError, Result};
use crate::potentials::{grid_range, Potential, MAX_GRID_DIM};

#[derive(Debug, Clone)]
pub struct GibbsSpec {
    pub potential: Potential,
    pub aux: AuxiliarySpec,
    pub gamma: f64,
    pub temperature: f64,
}

impl GibbsSpec {
    pub fn plain(potential: Potential, temperature: f64) -> Self {
        Self {
            potential,
            aux: AuxiliarySpec::None,
            gamma: 0.0,
            temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub dim: usize,
    /// Cells per axis.
    pub resolution: usize,
    pub cell_volume: f64,
    /// Row-major, last axis fastest.
    pub density: Vec<f64>,
    /// `ln Z_Γ`; kept separately because `Z_Γ` itself underflows at small T.
    pub log_z: f64,
    pub temperature: f64,
    pub gamma: f64,
}

/// Cell centers of `resolution` equal cells on `(-1,1)`.
pub fn axis_centers(resolution: usize) -> Vec<f64> {
    let h = 2.0 / resolution as f64;
    (0..resolution).map(|i| -1.0 + (i as f64 + 0.5) * h).collect()
}

fn unflatten(mut flat: usize, resolution: usize, dim: usize, out: &mut [usize]) {
    for k in (0..dim).rev() {
        out[k] = flat % resolution;
        flat /= resolution;
    }
}

impl DensityGrid {
    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn partition(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let centers = axis_centers(self.resolution);
        let mut idx = vec![0; self.dim];
        unflatten(flat, self.resolution, self.dim, &mut idx);
        idx.iter().map(|&i| centers[i]).collect()
    }

    /// Probability mass per cell.
    pub fn masses(&self) -> Vec<f64> {
        self.density.iter().map(|d| d * self.cell_volume).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_volume
    }

    /// Merges `factor^n` neighbouring cells into one.
    pub fn coarsen(&self, factor: usize) -> Result<DensityGrid> {
        if factor == 0 || !self.resolution.is_multiple_of(factor) {
            return Err(QdError::config(format!(
                "coarsening factor {factor} does not divide resolution {}",
                self.resolution
            )));
        }
        let r = self.resolution / factor;
        let mut mass = vec![0.0; r.pow(self.dim as u32)];
        let mut idx = vec![0; self.dim];
        for (flat, d) in self.density.iter().enumerate() {
            unflatten(flat, self.resolution, self.dim, &mut idx);
            let target = idx.iter().fold(0, |acc, &i| acc * r + i / factor);
            mass[target] += d * self.cell_volume;
        }
        let cell_volume = self.cell_volume * (factor as f64).powi(self.dim as i32);
        Ok(DensityGrid {
            dim: self.dim,
            resolution: r,
            cell_volume,
            density: mass.into_iter().map(|m| m / cell_volume).collect(),
            log_z: self.log_z,
            temperature: self.temperature,
            gamma: self.gamma,
        })
    }

    /// CSV with columns `x1..xn,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        for (flat, d) in self.density.iter().enumerate() {
            let mut row: Vec<String> = self.cell_center(flat).iter().map(|c| format!("{c:.12e}")).collect();
            row.push(format!("{d:.12e}"));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| QdError::io("<csv>", e))?;
        Ok(())
    }
}

/// Evaluates `W = V - Γ Ṽ` at every cell center.
pub fn effective_on_cells(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    dim: usize,
    resolution: usize,
) -> Result<Vec<f64>> {
    let centers = axis_centers(resolution);
    let total = resolution.pow(dim as u32);
    let mut ws = AuxWorkspace::new(dim);
    let mut idx = vec![0; dim];
    let mut x = vec![0.0; dim];
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        unflatten(flat, resolution, dim, &mut idx);
        for (xk, &i) in x.iter_mut().zip(&idx) {
            *xk = centers[i];
        }
        let w = effective_value_raw(p, aux, gamma, &x, &mut ws);
        if !w.is_finite() {
            return Err(QdError::Evaluation {
                what: "effective potential",
                point: x,
            });
        }
        out.push(w);
    }
    Ok(out)
}

/// Normalized `exp(-W/T)` on cells, with the minimum of `W` subtracted
/// before exponentiation.
pub fn density_grid(spec: &GibbsSpec, resolution: usize) -> Result<DensityGrid> {
    let dim = spec.potential.dim();
    if dim > MAX_GRID_DIM {
        return Err(QdError::UnsupportedDimension {
            n: dim,
            what: "density grid",
        });
    }
    if !(spec.temperature > 0.0) || !spec.temperature.is_finite() {
        return Err(QdError::config(format!(
            "Gibbs density needs T > 0, got {}",
            spec.temperature
        )));
    }
    if !(spec.gamma >= 0.0) {
        return Err(QdError::config(format!("Γ={} must be >= 0", spec.gamma)));
    }
    if resolution == 0 {
        return Err(QdError::config("density grid resolution must be positive"));
    }
    let w = effective_on_cells(&spec.potential, &spec.aux, spec.gamma, dim, resolution)?;
    Ok(density_from_effective(
        &w,
        dim,
        resolution,
        spec.temperature,
        spec.gamma,
    ))
}

pub(crate) fn density_from_effective(
    w: &[f64],
    dim: usize,
    resolution: usize,
    temperature: f64,
    gamma: f64,
) -> DensityGrid {
    let cell_volume = (2.0 / resolution as f64).powi(dim as i32);
    let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let mut density: Vec<f64> = w.iter().map(|wi| (-(wi - w_min) / temperature).exp()).collect();
    let sum: f64 = density.iter().sum::<f64>() * cell_volume;
    for d in density.iter_mut() {
        *d /= sum;
    }
    DensityGrid {
        dim,
        resolution,
        cell_volume,
        density,
        log_z: -w_min / temperature + sum.ln(),
        temperature,
        gamma,
    }
}

/// `M*(Γ) = sup W - inf W` over an inclusive grid of `resolution` points per axis.
pub fn m_star(p: &Potential, aux: &AuxiliarySpec, gamma: f64, resolution: usize) -> Result<f64> {
    let mut ws = AuxWorkspace::new(p.dim());
    let r = grid_range(p.dim(), resolution, |x| {
        let w = effective_value_raw(p, aux, gamma, x, &mut ws);
        if w.is_finite() {
            Ok(w)
        } else {
            Err(QdError::Evaluation {
                what: "effective potential",
                point: x.to_vec(),
            })
        }
    })?;
    Ok(r.range)
}

/// Mass of the cells whose centers lie in `s`.
pub fn gibbs_mass(grid: &DensityGrid, s: &TargetSet) -> f64 {
    grid.density
        .iter()
        .enumerate()
        .filter(|(flat, _)| s.contains(&grid.cell_center(*flat)))
        .map(|(_, d)| d * grid.cell_volume)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Equal-width bin counts over `(-1,1)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dim: usize,
    pub bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(dim: usize, bins: usize) -> Self {
        Self {
            dim,
            bins,
            counts: vec![0; bins.pow(dim as u32)],
            total: 0,
        }
    }

    pub fn bin_of(&self, x: &[f64]) -> usize {
        x.iter().take(self.dim).fold(0, |acc, &xi| {
            let b = (((xi + 1.0) * 0.5 * self.bins as f64).floor() as i64).clamp(0, self.bins as i64 - 1);
            acc * self.bins + b as usize
        })
    }

    pub fn add(&mut self, x: &[f64]) {
        let b = self.bin_of(x);
        self.counts[b] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.dim != self.dim || other.bins != self.bins {
            return Err(QdError::config("histogram geometry mismatch in merge"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// `½ Σ |p_i - q_i|` between two probability vectors.
pub fn tv_between(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(QdError::config(format!(
            "bin count mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Total variation between an empirical histogram and a density grid with
/// the same bin geometry.
pub fn tv_distance(hist: &Histogram, grid: &DensityGrid) -> Result<f64> {
    if hist.dim != grid.dim || hist.bins != grid.resolution {
        return Err(QdError::config(format!(
            "histogram ({}-D, {} bins/axis) does not match grid ({}-D, {} cells/axis)",
            hist.dim, hist.bins, grid.dim, grid.resolution
        )));
    }
    tv_between(&hist.probabilities(), &grid.masses())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::catalog_make;
    use serde_json::json;

    fn dw() -> Potential {
        catalog_make("double_well", &json!({"a": 0.5})).unwrap()
    }

    #[test]
    fn constant_potential_gives_uniform_density() {
        for n in 1..=3 {
            let p = catalog_make("constant", &json!({"value": 0.7, "n": n})).unwrap();
            let g = density_grid(&GibbsSpec::plain(p, 0.5), 8).unwrap();
            let u = 1.0 / 2f64.powi(n);
            assert!(g.density.iter().all(|d| (d - u).abs() < 1e-14));
            // Z = 2^n exp(-n*0.7/T) for the separable constant.
            let expect = (n as f64) * 2f64.ln() - n as f64 * 0.7 / 0.5;
            assert!((g.log_z - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gamma_matches_plain_gibbs() {
        let spec = GibbsSpec {
            potential: dw(),
            aux: AuxiliarySpec::HessianQuadratic { eps: vec![0.1] },
            gamma: 0.0,
            temperature: 0.4,
        };
        let a = density_grid(&spec, 256).unwrap();
        let b = density_grid(&GibbsSpec::plain(dw(), 0.4), 256).unwrap();
        assert_eq!(a.density, b.density);
    }

    #[test]
    fn double_well_modes_are_symmetric() {
        let g = density_grid(&GibbsSpec::plain(dw(), 0.4), 4096).unwrap();
        let m = g.masses();
        let left: f64 = m[..2048].iter().sum();
        assert!((left - 0.5).abs() < 1e-6);
        for i in 0..2048 {
            assert!((g.density[i] - g.density[4095 - i]).abs() < 1e-12);
        }
        let peak = g
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((g.cell_center(peak)[0].abs() - 0.5).abs() < 2e-3);
    }

    #[test]
    fn normalization_holds_at_every_resolution() {
        for r in [3, 16, 100, 1000] {
            let g = density_grid(&GibbsSpec::plain(dw(), 0.05), r).unwrap();
            assert!((g.total_mass() - 1.0).abs() < 1e-10);
            assert!(g.density.iter().all(|d| *d >= 0.0));
        }
        let p2 = catalog_make("multi_well_cos", &json!({"n": 2})).unwrap();
        let g = density_grid(&GibbsSpec::plain(p2, 0.2), 64).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partition_function_is_refinement_stable() {
        let potentials = [
            dw(),
            catalog_make("tilted_double_well", &json!({"a": 0.5, "b": 0.05})).unwrap(),
            catalog_make("multi_well_cos", &json!({})).unwrap(),
            catalog_make("quadratic_bowl", &json!({"n": 2})).unwrap(),
        ];
        for p in &potentials {
            for t in [0.1, 0.4, 1.0] {
                let r = if p.dim() == 1 { 512 } else { 128 };
                let a = density_grid(&GibbsSpec::plain(p.clone(), t), r).unwrap();
                let b = density_grid(&GibbsSpec::plain(p.clone(), t), 2 * r).unwrap();
                let rel = (a.log_z - b.log_z).exp() - 1.0;
                assert!(rel.abs() < 1e-4, "{} T={t}: {rel}", p.name());
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(density_grid(&GibbsSpec::plain(dw(), 0.0), 16).is_err());
        let p4 = catalog_make("quadratic_bowl", &json!({"n": 4})).unwrap();
        assert!(matches!(
            density_grid(&GibbsSpec::plain(p4, 1.0), 4),
            Err(QdError::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn m_star_examples() {
        let p = dw();
        let m0 = m_star(&p, &AuxiliarySpec::Contraction, 0.0, 4097).unwrap();
        assert!((m0 - 0.5625).abs() < 1e-12);
        let mc = m_star(&p, &AuxiliarySpec::Contraction, 0.25, 4097).unwrap();
        assert!((mc - 0.421875).abs() < 1e-12);
        // Oracle: scan (x²-¼)² + ε²(12x²-1) directly.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..4097 {
            let x = -1.0 + 2.0 * i as f64 / 4096.0;
            let w = (x * x - 0.25f64).powi(2) + 0.01 * (12.0 * x * x - 1.0);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        let mh = m_star(&p, &AuxiliarySpec::HessianQuadratic { eps: vec![0.1] }, 1.0, 4097).unwrap();
        assert!((mh - (hi - lo)).abs() < 1e-12);
    }

    #[test]
    fn gibbs_mass_examples() {
        let p = dw();
        let g = density_grid(&GibbsSpec::plain(p.clone(), 0.1), 2048).unwrap();
        assert!((gibbs_mass(&g, &TargetSet::Whole) - 1.0).abs() < 1e-12);
        let empty = TargetSet::superlevel(&p, 10.0, 257).unwrap();
        assert_eq!(gibbs_mass(&g, &empty), 0.0);

        let s = TargetSet::superlevel(&p, 0.05, 4097).unwrap();
        let mut prev = 1.0;
        for t in [0.4, 0.2, 0.1, 0.05] {
            let g = density_grid(&GibbsSpec::plain(p.clone(), t), 2048).unwrap();
            let m = gibbs_mass(&g, &s);
            // Oracle: direct midpoint sum of the unnormalized weights.
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..200_000 {
                let x = -1.0 + (i as f64 + 0.5) * 1e-5;
                let v = (x * x - 0.25f64).powi(2);
                let wgt = (-v / t).exp();
                den += wgt;
                if v >= 0.05 {
                    num += wgt;
                }
            }
            assert!((m - num / den).abs() < 2e-3, "T={t}: {m} vs {}", num / den);
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn tv_examples() {
        let p = catalog_make("constant", &json!({"value": 0.0})).unwrap();
        let g = density_grid(&GibbsSpec::plain(p, 1.0), 10).unwrap();
        let mut h = Histogram::new(1, 10);
        for i in 0..10 {
            h.add(&[-0.95 + 0.2 * i as f64]);
        }
        assert!(tv_distance(&h, &g).unwrap() <= 1e-12);
        assert_eq!(tv_between(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_between(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let h2 = Histogram::new(1, 11);
        assert!(tv_distance(&h2, &g).is_err());
    }

    #[test]
    fn coarsening_preserves_mass() {
        let p = catalog_make("multi_well_cos", &json!({"n": 2})).unwrap();
        let g = density_grid(&GibbsSpec::plain(p, 0.3), 64).unwrap();
        let c = g.coarsen(8).unwrap();
        assert_eq!(c.resolution, 8);
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        assert!(g.coarsen(7).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = density_grid(&GibbsSpec::plain(dw(), 0.4), 4).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x1,density");
        assert_eq!(lines.len(), 5);
    }
}
