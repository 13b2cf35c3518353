use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{build_generator, GeneratorMatrix, Grid1D};
use crate::auxiliary::{aux_range, AuxiliarySpec};
use crate::dynamics::TargetSet;
use crate::error::{QdError, Result};
use crate::gibbs::{density_grid, m_star, DensityGrid, GibbsSpec};
use crate::potentials::Potential;
use crate::schedules::{QuantumSchedule, ThermalSchedule};

/// A 1-D Fokker–Planck problem: potential, auxiliary term, grid and gain.
#[derive(Debug, Clone)]
pub struct FokkerPlanck {
    pub potential: Potential,
    pub aux: AuxiliarySpec,
    pub grid: Grid1D,
    pub gain: f64,
}

impl FokkerPlanck {
    pub fn new(potential: Potential, aux: AuxiliarySpec, grid: Grid1D, gain: f64) -> Result<Self> {
        if potential.dim() != 1 {
            return Err(QdError::UnsupportedDimension {
                n: potential.dim(),
                what: "1-D Fokker–Planck",
            });
        }
        aux.validate(&potential)?;
        Ok(Self {
            potential,
            aux,
            grid,
            gain,
        })
    }

    pub fn generator(&self, gamma: f64, temperature: f64) -> Result<GeneratorMatrix> {
        build_generator(&self.potential, &self.aux, gamma, temperature, &self.grid, self.gain)
    }

    pub fn gibbs(&self, gamma: f64, temperature: f64) -> Result<DensityGrid> {
        density_grid(
            &GibbsSpec {
                potential: self.potential.clone(),
                aux: self.aux.clone(),
                gamma,
                temperature,
            },
            self.grid.cells(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub t_end: f64,
    /// Implicit-Euler step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Steps between stored snapshots.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Steps between generator rebuilds when the schedules vary.
    #[serde(default = "default_refresh_every")]
    pub refresh_every: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_record_every() -> usize {
    100
}

fn default_refresh_every() -> usize {
    1
}

impl EvolveConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt: default_dt(),
            record_every: default_record_every(),
            refresh_every: default_refresh_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(QdError::config(format!("t_end={} must be finite and >= 0", self.t_end)));
        }
        if !(self.dt > 0.0) {
            return Err(QdError::config(format!("dt={} must be > 0", self.dt)));
        }
        if self.record_every == 0 || self.refresh_every == 0 {
            return Err(QdError::config("record_every and refresh_every must be positive"));
        }
        Ok(())
    }
}

/// Snapshots of the cell density `m_t` (normalized so `Σ m_i h = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPath {
    pub dim: usize,
    /// Cell side.
    pub h: f64,
    pub times: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub gammas: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    /// Largest `|Σ m h - 1|` seen before renormalization.
    pub max_mass_drift: f64,
    pub steps: usize,
}

impl DensityPath {
    pub fn last(&self) -> &[f64] {
        self.densities.last().expect("path holds the initial density")
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn masses(&self, k: usize) -> Vec<f64> {
        let vol = self.cell_volume();
        self.densities[k].iter().map(|m| m * vol).collect()
    }

    /// One row per snapshot: `t` followed by the cell densities, header
    /// `t,m1..mN` (row-major for 2-D grids).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let cells = self.densities.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=cells).map(|k| format!("m{k}")));
        w.write_record(&header)?;
        for (t, d) in self.times.iter().zip(&self.densities) {
            let mut row = Vec::with_capacity(cells + 1);
            row.push(t.to_string());
            row.extend(d.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| QdError::io("<csv>", e))?;
        Ok(())
    }
}

pub(crate) fn check_initial(m0: &[f64], n: usize, h: f64) -> Result<()> {
    if m0.len() != n {
        return Err(QdError::config(format!(
            "initial density has {} cells, grid has {n}",
            m0.len()
        )));
    }
    if m0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(QdError::config("initial density must be finite and nonnegative"));
    }
    let mass = m0.iter().sum::<f64>() * h;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(QdError::config(format!("initial density has mass {mass}, expected 1")));
    }
    Ok(())
}

/// Integrates `∂m/∂t = L(Γ(t), T(t)) m` by implicit Euler.
///
/// The generator is rebuilt at the end of the step every `refresh_every`
/// steps (only once when both schedules are constant). Mass drift is
/// recorded, then the density is renormalized.
pub fn evolve_density(
    fp: &FokkerPlanck,
    thermal: &ThermalSchedule,
    quantum: &QuantumSchedule,
    m0: &[f64],
    cfg: &EvolveConfig,
) -> Result<DensityPath> {
    cfg.validate()?;
    thermal.validate()?;
    quantum.validate()?;
    let h = fp.grid.h();
    check_initial(m0, fp.grid.cells(), h)?;
    let steps = (cfg.t_end / cfg.dt).ceil() as usize;
    let dt = if steps == 0 { 0.0 } else { cfg.t_end / steps as f64 };
    let frozen = thermal.is_constant() && quantum.is_constant();

    let mut path = DensityPath {
        dim: 1,
        h,
        times: vec![0.0],
        temperatures: vec![thermal.at(0.0)],
        gammas: vec![quantum.value(0.0)],
        densities: vec![m0.to_vec()],
        max_mass_drift: 0.0,
        steps,
    };
    let mut m = m0.to_vec();
    let mut gen: Option<GeneratorMatrix> = None;
    for k in 0..steps {
        let t_next = (k + 1) as f64 * dt;
        let rebuild = gen.is_none() || (!frozen && k % cfg.refresh_every == 0);
        if rebuild {
            gen = Some(fp.generator(quantum.value(t_next), thermal.at(t_next))?);
        }
        let l = gen.as_ref().expect("generator built");
        m = l.solve_implicit(dt, &m)?;
        let mass = m.iter().sum::<f64>() * h;
        path.max_mass_drift = path.max_mass_drift.max((mass - 1.0).abs());
        for v in m.iter_mut() {
            *v /= mass;
        }
        if (k + 1) % cfg.record_every == 0 || k + 1 == steps {
            path.times.push(t_next);
            path.temperatures.push(thermal.at(t_next));
            path.gammas.push(quantum.value(t_next));
            path.densities.push(m.clone());
        }
    }
    Ok(path)
}

/// `B = (1 + M̃ Γ'(t) exp(2M*/T) / (2 c T^2))^{-1}`, or `None` when the
/// denominator is not positive.
pub fn b_function(m_tilde: f64, c: f64, temperature: f64, gamma_dot: f64, m_star: f64) -> Option<f64> {
    let denom = 1.0 + m_tilde / (2.0 * c * temperature * temperature) * gamma_dot * (2.0 * m_star / temperature).exp();
    (denom > 0.0 && denom.is_finite()).then(|| 1.0 / denom)
}

/// `z_t = ∫ m_t^2 / μ_{Γ(t)}` along a density path, with the `B(t)`
/// diagnostic and `K = max_t sqrt(z_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZtTrace {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub b_values: Vec<Option<f64>>,
    pub b_nonpositive: Vec<bool>,
    pub m_star: Vec<f64>,
    pub max_z: f64,
    /// `K = max_t sqrt(z_t)`
    pub k: f64,
    pub min_z: f64,
    /// Cells skipped because `μ` underflowed to zero while `m` did not.
    pub underflow_cells: usize,
    pub c: f64,
    pub m_tilde: f64,
}

/// Points used to evaluate `M*(Γ(t))` and `M̃`.
pub const ZT_RANGE_RESOLUTION: usize = 4097;

pub fn z_trace(
    fp: &FokkerPlanck,
    path: &DensityPath,
    thermal: &ThermalSchedule,
    quantum: &QuantumSchedule,
    c: f64,
) -> Result<ZtTrace> {
    let m_tilde = if fp.aux.is_none() {
        0.0
    } else {
        aux_range(&fp.aux, &fp.potential, ZT_RANGE_RESOLUTION)?.range
    };
    let mut trace = ZtTrace {
        times: Vec::with_capacity(path.times.len()),
        z: Vec::new(),
        b_values: Vec::new(),
        b_nonpositive: Vec::new(),
        m_star: Vec::new(),
        max_z: 0.0,
        k: 0.0,
        min_z: f64::INFINITY,
        underflow_cells: 0,
        c,
        m_tilde,
    };
    for (k, &t) in path.times.iter().enumerate() {
        let temp = thermal.at(t);
        let (gamma, gamma_dot) = quantum.at(t);
        let mu = fp.gibbs(gamma, temp)?;
        let mut z = 0.0;
        for (m, u) in path.densities[k].iter().zip(&mu.density) {
            if *u > 0.0 {
                z += m * m / u * path.h;
            } else if *m > 0.0 {
                trace.underflow_cells += 1;
            }
        }
        let ms = m_star(&fp.potential, &fp.aux, gamma, ZT_RANGE_RESOLUTION)?;
        let b = b_function(m_tilde, c, temp, gamma_dot, ms);
        trace.times.push(t);
        trace.z.push(z);
        trace.b_nonpositive.push(b.is_none());
        trace.b_values.push(b);
        trace.m_star.push(ms);
        trace.max_z = trace.max_z.max(z);
        trace.k = trace.max_z.sqrt();
        trace.min_z = trace.min_z.min(z);
    }
    Ok(trace)
}

/// Additive slack of the hit-probability bound.
pub const HIT_BOUND_SLACK: f64 = 1e-8;

/// One checkpoint of `m_t(S) <= (max_{s<=t} sqrt z_s) sqrt(μ_{Γ(t)}(S))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitBoundRow {
    pub t: f64,
    pub target: String,
    pub mass: f64,
    pub gibbs_mass: f64,
    /// `sqrt(z_t μ(S))`
    pub bound_instant: f64,
    /// `sqrt(max_{s<=t} z_s μ(S))`
    pub bound: f64,
    pub pass: bool,
}

pub fn hit_bound(
    fp: &FokkerPlanck,
    path: &DensityPath,
    trace: &ZtTrace,
    thermal: &ThermalSchedule,
    quantum: &QuantumSchedule,
    targets: &[TargetSet],
) -> Result<Vec<HitBoundRow>> {
    if trace.z.len() != path.times.len() {
        return Err(QdError::config("z trace and density path have different lengths"));
    }
    let centers = fp.grid.centers();
    let inside: Vec<Vec<bool>> = targets
        .iter()
        .map(|s| centers.iter().map(|&x| s.contains(&[x])).collect())
        .collect();
    let mut rows = Vec::new();
    let mut running = 0.0_f64;
    for (k, &t) in path.times.iter().enumerate() {
        running = running.max(trace.z[k]);
        let mu = fp.gibbs(quantum.value(t), thermal.at(t))?;
        for (s, cells) in targets.iter().zip(&inside) {
            let restrict =
                |d: &[f64]| -> f64 { d.iter().zip(cells).filter(|(_, &b)| b).map(|(m, _)| m * path.h).sum() };
            let mass = restrict(&path.densities[k]);
            let gm = restrict(&mu.density);
            let bound = (running * gm).sqrt();
            rows.push(HitBoundRow {
                t,
                target: s.label(),
                mass,
                gibbs_mass: gm,
                bound_instant: (trace.z[k] * gm).sqrt(),
                bound,
                pass: mass <= bound + HIT_BOUND_SLACK,
            });
        }
    }
    Ok(rows)
}
