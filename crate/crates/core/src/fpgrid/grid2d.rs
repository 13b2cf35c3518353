//! Two-dimensional evolution by Lie splitting: each step applies the 1-D
//! implicit solve along every row of axis 0, then along axis 1.

use super::evolve::check_initial;
use super::{bernoulli, DensityPath, EvolveConfig, GeneratorMatrix, MIN_CELLS};
use crate::auxiliary::{effective_gradient_raw, AuxWorkspace, AuxiliarySpec};
use crate::error::{QdError, Result};
use crate::potentials::Potential;
use crate::schedules::{QuantumSchedule, ThermalSchedule};

#[derive(Debug, Clone)]
pub struct Grid2DProblem {
    pub potential: Potential,
    pub aux: AuxiliarySpec,
    /// Cells per axis.
    pub cells: usize,
    pub gain: f64,
}

impl Grid2DProblem {
    pub fn new(potential: Potential, aux: AuxiliarySpec, cells: usize, gain: f64) -> Result<Self> {
        if potential.dim() != 2 {
            return Err(QdError::UnsupportedDimension {
                n: potential.dim(),
                what: "2-D Fokker–Planck",
            });
        }
        if cells < MIN_CELLS {
            return Err(QdError::config(format!(
                "grid needs at least {MIN_CELLS} cells per axis, got {cells}"
            )));
        }
        if !(gain > 0.0) {
            return Err(QdError::config(format!("gain w={gain} must be > 0")));
        }
        aux.validate(&potential)?;
        Ok(Self {
            potential,
            aux,
            cells,
            gain,
        })
    }

    pub fn h(&self) -> f64 {
        2.0 / self.cells as f64
    }

    /// Line generators along `axis`, one per index of the other axis.
    fn line_generators(&self, axis: usize, gamma: f64, temperature: f64) -> Result<Vec<GeneratorMatrix>> {
        if !(temperature > 0.0) {
            return Err(QdError::config(format!("generator needs T > 0, got {temperature}")));
        }
        let n = self.cells;
        let h = self.h();
        let mut ws = AuxWorkspace::new(2);
        let mut ag = [0.0; 2];
        let mut grad = [0.0; 2];
        let mut out = Vec::with_capacity(n);
        for other in 0..n {
            let y = -1.0 + (other as f64 + 0.5) * h;
            let mut lower = vec![0.0; n - 1];
            let mut upper = vec![0.0; n - 1];
            let mut diag = vec![0.0; n];
            for j in 1..n {
                let xf = -1.0 + j as f64 * h;
                let pt = if axis == 0 { [xf, y] } else { [y, xf] };
                effective_gradient_raw(&self.potential, &self.aux, gamma, &pt, &mut ws, &mut ag, &mut grad);
                let g = grad[axis];
                if !g.is_finite() {
                    return Err(QdError::Evaluation {
                        what: "∇W",
                        point: pt.to_vec(),
                    });
                }
                let scale = (1.0 - xf * xf) / self.gain * temperature / (h * h);
                let z = h * g / temperature;
                let fwd = scale * bernoulli(z);
                let bwd = scale * bernoulli(-z);
                lower[j - 1] = fwd;
                upper[j - 1] = bwd;
                diag[j - 1] -= fwd;
                diag[j] -= bwd;
            }
            out.push(GeneratorMatrix {
                lower,
                diag,
                upper,
                h,
                temperature,
                gamma,
                gain: self.gain,
                label: format!("{} axis {axis} line {other}", self.potential.name()),
            });
        }
        Ok(out)
    }
}

fn sweep(m: &mut [f64], n: usize, axis: usize, lines: &[GeneratorMatrix], dt: f64) -> Result<()> {
    let mut buf = vec![0.0; n];
    for (other, l) in lines.iter().enumerate() {
        let index = |k: usize| if axis == 0 { k * n + other } else { other * n + k };
        for (k, b) in buf.iter_mut().enumerate() {
            *b = m[index(k)];
        }
        let y = l.solve_implicit(dt, &buf)?;
        for (k, v) in y.into_iter().enumerate() {
            m[index(k)] = v;
        }
    }
    Ok(())
}

/// Integrates the 2-D Fokker–Planck equation on a row-major cell grid.
pub fn evolve_density_2d(
    prob: &Grid2DProblem,
    thermal: &ThermalSchedule,
    quantum: &QuantumSchedule,
    m0: &[f64],
    cfg: &EvolveConfig,
) -> Result<DensityPath> {
    cfg.validate()?;
    thermal.validate()?;
    quantum.validate()?;
    let n = prob.cells;
    let h = prob.h();
    let vol = h * h;
    check_initial(m0, n * n, vol)?;
    let steps = (cfg.t_end / cfg.dt).ceil() as usize;
    let dt = if steps == 0 { 0.0 } else { cfg.t_end / steps as f64 };
    let frozen = thermal.is_constant() && quantum.is_constant();

    let mut path = DensityPath {
        dim: 2,
        h,
        times: vec![0.0],
        temperatures: vec![thermal.at(0.0)],
        gammas: vec![quantum.value(0.0)],
        densities: vec![m0.to_vec()],
        max_mass_drift: 0.0,
        steps,
    };
    let mut m = m0.to_vec();
    let mut lines: Option<(Vec<GeneratorMatrix>, Vec<GeneratorMatrix>)> = None;
    for k in 0..steps {
        let t_next = (k + 1) as f64 * dt;
        if lines.is_none() || (!frozen && k % cfg.refresh_every == 0) {
            let (g, t) = (quantum.value(t_next), thermal.at(t_next));
            lines = Some((prob.line_generators(0, g, t)?, prob.line_generators(1, g, t)?));
        }
        let (ax0, ax1) = lines.as_ref().expect("generators built");
        sweep(&mut m, n, 0, ax0, dt)?;
        sweep(&mut m, n, 1, ax1, dt)?;
        let mass = m.iter().sum::<f64>() * vol;
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
