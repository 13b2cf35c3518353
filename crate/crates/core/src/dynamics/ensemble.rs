use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiffusionNetwork, SimConfig, TargetSet};
use crate::error::{QdError, Result};
use crate::gibbs::Histogram;

/// Aggregate statistics of independent trajectories at fixed checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub times: Vec<f64>,
    pub targets: Vec<String>,
    /// `hit_fractions[target][time]`, over successful trajectories.
    pub hit_fractions: Vec<Vec<f64>>,
    #[serde(rename = "meanV")]
    pub mean_v: Vec<f64>,
    #[serde(rename = "minV")]
    pub min_v: Vec<f64>,
    pub trajectories: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    /// First coordinate at the last checkpoint, pooled over trajectories.
    pub histogram: Histogram,
    pub seed: u64,
}

/// Runs `count` trajectories on streams `0..count` of `cfg.seed` and
/// evaluates every target at each checkpoint in `eval_times`.
///
/// Checkpoints are rounded to the nearest step and must not exceed
/// `cfg.steps`. Failed trajectories are excluded and counted.
pub fn run_ensemble(
    net: &DiffusionNetwork,
    cfg: &SimConfig,
    count: usize,
    targets: &[TargetSet],
    eval_times: &[f64],
    hist_bins: usize,
) -> Result<EnsembleReport> {
    if count == 0 {
        return Err(QdError::config("ensemble needs at least one trajectory"));
    }
    if eval_times.is_empty() {
        return Err(QdError::config("ensemble needs at least one evaluation time"));
    }
    cfg.validate(net.dim())?;
    let eval_steps: Vec<u64> = eval_times.iter().map(|t| (t / cfg.dt).round() as u64).collect();
    if eval_steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QdError::config(
            "evaluation times must be strictly increasing after rounding to steps",
        ));
    }
    if let Some(&last) = eval_steps.last() {
        if last > cfg.steps {
            return Err(QdError::config(format!(
                "evaluation time {} lies beyond the horizon {}",
                eval_times[eval_times.len() - 1],
                cfg.time_of(cfg.steps)
            )));
        }
    }
    let horizon = cfg.with_steps(*eval_steps.last().expect("non-empty"));

    let outcomes: Vec<Result<Vec<Vec<f64>>>> = (0..count as u64)
        .into_par_iter()
        .map(|stream| {
            let mut snaps = Vec::with_capacity(eval_steps.len());
            let mut next = 0;
            net.simulate_with(&horizon, stream, |step, state| {
                if next < eval_steps.len() && step == eval_steps[next] {
                    snaps.push(state.x.clone());
                    next += 1;
                }
                Ok(())
            })?;
            Ok(snaps)
        })
        .collect();

    let mut failures = Vec::new();
    let mut good = Vec::with_capacity(count);
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => good.push(s),
            Err(e) => failures.push(format!("trajectory {i}: {e}")),
        }
    }
    let nt = eval_steps.len();
    let denom = good.len().max(1) as f64;
    let mut hits = vec![vec![0u64; nt]; targets.len()];
    let mut mean_v = vec![0.0; nt];
    let mut min_v = vec![f64::INFINITY; nt];
    let mut histogram = Histogram::new(1, hist_bins.max(1));
    for snaps in &good {
        for (ti, x) in snaps.iter().enumerate() {
            let v = net.potential.value(x);
            mean_v[ti] += v / denom;
            min_v[ti] = min_v[ti].min(v);
            for (si, s) in targets.iter().enumerate() {
                if s.contains(x) {
                    hits[si][ti] += 1;
                }
            }
        }
        histogram.add(&snaps[nt - 1][..1]);
    }
    let hit_fractions = hits
        .iter()
        .map(|row| row.iter().map(|&h| h as f64 / denom).collect())
        .collect();
    Ok(EnsembleReport {
        times: eval_steps.iter().map(|&s| cfg.time_of(s)).collect(),
        targets: targets.iter().map(TargetSet::label).collect(),
        hit_fractions,
        mean_v,
        min_v,
        trajectories: count,
        failures: failures.len(),
        failure_messages: failures,
        histogram,
        seed: cfg.seed,
    })
}

impl SimConfig {
    pub fn with_steps(&self, steps: u64) -> SimConfig {
        SimConfig { steps, ..self.clone() }
    }
}
