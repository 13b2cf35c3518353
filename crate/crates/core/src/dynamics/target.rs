use serde::{Deserialize, Serialize};

use crate::error::{QdError, Result};
use crate::potentials::{potential_range_auto, Potential};

/// A measurable subset of the cube used for hit probabilities.
#[derive(Debug, Clone)]
pub enum TargetSet {
    Whole,
    /// `{x : V(x) >= θ + inf V}`
    Superlevel {
        theta: f64,
        inf_v: f64,
        potential: Potential,
    },
    /// Closed Euclidean ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Union(Vec<TargetSet>),
}

impl TargetSet {
    /// Resolves `inf V` from the declared minimizers when available, else
    /// from a range scan at `resolution` points per axis.
    pub fn superlevel(p: &Potential, theta: f64, resolution: usize) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(QdError::config(format!("superlevel threshold θ={theta} must be > 0")));
        }
        let inf_v = match p.minimizers().first() {
            Some(m) => p.value(m),
            None => potential_range_auto(p, resolution, 0)?.inf,
        };
        Ok(TargetSet::Superlevel {
            theta,
            inf_v,
            potential: p.clone(),
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(QdError::config(format!("ball radius {radius} must be >= 0")));
        }
        Ok(TargetSet::Ball { center, radius })
    }

    /// Union of balls around every declared minimizer of `p`.
    pub fn ground_states(p: &Potential, radius: f64) -> Result<Self> {
        if p.minimizers().is_empty() {
            return Err(QdError::config(format!("{} declares no ground states", p.name())));
        }
        let balls = p
            .minimizers()
            .iter()
            .map(|m| TargetSet::ball(m.clone(), radius))
            .collect::<Result<Vec<_>>>()?;
        Ok(TargetSet::Union(balls))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            TargetSet::Whole => true,
            TargetSet::Superlevel {
                theta,
                inf_v,
                potential,
            } => potential.value(x) >= theta + inf_v,
            TargetSet::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, xi)| (c - xi) * (c - xi)).sum();
                d2 <= radius * radius
            }
            TargetSet::Union(parts) => parts.iter().any(|s| s.contains(x)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TargetSet::Whole => "whole".into(),
            TargetSet::Superlevel { theta, .. } => format!("superlevel(theta={theta})"),
            TargetSet::Ball { center, radius } => format!("ball(center={center:?}, r={radius})"),
            TargetSet::Union(parts) => {
                let inner: Vec<String> = parts.iter().map(TargetSet::label).collect();
                format!("union[{}]", inner.join(", "))
            }
        }
    }
}

/// Serializable target description, resolved against a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Whole,
    Superlevel {
        theta: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// Balls of the given radius around every declared global minimizer.
    GroundState {
        radius: f64,
    },
    Union {
        sets: Vec<TargetConfig>,
    },
}

/// Points per axis used to find `inf V` when no minimizer is declared.
const INF_SCAN_RESOLUTION: usize = 1025;

impl TargetConfig {
    pub fn resolve(&self, p: &Potential) -> Result<TargetSet> {
        match self {
            TargetConfig::Whole => Ok(TargetSet::Whole),
            TargetConfig::Superlevel { theta } => {
                let res = match p.dim() {
                    1 => INF_SCAN_RESOLUTION * 4,
                    2 => INF_SCAN_RESOLUTION / 4,
                    _ => 65,
                };
                TargetSet::superlevel(p, *theta, res)
            }
            TargetConfig::Ball { center, radius } => {
                if center.len() != p.dim() {
                    return Err(QdError::config("ball center dimension mismatch"));
                }
                TargetSet::ball(center.clone(), *radius)
            }
            TargetConfig::GroundState { radius } => TargetSet::ground_states(p, *radius),
            TargetConfig::Union { sets } => Ok(TargetSet::Union(
                sets.iter().map(|s| s.resolve(p)).collect::<Result<_>>()?,
            )),
        }
    }
}
