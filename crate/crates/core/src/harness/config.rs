use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::auxiliary::{default_eps, AuxiliarySpec};
use crate::dynamics::{SimConfig, TargetConfig};
use crate::error::{QdError, Result};
use crate::potentials::{Potential, PotentialSpec};
use crate::schedules::{QuantumSchedule, ThermalSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    StationaryCheck,
    AnnealQuantum,
    AnnealJoint,
    GapSweep,
    ZtTrack,
    AuxBenchmark,
    HopfieldDescent,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::StationaryCheck => "stationary-check",
            ExperimentKind::AnnealQuantum => "anneal-quantum",
            ExperimentKind::AnnealJoint => "anneal-joint",
            ExperimentKind::GapSweep => "gap-sweep",
            ExperimentKind::ZtTrack => "zt-track",
            ExperimentKind::AuxBenchmark => "aux-benchmark",
            ExperimentKind::HopfieldDescent => "hopfield-descent",
        }
    }

    /// Tolerances used by the kind, with their default values.
    pub fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            ExperimentKind::StationaryCheck => &[("tv", 0.05)],
            ExperimentKind::AnnealQuantum => &[("gibbs_gap", 0.1), ("max_failure_fraction", 0.0)],
            ExperimentKind::AnnealJoint => &[
                ("ground_fraction", 0.9),
                ("monotone_slack", 0.0),
                ("max_failure_fraction", 0.0),
            ],
            ExperimentKind::GapSweep => &[
                ("gap_bound_factor", 0.9),
                ("slope_margin", 0.1),
                ("column_sum", 1e-10),
                ("stationary_tv", 0.01),
                ("refinement_ratio", 3.0),
                ("oracle_rel", 0.02),
            ],
            ExperimentKind::ZtTrack => &[
                ("z_floor", 1e-8),
                ("z_final", 1e-3),
                ("z_sup_cap", 1e6),
                ("mass_drift", 1e-9),
                ("hit_bound_slack", 1e-8),
            ],
            ExperimentKind::AuxBenchmark => &[
                ("sign_violations", 0.0),
                ("contact_violations", 0.0),
                ("max_failure_fraction", 0.0),
            ],
            ExperimentKind::HopfieldDescent => &[("slack_factor", 10.0), ("grad_tol", 1e-3)],
        }
    }
}

/// Serializable auxiliary choice; parameters left out take their defaults
/// for the potential's dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AuxConfig {
    #[default]
    None,
    Homotopy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<PotentialSpec>,
    },
    Contraction,
    HessianQuadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<Vec<f64>>,
    },
    #[serde(rename = "kinetic1d")]
    Kinetic1D {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    KineticNd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<Vec<f64>>,
    },
}

impl AuxConfig {
    pub fn resolve(&self, p: &Potential) -> Result<AuxiliarySpec> {
        let n = p.dim();
        let spec = match self {
            AuxConfig::None => AuxiliarySpec::None,
            AuxConfig::Contraction => AuxiliarySpec::Contraction,
            AuxConfig::Homotopy { v0 } => {
                let v0 = match v0 {
                    Some(s) => s.build()?,
                    None => PotentialSpec::QuadraticBowl { center: None, n }.build()?,
                };
                AuxiliarySpec::Homotopy { v0 }
            }
            AuxConfig::HessianQuadratic { eps } => AuxiliarySpec::HessianQuadratic {
                eps: eps.clone().unwrap_or_else(|| default_eps(n)),
            },
            AuxConfig::Kinetic1D { eps } => AuxiliarySpec::Kinetic1D {
                eps: eps.unwrap_or(0.1),
            },
            AuxConfig::KineticNd { eps } => AuxiliarySpec::KineticNd {
                eps: eps.clone().unwrap_or_else(|| default_eps(n)),
            },
        };
        spec.validate(p)?;
        Ok(spec)
    }

    pub fn label(&self) -> &'static str {
        match self {
            AuxConfig::None => "none",
            AuxConfig::Homotopy { .. } => "homotopy",
            AuxConfig::Contraction => "contraction",
            AuxConfig::HessianQuadratic { .. } => "hessian_quadratic",
            AuxConfig::Kinetic1D { .. } => "kinetic1d",
            AuxConfig::KineticNd { .. } => "kinetic_nd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub eval_times: Vec<f64>,
    #[serde(default = "default_hist_bins")]
    pub hist_bins: usize,
}

fn default_hist_bins() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub burn_in: u64,
    #[serde(default = "default_hist_bins")]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDensity {
    /// Quadrature Gibbs density at `(T(0), Γ(0))`.
    #[default]
    Gibbs,
    /// Null vector of the generator at `(T(0), Γ(0))`.
    Stationary,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_dt_ode")]
    pub dt_ode: f64,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_range_resolution")]
    pub range_resolution: usize,
    #[serde(default)]
    pub m0: InitialDensity,
}

fn default_cells() -> usize {
    400
}
fn default_dt_ode() -> f64 {
    0.01
}
fn default_record_every() -> usize {
    500
}
fn default_range_resolution() -> usize {
    4097
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cells: default_cells(),
            dt_ode: default_dt_ode(),
            t_end: 0.0,
            record_every: default_record_every(),
            range_resolution: default_range_resolution(),
            m0: InitialDensity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub temperatures: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Adds the stationary-vector and grid-refinement checks.
    #[serde(default)]
    pub generator_checks: bool,
    /// Compares against the flat-potential spectrum: `γ = 2T/w`, `c = 1/w`.
    #[serde(default)]
    pub flat_oracle: bool,
    /// Checks `γ >= factor · c T exp(-2M*/T)` and the Arrhenius slope.
    #[serde(default = "yes")]
    pub bound_checks: bool,
}

fn default_gammas() -> Vec<f64> {
    vec![0.0]
}

/// Target sets of the annealing experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealConfig {
    #[serde(default = "default_ground_radius")]
    pub ground_radius: f64,
    #[serde(default = "default_theta")]
    pub superlevel_theta: f64,
}

fn default_ground_radius() -> f64 {
    0.1
}
fn default_theta() -> f64 {
    0.2
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            ground_radius: default_ground_radius(),
            superlevel_theta: default_theta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfieldConfig {
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Initial points are uniform on `(-h, h)^n`.
    #[serde(default = "default_start_half_width")]
    pub half_width: f64,
    #[serde(default = "default_lipschitz_samples")]
    pub lipschitz_samples: usize,
}

fn default_starts() -> usize {
    8
}
fn default_start_half_width() -> f64 {
    0.9
}
fn default_lipschitz_samples() -> usize {
    4096
}

impl Default for HopfieldConfig {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            half_width: default_start_half_width(),
            lipschitz_samples: default_lipschitz_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxCheckConfig {
    #[serde(default = "default_range_resolution")]
    pub resolution: usize,
    #[serde(default = "default_contact_gamma")]
    pub gamma: f64,
    #[serde(default = "default_check_eps")]
    pub eps: f64,
}

fn default_contact_gamma() -> f64 {
    0.5
}
fn default_check_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    CsvSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
    /// Also write per-experiment data files (trajectories, densities, traces).
    #[serde(default = "yes")]
    pub artifacts: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("qdiff-out")
}
fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::CsvSummary]
}
fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
            artifacts: true,
        }
    }
}

fn default_seed() -> u64 {
    42
}

/// One experiment, as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Master seed; overrides `sim.seed`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Potentials to run the experiment on, in order.
    pub potentials: Vec<PotentialSpec>,
    #[serde(default)]
    pub aux: AuxConfig,
    /// Auxiliaries compared by `aux-benchmark`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub auxes: Vec<AuxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalSchedule>,
    #[serde(default = "zero_schedule")]
    pub quantum: QuantumSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hopfield: Option<HopfieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_checks: Option<AuxCheckConfig>,
    /// Extra target sets reported by the ensemble and density experiments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn zero_schedule() -> QuantumSchedule {
    QuantumSchedule::Zero
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QdError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fills in every tolerance of the kind that the config leaves out.
    pub fn with_default_tolerances(mut self) -> Self {
        for (k, v) in self.kind.default_tolerances() {
            self.tolerances.entry((*k).to_string()).or_insert(*v);
        }
        self
    }

    pub fn tolerance(&self, key: &str) -> Result<f64> {
        self.tolerances
            .get(key)
            .copied()
            .ok_or_else(|| QdError::config(format!("tolerances.{key} is not set")))
    }

    pub fn build_potentials(&self) -> Result<Vec<Potential>> {
        self.potentials.iter().map(PotentialSpec::build).collect()
    }

    /// Collects every problem with the config, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            errs.push(format!(
                "name: {:?} must be non-empty and contain no path separators",
                self.name
            ));
        }
        if self.potentials.is_empty() {
            errs.push("potentials: at least one potential is required".into());
        }
        let mut built = Vec::new();
        for (i, spec) in self.potentials.iter().enumerate() {
            match spec.build() {
                Ok(p) => built.push(p),
                Err(e) => errs.push(format!("potentials[{i}]: {e}")),
            }
        }
        for p in &built {
            if let Err(e) = self.aux.resolve(p) {
                errs.push(format!("aux: {e} (potential {})", p.name()));
            }
            for (i, a) in self.auxes.iter().enumerate() {
                if let Err(e) = a.resolve(p) {
                    errs.push(format!("auxes[{i}]: {e} (potential {})", p.name()));
                }
            }
            for (i, t) in self.targets.iter().enumerate() {
                if let Err(e) = t.resolve(p) {
                    errs.push(format!("targets[{i}]: {e} (potential {})", p.name()));
                }
            }
        }
        if let Some(th) = &self.thermal {
            if let Err(e) = th.validate() {
                errs.push(format!("thermal: {e}"));
            }
        }
        if let Err(e) = self.quantum.validate() {
            errs.push(format!("quantum: {e}"));
        }
        for (k, v) in &self.tolerances {
            if !v.is_finite() {
                errs.push(format!("tolerances.{k}: {v} is not finite"));
            }
        }
        if self.output.formats.is_empty() {
            errs.push("output.formats: at least one format is required".into());
        }

        let need = |errs: &mut Vec<String>, present: bool, key: &str| {
            if !present {
                errs.push(format!("{key}: required for {}", self.kind.as_str()));
            }
        };
        let one_d = |errs: &mut Vec<String>| {
            for p in &built {
                if p.dim() != 1 {
                    errs.push(format!(
                        "potentials: {} is not 1-D, which {} requires",
                        p.name(),
                        self.kind.as_str()
                    ));
                }
            }
        };
        let constant_thermal = |errs: &mut Vec<String>| match &self.thermal {
            Some(ThermalSchedule::Constant { t }) if *t > 0.0 => {}
            _ => errs.push(format!("thermal: {} needs a constant T > 0", self.kind.as_str())),
        };
        let sim_ok = |errs: &mut Vec<String>| {
            if let Some(sim) = &self.sim {
                for p in &built {
                    if let Err(e) = sim.validate(p.dim()) {
                        errs.push(format!("sim: {e}"));
                        break;
                    }
                }
            }
        };
        match self.kind {
            ExperimentKind::StationaryCheck => {
                constant_thermal(&mut errs);
                need(&mut errs, self.sim.is_some(), "sim");
                need(&mut errs, self.stationary.is_some(), "stationary");
                if !self.quantum.is_constant() {
                    errs.push("quantum: stationary-check needs a constant Γ".into());
                }
                for p in &built {
                    if p.dim() > crate::potentials::MAX_GRID_DIM {
                        errs.push(format!(
                            "potentials: {} exceeds the density-grid dimension limit",
                            p.name()
                        ));
                    }
                }
                sim_ok(&mut errs);
            }
            ExperimentKind::AnnealQuantum | ExperimentKind::AnnealJoint => {
                need(&mut errs, self.thermal.is_some(), "thermal");
                need(&mut errs, self.sim.is_some(), "sim");
                need(&mut errs, self.ensemble.is_some(), "ensemble");
                if self.kind == ExperimentKind::AnnealQuantum {
                    constant_thermal(&mut errs);
                }
                sim_ok(&mut errs);
                self.check_ensemble(&mut errs);
            }
            ExperimentKind::GapSweep => {
                one_d(&mut errs);
                need(&mut errs, self.sweep.is_some(), "sweep");
                if let Some(s) = &self.sweep {
                    if s.temperatures.is_empty() || s.temperatures.iter().any(|t| !(*t > 0.0)) {
                        errs.push("sweep.temperatures: must be a non-empty list of positive values".into());
                    }
                    if s.gammas.is_empty() || s.gammas.iter().any(|g| !(*g >= 0.0)) {
                        errs.push("sweep.gammas: must be a non-empty list of values >= 0".into());
                    }
                }
            }
            ExperimentKind::ZtTrack => {
                one_d(&mut errs);
                constant_thermal(&mut errs);
                need(&mut errs, self.grid.is_some(), "grid");
                if let Some(g) = &self.grid {
                    if !(g.t_end > 0.0) {
                        errs.push("grid.t_end: must be > 0".into());
                    }
                }
            }
            ExperimentKind::AuxBenchmark => {
                if self.aux_checks.is_none() && self.ensemble.is_none() {
                    errs.push("aux_checks or ensemble: aux-benchmark needs at least one".into());
                }
                if self.aux_checks.is_some() {
                    one_d(&mut errs);
                }
                if self.ensemble.is_some() {
                    need(&mut errs, self.thermal.is_some(), "thermal");
                    need(&mut errs, self.sim.is_some(), "sim");
                    need(&mut errs, !self.auxes.is_empty(), "auxes");
                    sim_ok(&mut errs);
                    self.check_ensemble(&mut errs);
                }
            }
            ExperimentKind::HopfieldDescent => {
                need(&mut errs, self.sim.is_some(), "sim");
                sim_ok(&mut errs);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(QdError::Config(errs.join("; ")))
        }
    }

    fn check_ensemble(&self, errs: &mut Vec<String>) {
        if let (Some(e), Some(sim)) = (&self.ensemble, &self.sim) {
            if e.trajectories == 0 {
                errs.push("ensemble.trajectories: must be >= 1".into());
            }
            if e.eval_times.is_empty() {
                errs.push("ensemble.eval_times: must not be empty".into());
            }
            if let Some(&last) = e.eval_times.last() {
                if (last / sim.dt).round() as u64 > sim.steps {
                    errs.push(format!("ensemble.eval_times: {last} lies beyond sim.steps * sim.dt"));
                }
            }
        }
    }
}

/// Sets `path` (dot-separated keys) in a JSON document. The value text is
/// parsed as JSON when possible and taken as a string otherwise. Missing
/// intermediate objects are created.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    if path.is_empty() {
        return Err(QdError::config("override path is empty"));
    }
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                let slot = map
                    .entry((*key).to_string())
                    .or_insert_with(|| Value::Object(Default::default()));
                if slot.is_null() {
                    *slot = Value::Object(Default::default());
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| QdError::config(format!("override {path}: {key:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| QdError::config(format!("override {path}: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(QdError::config(format!(
                    "override {path}: {} is not an object",
                    keys[..i].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last key")
}

/// Applies `key=value` overrides to a config and re-parses it.
pub fn with_overrides(cfg: &ExperimentConfig, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut doc = serde_json::to_value(cfg)?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    Ok(serde_json::from_value(doc)?)
}
