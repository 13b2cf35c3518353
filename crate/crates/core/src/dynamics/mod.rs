//! Euler–Maruyama simulation of the diffusion network
//!
//! ```text
//! du = -∇[V(x) - Γ(t) Ṽ(x)] dt + Σ(T(t), x) dW,    x = tanh(u / w)
//! ```
//!
//! with `Σ = diag(√(2T / f(x_k)))` and `f(y) = (1 - y²)/w`. Two integrators
//! are provided: the direct scheme in `u` and the equivalent Itô form in `x`,
//!
//! ```text
//! dx = (-f ∘ ∇W + T f') dt + √(2 T f) dW,
//! ```
//!
//! which avoids the `cosh(u/w)` growth of the noise near the faces.

mod ensemble;
mod target;

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::auxiliary::{effective_gradient_raw, effective_value_raw, AuxWorkspace, AuxiliarySpec};
use crate::error::{QdError, Result};
use crate::gibbs::Histogram;
use crate::potentials::Potential;
use crate::schedules::{QuantumSchedule, ThermalSchedule};

pub use ensemble::{run_ensemble, EnsembleReport};
pub use target::{TargetConfig, TargetSet};

/// Default clamp `|u| <= 15 w`.
pub const U_MAX_GAINS: f64 = 15.0;

/// Largest noise increment `σ √dt` allowed at the automatic clamp, in units of `w`.
pub const AUTO_CLAMP_KAPPA: f64 = 0.25;

/// Faces used by the reflecting `x`-space integrator.
pub const X_REFLECT: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFunctions {
    /// Gain `w > 0`.
    pub w: f64,
}

/// `(x, u, f(x))` for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTriple {
    pub x: f64,
    pub u: f64,
    pub f: f64,
}

impl Default for LinkFunctions {
    fn default() -> Self {
        Self { w: 1.0 }
    }
}

impl LinkFunctions {
    pub fn new(w: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(QdError::config(format!("link gain w={w} must be > 0")));
        }
        Ok(Self { w })
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        (u / self.w).tanh()
    }

    #[inline]
    pub fn g_inv(&self, x: f64) -> f64 {
        self.w * x.atanh()
    }

    /// `f(y) = g'(g⁻¹(y)) = (1 - y²)/w`
    #[inline]
    pub fn f(&self, y: f64) -> f64 {
        (1.0 - y * y) / self.w
    }

    #[inline]
    pub fn f_prime(&self, y: f64) -> f64 {
        -2.0 * y / self.w
    }

    pub fn from_u(&self, u: f64) -> LinkTriple {
        let x = self.g(u);
        LinkTriple { x, u, f: self.f(x) }
    }

    pub fn from_x(&self, x: f64) -> Result<LinkTriple> {
        if !(x.abs() < 1.0) {
            return Err(QdError::Domain { point: vec![x] });
        }
        Ok(LinkTriple {
            x,
            u: self.g_inv(x),
            f: self.f(x),
        })
    }
}

/// `σ_k = √(2T / f(x_k))`; all zeros when `T = 0`.
pub fn diffusion_coeffs(x: &[f64], temperature: f64, lf: &LinkFunctions) -> Result<Vec<f64>> {
    if !(temperature >= 0.0) {
        return Err(QdError::config(format!("temperature {temperature} must be >= 0")));
    }
    x.iter()
        .map(|&xk| {
            if !(xk.abs() < 1.0) {
                return Err(QdError::Domain { point: x.to_vec() });
            }
            Ok(if temperature == 0.0 {
                0.0
            } else {
                (2.0 * temperature / lf.f(xk)).sqrt()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
}

impl NetworkState {
    pub fn from_x(x: &[f64], lf: &LinkFunctions) -> Result<Self> {
        let u = x
            .iter()
            .map(|&xk| lf.from_x(xk).map(|l| l.u))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| QdError::config(format!("initial point {x:?} is not strictly interior")))?;
        Ok(Self {
            t: 0.0,
            x: u.iter().map(|&uk| lf.g(uk)).collect(),
            u,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    #[default]
    USpace,
    XSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Uniform on `(-half_width, half_width)^n`, drawn from the trajectory's stream.
    UniformInterior {
        half_width: f64,
    },
    Point {
        x: Vec<f64>,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::UniformInterior { half_width: 0.5 }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_stride() -> u64 {
    1
}
fn default_seed() -> u64 {
    42
}
fn default_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub x0: InitialCondition,
    #[serde(default)]
    pub mode: IntegratorMode,
    /// Fixed clamp on `|u|`. `None` selects the temperature-dependent clamp
    /// (see [`DiffusionNetwork::u_limit`]).
    #[serde(default)]
    pub u_max: Option<f64>,
    /// Link gain `w`.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

impl SimConfig {
    pub fn new(steps: u64) -> Self {
        Self {
            dt: default_dt(),
            steps,
            stride: 1,
            seed: default_seed(),
            x0: InitialCondition::default(),
            mode: IntegratorMode::USpace,
            u_max: None,
            gain: 1.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(QdError::config(format!("dt={} must be > 0", self.dt)));
        }
        if self.stride == 0 {
            return Err(QdError::config("record stride must be >= 1"));
        }
        if !(self.gain > 0.0) {
            return Err(QdError::config(format!("gain w={} must be > 0", self.gain)));
        }
        if let Some(u) = self.u_max {
            if !(u > 0.0) || !u.is_finite() {
                return Err(QdError::config(format!("u_max={u} must be positive and finite")));
            }
        }
        match &self.x0 {
            InitialCondition::UniformInterior { half_width } => {
                if !(*half_width > 0.0 && *half_width < 1.0) {
                    return Err(QdError::config(format!("half_width={half_width} must lie in (0,1)")));
                }
            }
            InitialCondition::Point { x } => {
                if x.len() != n {
                    return Err(QdError::config(format!("x0 has {} coordinates, expected {n}", x.len())));
                }
                if x.iter().any(|c| !(c.abs() < 1.0)) {
                    return Err(QdError::config(format!("x0={x:?} is not strictly interior")));
                }
            }
        }
        Ok(())
    }

    pub fn time_of(&self, step: u64) -> f64 {
        step as f64 * self.dt
    }
}

/// One recorded sample `(t, x, V(x), W(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Largest single-record increase of `V`; zero or negative for a descent.
    pub fn max_v_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].v - w[0].v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with header `t,x1..xn,V,W`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.records.first().map_or(0, |r| r.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.push("V".into());
        header.push("W".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![format!("{:.17e}", r.t)];
            row.extend(r.x.iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", r.v));
            row.push(format!("{:.17e}", r.w));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| QdError::io("<csv>", e))?;
        Ok(())
    }
}

/// A simulation that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct SimulationFailure {
    pub partial: Trajectory,
    pub error: QdError,
}

impl fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "simulation aborted after {} records: {}",
            self.partial.len(),
            self.error
        )
    }
}

impl std::error::Error for SimulationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SimulationFailure> for QdError {
    fn from(f: SimulationFailure) -> Self {
        f.error
    }
}

/// Potential, auxiliary, schedules and link gain: everything the SDE needs.
#[derive(Debug, Clone)]
pub struct DiffusionNetwork {
    pub potential: Potential,
    pub aux: AuxiliarySpec,
    pub thermal: ThermalSchedule,
    pub quantum: QuantumSchedule,
    pub link: LinkFunctions,
}

/// Per-trajectory scratch space.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    aux: AuxWorkspace,
    aux_grad: Vec<f64>,
    grad: Vec<f64>,
}

impl StepWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            aux: AuxWorkspace::new(n),
            aux_grad: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }
}

/// The seeded Gaussian stream for trajectory `stream` under `seed`.
pub fn noise_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl DiffusionNetwork {
    pub fn new(
        potential: Potential,
        aux: AuxiliarySpec,
        thermal: ThermalSchedule,
        quantum: QuantumSchedule,
        gain: f64,
    ) -> Result<Self> {
        thermal.validate()?;
        quantum.validate()?;
        aux.validate(&potential)?;
        Ok(Self {
            potential,
            aux,
            thermal,
            quantum,
            link: LinkFunctions::new(gain)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// `-∇W(x)` with `W = V - Γ Ṽ`.
    pub fn drift(&self, state: &NetworkState, gamma: f64) -> Result<Vec<f64>> {
        crate::potentials::check_point(self.dim(), &state.x)?;
        let mut ws = StepWorkspace::new(self.dim());
        let mut out = vec![0.0; self.dim()];
        effective_gradient_raw(
            &self.potential,
            &self.aux,
            gamma,
            &state.x,
            &mut ws.aux,
            &mut ws.aux_grad,
            &mut out,
        );
        if out.iter().any(|g| !g.is_finite()) {
            return Err(QdError::Evaluation {
                what: "drift",
                point: state.x.clone(),
            });
        }
        for g in out.iter_mut() {
            *g = -*g;
        }
        Ok(out)
    }

    /// Clamp on `|u|` at temperature `T`.
    ///
    /// A fixed `cfg.u_max` is used verbatim. Otherwise the clamp is the
    /// smaller of `15 w` and the `|u|` at which one noise increment
    /// `√(2Tw) cosh(u/w) √dt` reaches `AUTO_CLAMP_KAPPA · w`; beyond that
    /// point the explicit scheme can throw `u` arbitrarily far in one step.
    pub fn u_limit(&self, cfg: &SimConfig, temperature: f64) -> f64 {
        if let Some(u) = cfg.u_max {
            return u;
        }
        let w = self.link.w;
        let cap = U_MAX_GAINS * w;
        if temperature <= 0.0 {
            return cap;
        }
        let ratio = AUTO_CLAMP_KAPPA * w / (2.0 * temperature * w * cfg.dt).sqrt();
        (w * ratio.max(1.0).acosh()).min(cap)
    }

    /// One Euler–Maruyama step at the current `(T, Γ)`, in place.
    #[allow(clippy::too_many_arguments)]
    pub fn em_step(
        &self,
        cfg: &SimConfig,
        state: &mut NetworkState,
        step: u64,
        temperature: f64,
        gamma: f64,
        rng: &mut ChaCha8Rng,
        ws: &mut StepWorkspace,
    ) -> Result<()> {
        let dt = cfg.dt;
        let sqrt_dt = dt.sqrt();
        let w = self.link.w;
        effective_gradient_raw(
            &self.potential,
            &self.aux,
            gamma,
            &state.x,
            &mut ws.aux,
            &mut ws.aux_grad,
            &mut ws.grad,
        );
        match cfg.mode {
            IntegratorMode::USpace => {
                let u_max = self.u_limit(cfg, temperature);
                let amp = (2.0 * temperature * w).sqrt();
                for k in 0..state.u.len() {
                    let xi: f64 = StandardNormal.sample(rng);
                    let sigma = amp * (state.u[k] / w).cosh();
                    let u_new = state.u[k] - ws.grad[k] * dt + sigma * sqrt_dt * xi;
                    if !u_new.is_finite() {
                        return Err(step_error(step, state));
                    }
                    state.u[k] = u_new.clamp(-u_max, u_max);
                    state.x[k] = self.link.g(state.u[k]);
                }
            }
            IntegratorMode::XSpace => {
                for k in 0..state.x.len() {
                    let xi: f64 = StandardNormal.sample(rng);
                    let x = state.x[k];
                    let f = self.link.f(x);
                    let drift = -f * ws.grad[k] + temperature * self.link.f_prime(x);
                    let mut x_new = x + drift * dt + (2.0 * temperature * f * dt).sqrt() * xi;
                    if !x_new.is_finite() {
                        return Err(step_error(step, state));
                    }
                    if x_new > X_REFLECT {
                        x_new = 2.0 * X_REFLECT - x_new;
                    } else if x_new < -X_REFLECT {
                        x_new = -2.0 * X_REFLECT - x_new;
                    }
                    state.x[k] = x_new.clamp(-X_REFLECT, X_REFLECT);
                    state.u[k] = self.link.g_inv(state.x[k]);
                }
            }
        }
        state.t = cfg.time_of(step + 1);
        Ok(())
    }

    pub fn initial_state(&self, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<NetworkState> {
        match &cfg.x0 {
            InitialCondition::Point { x } => NetworkState::from_x(x, &self.link),
            InitialCondition::UniformInterior { half_width } => {
                let x: Vec<f64> = (0..self.dim())
                    .map(|_| {
                        let u: f64 = rand::RngExt::random_range(rng, -1.0..1.0);
                        u * half_width
                    })
                    .collect();
                NetworkState::from_x(&x, &self.link)
            }
        }
    }

    /// Runs `cfg.steps` steps on stream `stream`, calling `visit(step, state)`
    /// for the initial state (step 0) and after every step.
    pub fn simulate_with<F>(&self, cfg: &SimConfig, stream: u64, mut visit: F) -> Result<NetworkState>
    where
        F: FnMut(u64, &NetworkState) -> Result<()>,
    {
        cfg.validate(self.dim())?;
        if (cfg.gain - self.link.w).abs() > 0.0 {
            return Err(QdError::config(format!(
                "config gain {} differs from network gain {}",
                cfg.gain, self.link.w
            )));
        }
        let mut rng = noise_stream(cfg.seed, stream);
        let mut state = self.initial_state(cfg, &mut rng)?;
        let mut ws = StepWorkspace::new(self.dim());
        visit(0, &state)?;
        for step in 0..cfg.steps {
            let t = cfg.time_of(step);
            let temperature = self.thermal.at(t);
            let gamma = self.quantum.value(t);
            self.em_step(cfg, &mut state, step, temperature, gamma, &mut rng, &mut ws)?;
            visit(step + 1, &state)?;
        }
        Ok(state)
    }

    fn record(&self, state: &NetworkState, ws: &mut AuxWorkspace) -> Record {
        let gamma = self.quantum.value(state.t);
        Record {
            t: state.t,
            x: state.x.clone(),
            v: self.potential.value(&state.x),
            w: effective_value_raw(&self.potential, &self.aux, gamma, &state.x, ws),
        }
    }

    /// Records every `cfg.stride`-th state (always including step 0).
    pub fn simulate(&self, cfg: &SimConfig) -> std::result::Result<Trajectory, SimulationFailure> {
        self.simulate_stream(cfg, 0)
    }

    pub fn simulate_stream(&self, cfg: &SimConfig, stream: u64) -> std::result::Result<Trajectory, SimulationFailure> {
        let mut traj = Trajectory::default();
        let mut ws = AuxWorkspace::new(self.dim());
        let result = self.simulate_with(cfg, stream, |step, state| {
            if step % cfg.stride == 0 {
                traj.records.push(self.record(state, &mut ws));
            }
            Ok(())
        });
        match result {
            Ok(_) => Ok(traj),
            Err(error) => Err(SimulationFailure { partial: traj, error }),
        }
    }

    /// Pooled histogram of every state after `burn_in` steps.
    pub fn stationary_histogram(&self, cfg: &SimConfig, burn_in: u64, bins: usize) -> Result<Histogram> {
        let mut hist = Histogram::new(self.dim(), bins);
        self.simulate_with(cfg, 0, |step, state| {
            if step > burn_in {
                hist.add(&state.x);
            }
            Ok(())
        })?;
        Ok(hist)
    }
}

fn step_error(step: u64, state: &NetworkState) -> QdError {
    QdError::Step {
        step,
        t: state.t,
        u: state.u.clone(),
        x: state.x.clone(),
    }
}

/// Constant `L̂` for the Hopfield descent slack `10 dt² L̂`.
///
/// For `du = -∇V dt`, `x = tanh(u/w)`, the second-order part of one step's
/// change in `V` is at most
/// `½ dt² (n G² · n H / w² + 0.77 n G³ / w²)`, where `G` bounds
/// `|∂V/∂x_k|`, `H` bounds `|∂²V/∂x_i∂x_j|`, and `0.77/w²` bounds
/// `|g''(u)| = |f(x) f'(x)|`. `G` and `H` are measured on a seeded sample of
/// the cube together with its corners and declared minimizers.
pub fn descent_slack_constant(p: &Potential, w: f64, samples: usize, seed: u64) -> f64 {
    use rand::RngExt;
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    let (mut gmax, mut hmax) = (0.0_f64, 0.0_f64);
    let mut probe = |x: &[f64], g: &mut [f64], h: &mut [f64]| {
        p.gradient_into(x, g);
        p.hessian_into(x, h);
        gmax = g.iter().fold(gmax, |a, v| a.max(v.abs()));
        hmax = h.iter().fold(hmax, |a, v| a.max(v.abs()));
    };
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for c in x.iter_mut() {
            *c = rng.random_range(-1.0..=1.0);
        }
        probe(&x, &mut g, &mut h);
    }
    if n <= 10 {
        for corner in 0..(1u32 << n) {
            for (k, c) in x.iter_mut().enumerate() {
                *c = if corner & (1 << k) != 0 { 1.0 } else { -1.0 };
            }
            probe(&x, &mut g, &mut h);
        }
    }
    let nf = n as f64;
    0.5 * (nf * gmax * gmax * nf * hmax + 0.77 * nf * gmax.powi(3)) / (w * w)
}
