//! Auxiliary functions `Ṽ` and the effective potential `W = V - Γ Ṽ`.
//!
//! `W` drives the drift of the network and every Gibbs-type density. The
//! auxiliary gradient is analytic whenever the base potential exposes third
//! derivatives and falls back to central differences of `Ṽ` otherwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QdError, Result};
use crate::potentials::{grid_range, Objective, Potential, RangeReport};

/// Central-difference step for auxiliary gradients and Hessians.
pub const AUX_FD_STEP: f64 = 1e-4;

/// Grid resolution used to check that a homotopy start function is unimodal.
pub const UNIMODAL_CHECK_RESOLUTION: usize = 512;

#[derive(Debug, Clone)]
pub enum AuxiliarySpec {
    None,
    /// `Ṽ = V - V0` with a unimodal `V0`.
    Homotopy {
        v0: Potential,
    },
    /// `Ṽ = V`.
    Contraction,
    /// `Ṽ = -εᵀ ∇²V ε`.
    HessianQuadratic {
        eps: Vec<f64>,
    },
    /// `Ṽ = -(ε² + V'²) V''`, one dimension only.
    Kinetic1D {
        eps: f64,
    },
    /// `Ṽ = -εᵀ ∇²V ε - (∇V)ᵀ ∇²V ∇V`.
    KineticNd {
        eps: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Auto,
    FiniteDifference,
}

/// `0.1 (1,…,1)/√n`
pub fn default_eps(n: usize) -> Vec<f64> {
    vec![0.1 / (n as f64).sqrt(); n]
}

impl AuxiliarySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AuxiliarySpec::None => "none",
            AuxiliarySpec::Homotopy { .. } => "homotopy",
            AuxiliarySpec::Contraction => "contraction",
            AuxiliarySpec::HessianQuadratic { .. } => "hessian_quadratic",
            AuxiliarySpec::Kinetic1D { .. } => "kinetic1d",
            AuxiliarySpec::KineticNd { .. } => "kinetic_nd",
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AuxiliarySpec::None)
    }

    /// Structural checks against the base potential. Homotopy start functions
    /// are additionally grid-checked for unimodality when `n <= 2`.
    pub fn validate(&self, p: &Potential) -> Result<()> {
        let n = p.dim();
        let eps_len = |eps: &[f64]| {
            if eps.len() != n {
                Err(QdError::config(format!(
                    "{}: eps has {} entries, potential dimension is {n}",
                    self.kind(),
                    eps.len()
                )))
            } else if eps.iter().any(|e| !e.is_finite()) {
                Err(QdError::config(format!("{}: eps must be finite", self.kind())))
            } else {
                Ok(())
            }
        };
        match self {
            AuxiliarySpec::None | AuxiliarySpec::Contraction => Ok(()),
            AuxiliarySpec::HessianQuadratic { eps } | AuxiliarySpec::KineticNd { eps } => eps_len(eps),
            AuxiliarySpec::Kinetic1D { eps } => {
                if n != 1 {
                    return Err(QdError::config(format!(
                        "kinetic1d auxiliary requires n = 1, potential has n = {n}"
                    )));
                }
                if !eps.is_finite() {
                    return Err(QdError::config("kinetic1d: eps must be finite"));
                }
                Ok(())
            }
            AuxiliarySpec::Homotopy { v0 } => {
                if v0.dim() != n {
                    return Err(QdError::config(format!(
                        "homotopy V0 has dimension {}, potential has {n}",
                        v0.dim()
                    )));
                }
                if v0.minimizers().len() != 1 {
                    return Err(QdError::config(format!(
                        "homotopy V0 must declare exactly one minimizer, has {}",
                        v0.minimizers().len()
                    )));
                }
                if n <= 2 {
                    verify_unimodal(v0, UNIMODAL_CHECK_RESOLUTION)?;
                }
                Ok(())
            }
        }
    }
}

/// Scratch buffers so the hot integration loop stays allocation free.
#[derive(Debug, Clone)]
pub struct AuxWorkspace {
    hess: Vec<f64>,
    grad: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    xp: Vec<f64>,
}

impl AuxWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            hess: vec![0.0; n * n],
            grad: vec![0.0; n],
            t1: vec![0.0; n],
            t2: vec![0.0; n],
            xp: vec![0.0; n],
        }
    }
}

fn quad_form(h: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        let row = &h[i * n..(i + 1) * n];
        s += a[i] * row.iter().zip(a).map(|(hij, aj)| hij * aj).sum::<f64>();
    }
    s
}

fn mat_vec(h: &[f64], a: &[f64], out: &mut [f64]) {
    let n = a.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = h[i * n..(i + 1) * n].iter().zip(a).map(|(hij, aj)| hij * aj).sum();
    }
}

/// Unchecked `Ṽ(x)`.
pub fn aux_value_raw(aux: &AuxiliarySpec, p: &Potential, x: &[f64], ws: &mut AuxWorkspace) -> f64 {
    match aux {
        AuxiliarySpec::None => 0.0,
        AuxiliarySpec::Homotopy { v0 } => p.value(x) - v0.value(x),
        AuxiliarySpec::Contraction => p.value(x),
        AuxiliarySpec::HessianQuadratic { eps } => {
            p.hessian_into(x, &mut ws.hess);
            -quad_form(&ws.hess, eps)
        }
        AuxiliarySpec::Kinetic1D { eps } => {
            p.hessian_into(x, &mut ws.hess);
            p.gradient_into(x, &mut ws.grad);
            let d1 = ws.grad[0];
            -(eps * eps + d1 * d1) * ws.hess[0]
        }
        AuxiliarySpec::KineticNd { eps } => {
            p.hessian_into(x, &mut ws.hess);
            p.gradient_into(x, &mut ws.grad);
            -quad_form(&ws.hess, eps) - quad_form(&ws.hess, &ws.grad)
        }
    }
}

/// Unchecked `∇Ṽ(x)` written into `out`.
pub fn aux_gradient_raw(
    aux: &AuxiliarySpec,
    p: &Potential,
    x: &[f64],
    mode: GradientMode,
    ws: &mut AuxWorkspace,
    out: &mut [f64],
) {
    let analytic = mode == GradientMode::Auto;
    match aux {
        AuxiliarySpec::None => out.fill(0.0),
        AuxiliarySpec::Contraction if analytic => p.gradient_into(x, out),
        AuxiliarySpec::Homotopy { v0 } if analytic => {
            p.gradient_into(x, out);
            v0.gradient_into(x, &mut ws.t1);
            for (o, g0) in out.iter_mut().zip(&ws.t1) {
                *o -= g0;
            }
        }
        AuxiliarySpec::HessianQuadratic { eps } if analytic && p.has_third() => {
            p.third_contract(x, eps, eps, out);
            for o in out.iter_mut() {
                *o = -*o;
            }
        }
        AuxiliarySpec::Kinetic1D { eps } if analytic && p.has_third() => {
            p.gradient_into(x, &mut ws.grad);
            p.hessian_into(x, &mut ws.hess);
            let one = [1.0];
            p.third_contract(x, &one, &one, &mut ws.t1);
            let (d1, d2, d3) = (ws.grad[0], ws.hess[0], ws.t1[0]);
            out[0] = -2.0 * d1 * d2 * d2 - (eps * eps + d1 * d1) * d3;
        }
        AuxiliarySpec::KineticNd { eps } if analytic && p.has_third() => {
            // ∇(gᵀHg) = 2 H H g + T3(g, g)
            p.gradient_into(x, &mut ws.grad);
            p.hessian_into(x, &mut ws.hess);
            p.third_contract(x, eps, eps, out);
            p.third_contract(x, &ws.grad, &ws.grad, &mut ws.t1);
            mat_vec(&ws.hess, &ws.grad, &mut ws.t2);
            let n = x.len();
            for i in 0..n {
                let hhg: f64 = ws.hess[i * n..(i + 1) * n].iter().zip(&ws.t2).map(|(a, b)| a * b).sum();
                out[i] = -out[i] - 2.0 * hhg - ws.t1[i];
            }
        }
        _ => fd_gradient(aux, p, x, ws, out),
    }
}

fn fd_gradient(aux: &AuxiliarySpec, p: &Potential, x: &[f64], ws: &mut AuxWorkspace, out: &mut [f64]) {
    let h = AUX_FD_STEP;
    let mut xp = std::mem::take(&mut ws.xp);
    xp.copy_from_slice(x);
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let vp = aux_value_raw(aux, p, &xp, ws);
        xp[k] = x[k] - h;
        let vm = aux_value_raw(aux, p, &xp, ws);
        xp[k] = x[k];
        out[k] = (vp - vm) / (2.0 * h);
    }
    ws.xp = xp;
}

/// `∇W = ∇V - Γ ∇Ṽ`. With `Γ = 0` this is exactly `∇V`.
pub fn effective_gradient_raw(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    x: &[f64],
    ws: &mut AuxWorkspace,
    aux_grad: &mut [f64],
    out: &mut [f64],
) {
    p.gradient_into(x, out);
    if gamma == 0.0 || aux.is_none() {
        return;
    }
    aux_gradient_raw(aux, p, x, GradientMode::Auto, ws, aux_grad);
    for (o, a) in out.iter_mut().zip(aux_grad.iter()) {
        *o -= gamma * a;
    }
}

/// `W(x) = V(x) - Γ Ṽ(x)`.
pub fn effective_value_raw(p: &Potential, aux: &AuxiliarySpec, gamma: f64, x: &[f64], ws: &mut AuxWorkspace) -> f64 {
    let v = p.value(x);
    if gamma == 0.0 || aux.is_none() {
        return v;
    }
    v - gamma * aux_value_raw(aux, p, x, ws)
}

/// Checked `(Ṽ(x), ∇Ṽ(x))`.
pub fn eval_aux(aux: &AuxiliarySpec, p: &Potential, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    eval_aux_with(aux, p, x, GradientMode::Auto)
}

pub fn eval_aux_with(aux: &AuxiliarySpec, p: &Potential, x: &[f64], mode: GradientMode) -> Result<(f64, Vec<f64>)> {
    aux.validate_shape(p)?;
    crate::potentials::check_point(p.dim(), x)?;
    let mut ws = AuxWorkspace::new(p.dim());
    let v = aux_value_raw(aux, p, x, &mut ws);
    if !v.is_finite() {
        return Err(QdError::Evaluation {
            what: "auxiliary value",
            point: x.to_vec(),
        });
    }
    let mut g = vec![0.0; p.dim()];
    aux_gradient_raw(aux, p, x, mode, &mut ws, &mut g);
    if g.iter().any(|c| !c.is_finite()) {
        return Err(QdError::Evaluation {
            what: "auxiliary gradient",
            point: x.to_vec(),
        });
    }
    Ok((v, g))
}

impl AuxiliarySpec {
    /// The cheap part of [`validate`](Self::validate): dimensions only.
    fn validate_shape(&self, p: &Potential) -> Result<()> {
        match self {
            AuxiliarySpec::Homotopy { v0 } if v0.dim() != p.dim() => Err(QdError::config(format!(
                "homotopy V0 has dimension {}, potential has {}",
                v0.dim(),
                p.dim()
            ))),
            AuxiliarySpec::Homotopy { .. } => Ok(()),
            _ => self.validate(p),
        }
    }
}

/// Grid check that `v0` has a single strict local minimum, located at its
/// declared minimizer. Supports n = 1 and n = 2.
pub fn verify_unimodal(v0: &Potential, resolution: usize) -> Result<()> {
    let n = v0.dim();
    if n > 2 {
        return Err(QdError::UnsupportedDimension {
            n,
            what: "unimodality check",
        });
    }
    let declared = v0
        .minimizers()
        .first()
        .ok_or_else(|| QdError::config("unimodality check needs a declared minimizer"))?;
    let r = resolution.max(UNIMODAL_CHECK_RESOLUTION);
    let step = 2.0 / (r - 1) as f64;
    let coord = |i: usize| -1.0 + step * i as f64;
    let mut local_minima: Vec<Vec<f64>> = Vec::new();
    if n == 1 {
        let vals: Vec<f64> = (0..r).map(|i| v0.value(&[coord(i)])).collect();
        for i in 1..r - 1 {
            if vals[i] < vals[i - 1] && vals[i] < vals[i + 1] {
                local_minima.push(vec![coord(i)]);
            }
        }
    } else {
        let mut vals = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                vals[i * r + j] = v0.value(&[coord(i), coord(j)]);
            }
        }
        for i in 1..r - 1 {
            for j in 1..r - 1 {
                let c = vals[i * r + j];
                let strict = (-1i64..=1)
                    .flat_map(|di| (-1i64..=1).map(move |dj| (di, dj)))
                    .filter(|&(di, dj)| di != 0 || dj != 0)
                    .all(|(di, dj)| c < vals[(i as i64 + di) as usize * r + (j as i64 + dj) as usize]);
                if strict {
                    local_minima.push(vec![coord(i), coord(j)]);
                }
            }
        }
    }
    // A minimizer sitting between grid nodes can show up on either neighbour.
    let near = |m: &Vec<f64>| m.iter().zip(declared).all(|(a, b)| (a - b).abs() <= 1.5 * step);
    let foreign: Vec<_> = local_minima.iter().filter(|m| !near(m)).collect();
    if !foreign.is_empty() {
        return Err(QdError::config(format!(
            "homotopy V0 is not unimodal: extra local minima near {:?}",
            foreign.first()
        )));
    }
    Ok(())
}

/// `W = V - Γ Ṽ` as an [`Objective`].
#[derive(Debug)]
struct Effective {
    base: Potential,
    aux: AuxiliarySpec,
    gamma: f64,
}

impl Effective {
    fn passthrough(&self) -> bool {
        self.gamma == 0.0 || self.aux.is_none()
    }

    fn aux_hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let mut ws = AuxWorkspace::new(n);
        match &self.aux {
            AuxiliarySpec::None => out.fill(0.0),
            AuxiliarySpec::Contraction => self.base.hessian_into(x, out),
            AuxiliarySpec::Homotopy { v0 } => {
                self.base.hessian_into(x, out);
                let mut h0 = vec![0.0; n * n];
                v0.hessian_into(x, &mut h0);
                for (o, b) in out.iter_mut().zip(&h0) {
                    *o -= b;
                }
            }
            _ => {
                let h = AUX_FD_STEP;
                let mut xp = x.to_vec();
                let mut gp = vec![0.0; n];
                let mut gm = vec![0.0; n];
                for k in 0..n {
                    xp[k] = x[k] + h;
                    aux_gradient_raw(&self.aux, &self.base, &xp, GradientMode::Auto, &mut ws, &mut gp);
                    xp[k] = x[k] - h;
                    aux_gradient_raw(&self.aux, &self.base, &xp, GradientMode::Auto, &mut ws, &mut gm);
                    xp[k] = x[k];
                    for j in 0..n {
                        out[j * n + k] = (gp[j] - gm[j]) / (2.0 * h);
                    }
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        let s = 0.5 * (out[i * n + j] + out[j * n + i]);
                        out[i * n + j] = s;
                        out[j * n + i] = s;
                    }
                }
            }
        }
    }
}

impl Objective for Effective {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.passthrough() {
            return self.base.value(x);
        }
        let mut ws = AuxWorkspace::new(x.len());
        effective_value_raw(&self.base, &self.aux, self.gamma, x, &mut ws)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if self.passthrough() {
            return self.base.gradient_into(x, out);
        }
        let mut ws = AuxWorkspace::new(x.len());
        let mut ag = vec![0.0; x.len()];
        effective_gradient_raw(&self.base, &self.aux, self.gamma, x, &mut ws, &mut ag, out);
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        self.base.hessian_into(x, out);
        if self.passthrough() {
            return;
        }
        let mut ha = vec![0.0; out.len()];
        self.aux_hessian(x, &mut ha);
        for (o, a) in out.iter_mut().zip(&ha) {
            *o -= self.gamma * a;
        }
    }

    fn third_contract(&self, x: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) -> bool {
        if self.passthrough() {
            return self.base.third_contract(x, a, b, out);
        }
        match &self.aux {
            AuxiliarySpec::Contraction => {
                let ok = self.base.third_contract(x, a, b, out);
                for o in out.iter_mut() {
                    *o *= 1.0 - self.gamma;
                }
                ok
            }
            _ => false,
        }
    }

    fn has_third(&self) -> bool {
        self.passthrough() || (matches!(self.aux, AuxiliarySpec::Contraction) && self.base.has_third())
    }
}

/// Builds `W = V - Γ Ṽ`. With `Γ = 0` every evaluation is forwarded to `p`
/// unchanged.
pub fn make_effective(p: &Potential, aux: &AuxiliarySpec, gamma: f64) -> Result<Potential> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(QdError::config(format!(
            "quantum parameter Γ={gamma} must be finite and >= 0"
        )));
    }
    aux.validate_shape(p)?;
    let minimizers = if gamma == 0.0 || aux.is_none() {
        p.minimizers().to_vec()
    } else {
        vec![]
    };
    let name = if gamma == 0.0 || aux.is_none() {
        p.name().to_string()
    } else {
        format!("{} - {gamma}*{}", p.name(), aux.kind())
    };
    Potential::new(
        name,
        Arc::new(Effective {
            base: p.clone(),
            aux: aux.clone(),
            gamma,
        }),
        minimizers,
    )
}

/// Range `M̃ = sup Ṽ - inf Ṽ` on a dense grid.
pub fn aux_range(aux: &AuxiliarySpec, p: &Potential, resolution: usize) -> Result<RangeReport> {
    aux.validate_shape(p)?;
    let mut ws = AuxWorkspace::new(p.dim());
    grid_range(p.dim(), resolution, |x| {
        let v = aux_value_raw(aux, p, x, &mut ws);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QdError::Evaluation {
                what: "auxiliary value",
                point: x.to_vec(),
            })
        }
    })
}

/// Grid point refined toward a root of `h` by Newton steps on `(h, h')`,
/// kept only if it stays within one grid step of the start.
fn refine_root(x0: f64, step: f64, mut h: impl FnMut(f64) -> (f64, f64)) -> f64 {
    let mut x = x0;
    for _ in 0..50 {
        let (v, d) = h(x);
        if v == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - v / d;
        if !next.is_finite() || (next - x0).abs() > step || next.abs() >= 1.0 {
            return x0;
        }
        if (next - x).abs() < 1e-15 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

fn derivs_1d(p: &Potential, x: f64) -> (f64, f64, f64) {
    let mut g = [0.0];
    let mut hs = [0.0];
    p.gradient_into(&[x], &mut g);
    p.hessian_into(&[x], &mut hs);
    let mut t = [0.0];
    let d3 = if p.third_contract(&[x], &[1.0], &[1.0], &mut t) {
        t[0]
    } else {
        let mut hp = [0.0];
        let mut hm = [0.0];
        p.hessian_into(&[x + AUX_FD_STEP], &mut hp);
        p.hessian_into(&[x - AUX_FD_STEP], &mut hm);
        (hp[0] - hm[0]) / (2.0 * AUX_FD_STEP)
    };
    (g[0], hs[0], d3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumCheck {
    pub x: f64,
    pub maximum: bool,
    pub v_tilde: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub aux: String,
    pub extrema: Vec<ExtremumCheck>,
    pub pass: bool,
}

/// Sign test for the Hessian-based auxiliaries: `Ṽ > 0` at every strict
/// interior local maximum of a 1-D `V` and `Ṽ < 0` at every strict interior
/// local minimum. Extrema are located on an inclusive grid of `resolution`
/// points and polished by Newton's method on `V'`.
pub fn sign_property(aux: &AuxiliarySpec, p: &Potential, resolution: usize) -> Result<SignReport> {
    if p.dim() != 1 {
        return Err(QdError::UnsupportedDimension {
            n: p.dim(),
            what: "sign test",
        });
    }
    if resolution < 3 {
        return Err(QdError::config("sign test needs at least 3 grid points"));
    }
    aux.validate_shape(p)?;
    let step = 2.0 / (resolution - 1) as f64;
    let xs: Vec<f64> = (0..resolution).map(|i| -1.0 + i as f64 * step).collect();
    let vs: Vec<f64> = xs.iter().map(|x| p.value(&[*x])).collect();
    let mut ws = AuxWorkspace::new(1);
    let mut extrema = Vec::new();
    for i in 1..resolution - 1 {
        let maximum = vs[i] > vs[i - 1] && vs[i] > vs[i + 1];
        let minimum = vs[i] < vs[i - 1] && vs[i] < vs[i + 1];
        if !(maximum || minimum) {
            continue;
        }
        let x = refine_root(xs[i], step, |x| {
            let (g, h, _) = derivs_1d(p, x);
            (g, h)
        });
        let v_tilde = aux_value_raw(aux, p, &[x], &mut ws);
        let ok = if maximum { v_tilde > 0.0 } else { v_tilde < 0.0 };
        extrema.push(ExtremumCheck {
            x,
            maximum,
            v_tilde,
            ok,
        });
    }
    let pass = !extrema.is_empty() && extrema.iter().all(|e| e.ok);
    Ok(SignReport {
        aux: aux.kind().to_string(),
        extrema,
        pass,
    })
}

/// Tolerance on `|V''|` that defines an inflection point in [`contact_property`].
pub const CONTACT_CURVATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactCheck {
    pub x: f64,
    pub v2: f64,
    pub gap: f64,
    pub allowance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub gamma: f64,
    pub points: Vec<ContactCheck>,
    pub pass: bool,
}

/// Contact test for the kinetic auxiliary: wherever `|V''| <= 1e-10`,
/// `|W - V| <= Γ 1e-10 (ε² + V'²)`.
///
/// Candidate points are the grid points meeting the curvature tolerance
/// plus the sign changes of `V''` on the grid, refined by Newton's method
/// on `V''` until they meet it.
pub fn contact_property(eps: f64, p: &Potential, gamma: f64, resolution: usize) -> Result<ContactReport> {
    if p.dim() != 1 {
        return Err(QdError::UnsupportedDimension {
            n: p.dim(),
            what: "contact test",
        });
    }
    if resolution < 3 {
        return Err(QdError::config("contact test needs at least 3 grid points"));
    }
    let aux = AuxiliarySpec::Kinetic1D { eps };
    let step = 2.0 / (resolution - 1) as f64;
    let xs: Vec<f64> = (0..resolution).map(|i| -1.0 + i as f64 * step).collect();
    let v2: Vec<f64> = xs.iter().map(|&x| derivs_1d(p, x).1).collect();
    let mut candidates: Vec<f64> = Vec::new();
    for i in 0..resolution {
        if v2[i].abs() <= CONTACT_CURVATURE_TOL {
            candidates.push(xs[i]);
        } else if i + 1 < resolution && v2[i + 1].abs() > CONTACT_CURVATURE_TOL && v2[i].signum() != v2[i + 1].signum()
        {
            let start = if v2[i].abs() < v2[i + 1].abs() {
                xs[i]
            } else {
                xs[i + 1]
            };
            let x = refine_root(start, step, |x| {
                let (_, h, t) = derivs_1d(p, x);
                (h, t)
            });
            if derivs_1d(p, x).1.abs() <= CONTACT_CURVATURE_TOL {
                candidates.push(x);
            }
        }
    }
    let mut ws = AuxWorkspace::new(1);
    let points: Vec<ContactCheck> = candidates
        .into_iter()
        .map(|x| {
            let (g, h, _) = derivs_1d(p, x);
            let w = effective_value_raw(p, &aux, gamma, &[x], &mut ws);
            let gap = (w - p.value(&[x])).abs();
            let allowance = gamma * CONTACT_CURVATURE_TOL * (eps * eps + g * g);
            ContactCheck {
                x,
                v2: h,
                gap,
                allowance,
                ok: gap <= allowance,
            }
        })
        .collect();
    let pass = !points.is_empty() && points.iter().all(|c| c.ok);
    Ok(ContactReport { gamma, points, pass })
}
