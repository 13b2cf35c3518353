//! Benchmark potentials with analytic derivatives and known ground states.
//!
//! Every entry is separable, `V(x) = sum_k phi_k(x_k)`, so Hessians and
//! third-derivative tensors are diagonal.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Objective, Potential};
use crate::error::{QdError, Result};

/// Cap on the number of stored minimizers for products of multi-well factors.
const MAX_STORED_MINIMIZERS: usize = 4096;

/// A one-dimensional building block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    Constant {
        value: f64,
    },
    Linear {
        c: f64,
    },
    /// `(x^2 - a^2)^2`
    DoubleWell {
        a: f64,
    },
    /// `(x^2 - a^2)^2 + b x`
    TiltedDoubleWell {
        a: f64,
        b: f64,
    },
    /// `-amp cos(k pi (x - c0))` with `c0 = -1 + 1/k`: `k` equal wells centred
    /// in `k` equal sub-intervals, maxima on both faces.
    MultiWellCos {
        k: u32,
        amp: f64,
    },
    /// `(x - center)^2`
    Quadratic {
        center: f64,
    },
}

impl Factor {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QdError::config(msg));
        match *self {
            Factor::Constant { value } if !value.is_finite() => bad("constant value must be finite".into()),
            Factor::Linear { c } if !c.is_finite() => bad("linear coefficient must be finite".into()),
            Factor::DoubleWell { a } if !(a > 0.0 && a < 1.0) => bad(format!("double_well: a={a} must lie in (0,1)")),
            Factor::TiltedDoubleWell { a, b } => {
                if !(a > 0.0 && a < 1.0) {
                    return bad(format!("tilted_double_well: a={a} must lie in (0,1)"));
                }
                if !b.is_finite() {
                    return bad("tilted_double_well: b must be finite".into());
                }
                if self.global_minimizers().is_empty() {
                    return bad(format!(
                        "tilted_double_well(a={a}, b={b}): global minimum is not interior"
                    ));
                }
                Ok(())
            }
            Factor::MultiWellCos { k, amp } if k == 0 || !(amp > 0.0) => {
                bad(format!("multi_well_cos: need k >= 1 and amp > 0 (k={k}, amp={amp})"))
            }
            Factor::Quadratic { center } if !(center.abs() < 1.0) => {
                bad(format!("quadratic: center {center} must be strictly interior"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Factor::Constant { value } => value,
            Factor::Linear { c } => c * x,
            Factor::DoubleWell { a } => {
                let s = x * x - a * a;
                s * s
            }
            Factor::TiltedDoubleWell { a, b } => {
                let s = x * x - a * a;
                s * s + b * x
            }
            Factor::MultiWellCos { k, amp } => {
                let (kp, c0) = cos_params(k);
                -amp * (kp * (x - c0)).cos()
            }
            Factor::Quadratic { center } => (x - center) * (x - center),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            Factor::Constant { .. } => 0.0,
            Factor::Linear { c } => c,
            Factor::DoubleWell { a } => 4.0 * x * (x * x - a * a),
            Factor::TiltedDoubleWell { a, b } => 4.0 * x * (x * x - a * a) + b,
            Factor::MultiWellCos { k, amp } => {
                let (kp, c0) = cos_params(k);
                amp * kp * (kp * (x - c0)).sin()
            }
            Factor::Quadratic { center } => 2.0 * (x - center),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            Factor::Constant { .. } | Factor::Linear { .. } => 0.0,
            Factor::DoubleWell { a } | Factor::TiltedDoubleWell { a, .. } => 12.0 * x * x - 4.0 * a * a,
            Factor::MultiWellCos { k, amp } => {
                let (kp, c0) = cos_params(k);
                amp * kp * kp * (kp * (x - c0)).cos()
            }
            Factor::Quadratic { .. } => 2.0,
        }
    }

    pub fn d3(&self, x: f64) -> f64 {
        match *self {
            Factor::Constant { .. } | Factor::Linear { .. } | Factor::Quadratic { .. } => 0.0,
            Factor::DoubleWell { .. } | Factor::TiltedDoubleWell { .. } => 24.0 * x,
            Factor::MultiWellCos { k, amp } => {
                let (kp, c0) = cos_params(k);
                -amp * kp * kp * kp * (kp * (x - c0)).sin()
            }
        }
    }

    /// Interior global minimizers; empty when the minimum sits on a face or
    /// the factor is flat.
    pub fn global_minimizers(&self) -> Vec<f64> {
        match *self {
            Factor::Constant { .. } | Factor::Linear { .. } => vec![],
            Factor::DoubleWell { a } => vec![-a, a],
            Factor::Quadratic { center } => vec![center],
            Factor::MultiWellCos { k, .. } => {
                let (_, c0) = cos_params(k);
                (0..k).map(|m| c0 + 2.0 * m as f64 / k as f64).collect()
            }
            Factor::TiltedDoubleWell { a, .. } => {
                let mut candidates: Vec<f64> = Vec::new();
                for start in [-a, a] {
                    if let Some(r) = self.newton_root(start) {
                        if r.abs() < 1.0 && self.d2(r) > 0.0 && !candidates.iter().any(|c| (c - r).abs() < 1e-9) {
                            candidates.push(r);
                        }
                    }
                }
                let Some(best) = candidates.iter().map(|&r| self.value(r)).min_by(f64::total_cmp) else {
                    return vec![];
                };
                if self.value(-1.0) < best || self.value(1.0) < best {
                    return vec![];
                }
                candidates
                    .into_iter()
                    .filter(|&r| self.value(r) <= best + 1e-14)
                    .collect()
            }
        }
    }

    fn newton_root(&self, start: f64) -> Option<f64> {
        let mut x = start;
        for _ in 0..200 {
            let d2 = self.d2(x);
            if d2 == 0.0 {
                return None;
            }
            let step = self.d1(x) / d2;
            x -= step;
            if !x.is_finite() {
                return None;
            }
            if step.abs() < 1e-16 {
                break;
            }
        }
        (self.d1(x).abs() <= 1e-12).then_some(x)
    }
}

fn cos_params(k: u32) -> (f64, f64) {
    (k as f64 * PI, -1.0 + 1.0 / k as f64)
}

/// `V(x) = sum_k factors[k](x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    factors: Vec<Factor>,
}

impl Separable {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(QdError::config("separable potential needs at least one factor"));
        }
        for f in &factors {
            f.validate()?;
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Cartesian product of per-factor global minimizers, or empty if any
    /// factor has none or the product is too large to store.
    fn global_minimizers(&self) -> Vec<Vec<f64>> {
        let per: Vec<Vec<f64>> = self.factors.iter().map(Factor::global_minimizers).collect();
        if per.iter().any(Vec::is_empty) {
            return vec![];
        }
        let count = per.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.len()));
        if count.is_none_or(|c| c > MAX_STORED_MINIMIZERS) {
            return vec![];
        }
        let mut out = vec![Vec::with_capacity(per.len())];
        for choices in &per {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

impl Objective for Separable {
    fn dim(&self) -> usize {
        self.factors.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.factors.iter().zip(x).map(|(f, &xi)| f.value(xi)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, f), &xi) in out.iter_mut().zip(&self.factors).zip(x) {
            *o = f.d1(xi);
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.factors.len();
        out.fill(0.0);
        for (k, (f, &xi)) in self.factors.iter().zip(x).enumerate() {
            out[k * n + k] = f.d2(xi);
        }
    }

    fn third_contract(&self, x: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) -> bool {
        for (k, (f, &xi)) in self.factors.iter().zip(x).enumerate() {
            out[k] = f.d3(xi) * a[k] * b[k];
        }
        true
    }

    fn has_third(&self) -> bool {
        true
    }
}

fn one() -> usize {
    1
}

fn default_wells() -> u32 {
    3
}

fn default_amp() -> f64 {
    0.25
}

/// Serializable description of a catalog potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    DoubleWell {
        a: f64,
        #[serde(default = "one")]
        n: usize,
    },
    TiltedDoubleWell {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        n: usize,
    },
    MultiWellCos {
        #[serde(default = "default_wells")]
        k: u32,
        #[serde(default = "default_amp")]
        amp: f64,
        #[serde(default = "one")]
        n: usize,
    },
    QuadraticBowl {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        n: usize,
    },
    SeparableNd {
        factors: Vec<Factor>,
    },
    Constant {
        value: f64,
        #[serde(default = "one")]
        n: usize,
    },
    Linear {
        coeffs: Vec<f64>,
    },
}

impl PotentialSpec {
    fn factors(&self) -> Result<Vec<Factor>> {
        let repeat = |f: Factor, n: usize| -> Result<Vec<Factor>> {
            if n == 0 {
                return Err(QdError::config("dimension n must be positive"));
            }
            Ok(vec![f; n])
        };
        match self {
            PotentialSpec::DoubleWell { a, n } => repeat(Factor::DoubleWell { a: *a }, *n),
            PotentialSpec::TiltedDoubleWell { a, b, n } => repeat(Factor::TiltedDoubleWell { a: *a, b: *b }, *n),
            PotentialSpec::MultiWellCos { k, amp, n } => repeat(Factor::MultiWellCos { k: *k, amp: *amp }, *n),
            PotentialSpec::QuadraticBowl { center, n } => match center {
                Some(c) => Ok(c.iter().map(|&center| Factor::Quadratic { center }).collect()),
                None => repeat(Factor::Quadratic { center: 0.0 }, *n),
            },
            PotentialSpec::SeparableNd { factors } => Ok(factors.clone()),
            PotentialSpec::Constant { value, n } => repeat(Factor::Constant { value: *value }, *n),
            PotentialSpec::Linear { coeffs } => Ok(coeffs.iter().map(|&c| Factor::Linear { c }).collect()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PotentialSpec::DoubleWell { a, n } => format!("double_well(a={a}, n={n})"),
            PotentialSpec::TiltedDoubleWell { a, b, n } => {
                format!("tilted_double_well(a={a}, b={b}, n={n})")
            }
            PotentialSpec::MultiWellCos { k, amp, n } => {
                format!("multi_well_cos(k={k}, amp={amp}, n={n})")
            }
            PotentialSpec::QuadraticBowl { center, n } => match center {
                Some(c) => format!("quadratic_bowl(center={c:?})"),
                None => format!("quadratic_bowl(n={n})"),
            },
            PotentialSpec::SeparableNd { factors } => format!("separable_nd({} factors)", factors.len()),
            PotentialSpec::Constant { value, n } => format!("constant(value={value}, n={n})"),
            PotentialSpec::Linear { coeffs } => format!("linear({coeffs:?})"),
        }
    }

    pub fn build(&self) -> Result<Potential> {
        let sep = Separable::new(self.factors()?)?;
        let minimizers = sep.global_minimizers();
        Potential::new(self.label(), Arc::new(sep), minimizers)
    }
}

/// Builds a catalog potential from its name and a JSON parameter record.
pub fn catalog_make(name: &str, params: &Value) -> Result<Potential> {
    let mut record = match params {
        Value::Object(map) => map.clone(),
        Value::Null => serde_json::Map::new(),
        other => {
            return Err(QdError::config(format!(
                "parameters for {name} must be an object, got {other}"
            )))
        }
    };
    record.insert("name".into(), Value::String(name.to_string()));
    let spec: PotentialSpec =
        serde_json::from_value(Value::Object(record)).map_err(|e| QdError::config(format!("potential {name}: {e}")))?;
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::check_derivatives;
    use serde_json::json;

    fn all_defaults() -> Vec<Potential> {
        vec![
            catalog_make("double_well", &json!({"a": 0.5})).unwrap(),
            catalog_make("double_well", &json!({"a": 0.6, "n": 2})).unwrap(),
            catalog_make("tilted_double_well", &json!({"a": 0.5, "b": 0.05})).unwrap(),
            catalog_make("multi_well_cos", &json!({})).unwrap(),
            catalog_make("multi_well_cos", &json!({"k": 5, "amp": 0.1, "n": 2})).unwrap(),
            catalog_make("quadratic_bowl", &json!({"center": [0.2, -0.3, 0.0]})).unwrap(),
            catalog_make(
                "separable_nd",
                &json!({"factors": [
                    {"kind": "double_well", "a": 0.4},
                    {"kind": "multi_well_cos", "k": 3, "amp": 0.2},
                    {"kind": "quadratic", "center": 0.1}
                ]}),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn double_well_minimizers() {
        let p = catalog_make("double_well", &json!({"a": 0.5})).unwrap();
        assert_eq!(p.minimizers(), &[vec![-0.5], vec![0.5]]);
    }

    #[test]
    fn tilted_minimizer_matches_grid_search_oracle() {
        let p = catalog_make("tilted_double_well", &json!({"a": 0.5, "b": 0.05})).unwrap();
        // Oracle: dense scan of V over [-1,1].
        let n = 2_000_001;
        let (mut best_x, mut best_v) = (0.0, f64::INFINITY);
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let s = x * x - 0.25;
            let v = s * s + 0.05 * x;
            if v < best_v {
                best_v = v;
                best_x = x;
            }
        }
        assert_eq!(p.minimizers().len(), 1);
        let m = p.minimizers()[0][0];
        assert!((m - best_x).abs() < 2e-6, "{m} vs {best_x}");
        assert!(m < -0.5 && m > -0.55);
    }

    #[test]
    fn bowl_minimizer_at_origin() {
        let p = catalog_make("quadratic_bowl", &json!({"n": 3})).unwrap();
        assert_eq!(p.minimizers(), &[vec![0.0, 0.0, 0.0]]);
    }

    #[test]
    fn multi_well_cos_has_k_interior_wells_and_face_maxima() {
        let f = Factor::MultiWellCos { k: 3, amp: 0.25 };
        let mins = f.global_minimizers();
        assert_eq!(mins.len(), 3);
        for m in &mins {
            assert!(m.abs() < 1.0);
            assert!(f.d1(*m).abs() < 1e-12);
            assert!((f.value(*m) + 0.25).abs() < 1e-15);
        }
        assert!((f.value(1.0) - 0.25).abs() < 1e-12);
        assert!((f.value(-1.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(catalog_make("double_well", &json!({"a": 1.0})).is_err());
        assert!(catalog_make("double_well", &json!({"a": 0.5, "n": 0})).is_err());
        assert!(catalog_make("no_such_potential", &json!({})).is_err());
        assert!(catalog_make("double_well", &json!({"a": 0.5, "bogus": 1})).is_err());
        assert!(catalog_make("quadratic_bowl", &json!({"center": [1.0]})).is_err());
        // A tilt strong enough to push the minimum onto the face.
        assert!(catalog_make("tilted_double_well", &json!({"a": 0.2, "b": 5.0})).is_err());
    }

    #[test]
    fn catalog_derivatives_pass_the_c2_check() {
        for p in all_defaults() {
            let r = check_derivatives(&p, 100, 1e-4, 11).unwrap();
            assert!(r.passes(1e-5), "{}: {r:?}", p.name());
        }
    }

    #[test]
    fn third_derivatives_match_differenced_hessians() {
        for p in all_defaults() {
            let n = p.dim();
            let x: Vec<f64> = (0..n).map(|k| 0.37 - 0.21 * k as f64).collect();
            let a: Vec<f64> = (0..n).map(|k| 1.0 + k as f64).collect();
            let mut t3 = vec![0.0; n];
            assert!(p.third_contract(&x, &a, &a, &mut t3));
            let h = 1e-5;
            let mut hp = vec![0.0; n * n];
            let mut hm = vec![0.0; n * n];
            for k in 0..n {
                let mut xp = x.clone();
                xp[k] += h;
                p.hessian_into(&xp, &mut hp);
                xp[k] -= 2.0 * h;
                p.hessian_into(&xp, &mut hm);
                let fd: f64 = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| (hp[i * n + j] - hm[i * n + j]) / (2.0 * h) * a[i] * a[j])
                    .sum();
                assert!((fd - t3[k]).abs() < 1e-4, "{}: {fd} vs {}", p.name(), t3[k]);
            }
        }
    }

    #[test]
    fn known_minimizers_are_zero_noise_fixed_points() {
        for p in all_defaults() {
            for m in p.minimizers() {
                let g = p.gradient(m);
                assert!(g.iter().all(|c| c.abs() <= 1e-8));
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = PotentialSpec::MultiWellCos { k: 4, amp: 0.3, n: 2 };
        let text = serde_json::to_string(&spec).unwrap();
        let back: PotentialSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
