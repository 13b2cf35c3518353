//! Objective functions on the closed cube `[-1,1]^n`.
//!
//! A [`Potential`] wraps any [`Objective`] together with a display name and
//! the list of known global minimizers. The benchmark catalog lives in
//! [`catalog`]; every catalog entry is a sum of one-dimensional factors and
//! carries analytic derivatives up to third order.

pub mod catalog;

use std::fmt;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QdError, Result};

pub use catalog::{catalog_make, Factor, PotentialSpec};

/// Raw numerical access to an objective and its derivatives.
///
/// Implementations do not check the domain; [`Potential::eval_all`] does.
/// Hessians are written row-major into an `n*n` slice.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn hessian(&self, x: &[f64], out: &mut [f64]);

    /// Writes `out_k = sum_ij d^3V/(dx_i dx_j dx_k) a_i b_j`.
    ///
    /// Returns `false` when third derivatives are not available, in which
    /// case `out` is left untouched.
    fn third_contract(&self, _x: &[f64], _a: &[f64], _b: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn has_third(&self) -> bool {
        false
    }
}

/// Value, gradient and row-major Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl Evaluation {
    pub fn hessian_at(&self, i: usize, j: usize) -> f64 {
        let n = self.gradient.len();
        self.hessian[i * n + j]
    }
}

#[derive(Clone)]
pub struct Potential {
    name: String,
    inner: Arc<dyn Objective>,
    minimizers: Vec<Vec<f64>>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("minimizers", &self.minimizers.len())
            .finish()
    }
}

impl Potential {
    /// Wraps an objective. Declared minimizers must lie strictly inside the
    /// cube and have vanishing gradient (`||grad V||_inf <= 1e-8`).
    pub fn new(name: impl Into<String>, objective: Arc<dyn Objective>, minimizers: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        let n = objective.dim();
        if n == 0 {
            return Err(QdError::config(format!("potential {name}: dimension must be positive")));
        }
        let mut grad = vec![0.0; n];
        for m in &minimizers {
            if m.len() != n {
                return Err(QdError::config(format!(
                    "potential {name}: minimizer {m:?} has wrong dimension"
                )));
            }
            if m.iter().any(|c| !(c.abs() < 1.0)) {
                return Err(QdError::config(format!(
                    "potential {name}: minimizer {m:?} is not strictly interior"
                )));
            }
            objective.gradient(m, &mut grad);
            let gmax = grad.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
            if !(gmax <= 1e-8) {
                return Err(QdError::config(format!(
                    "potential {name}: declared minimizer {m:?} has gradient norm {gmax:e}"
                )));
            }
        }
        Ok(Self {
            name,
            inner: objective,
            minimizers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.inner.as_ref()
    }

    pub fn minimizers(&self) -> &[Vec<f64>] {
        &self.minimizers
    }

    pub fn has_third(&self) -> bool {
        self.inner.has_third()
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }

    #[inline]
    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.hessian(x, out)
    }

    #[inline]
    pub fn third_contract(&self, x: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) -> bool {
        self.inner.third_contract(x, a, b, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Checked evaluation of value, gradient and Hessian.
    pub fn eval_all(&self, x: &[f64]) -> Result<Evaluation> {
        check_point(self.dim(), x)?;
        let n = self.dim();
        let value = self.value(x);
        if !value.is_finite() {
            return Err(QdError::Evaluation {
                what: "value",
                point: x.to_vec(),
            });
        }
        let mut gradient = vec![0.0; n];
        self.gradient_into(x, &mut gradient);
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(QdError::Evaluation {
                what: "gradient",
                point: x.to_vec(),
            });
        }
        let mut hessian = vec![0.0; n * n];
        self.hessian_into(x, &mut hessian);
        if hessian.iter().any(|h| !h.is_finite()) {
            return Err(QdError::Evaluation {
                what: "hessian",
                point: x.to_vec(),
            });
        }
        // Symmetrize away roundoff from implementations that fill both halves independently.
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (hessian[i * n + j] + hessian[j * n + i]);
                hessian[i * n + j] = s;
                hessian[j * n + i] = s;
            }
        }
        Ok(Evaluation {
            value,
            gradient,
            hessian,
        })
    }

    /// Checked value only.
    pub fn eval_value(&self, x: &[f64]) -> Result<f64> {
        check_point(self.dim(), x)?;
        let v = self.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QdError::Evaluation {
                what: "value",
                point: x.to_vec(),
            })
        }
    }
}

pub(crate) fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(QdError::config(format!(
            "point has {} coordinates, potential has dimension {n}",
            x.len()
        )));
    }
    if x.iter().any(|c| !(c.abs() <= 1.0)) {
        return Err(QdError::Domain { point: x.to_vec() });
    }
    Ok(())
}

/// Extremes of a function over a tensor grid on the closed cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeReport {
    pub inf: f64,
    pub sup: f64,
    /// `sup - inf`
    pub range: f64,
    pub arg_inf: Vec<f64>,
    pub arg_sup: Vec<f64>,
    /// Points per axis, or the sample count in approximate mode.
    pub resolution: usize,
    pub approximate: bool,
}

/// Largest dimension handled by exhaustive tensor grids.
pub const MAX_GRID_DIM: usize = 3;

/// Exhaustive range of `f` over `resolution^n` points including the faces.
pub fn grid_range<F>(n: usize, resolution: usize, mut f: F) -> Result<RangeReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if n > MAX_GRID_DIM {
        return Err(QdError::UnsupportedDimension { n, what: "range grid" });
    }
    if resolution < 3 {
        return Err(QdError::config(format!("range resolution {resolution} < 3")));
    }
    let axis: Vec<f64> = (0..resolution)
        .map(|i| -1.0 + 2.0 * i as f64 / (resolution - 1) as f64)
        .collect();
    let total = resolution.pow(n as u32);
    let mut x = vec![0.0; n];
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut worst = (f64::NEG_INFINITY, vec![0.0; n]);
    for flat in 0..total {
        let mut rem = flat;
        for k in (0..n).rev() {
            x[k] = axis[rem % resolution];
            rem /= resolution;
        }
        let v = f(&x)?;
        if v < best.0 {
            best = (v, x.clone());
        }
        if v > worst.0 {
            worst = (v, x.clone());
        }
    }
    Ok(RangeReport {
        inf: best.0,
        sup: worst.0,
        range: (worst.0 - best.0).max(0.0),
        arg_inf: best.1,
        arg_sup: worst.1,
        resolution,
        approximate: false,
    })
}

/// Seeded uniform-sample estimate of the range; always flagged approximate.
pub fn sampled_range<F>(n: usize, samples: usize, seed: u64, mut f: F) -> Result<RangeReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if samples == 0 {
        return Err(QdError::config("sampled range needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut worst = (f64::NEG_INFINITY, vec![0.0; n]);
    for _ in 0..samples {
        for c in x.iter_mut() {
            *c = rng.random_range(-1.0..=1.0);
        }
        let v = f(&x)?;
        if v < best.0 {
            best = (v, x.clone());
        }
        if v > worst.0 {
            worst = (v, x.clone());
        }
    }
    Ok(RangeReport {
        inf: best.0,
        sup: worst.0,
        range: (worst.0 - best.0).max(0.0),
        arg_inf: best.1,
        arg_sup: worst.1,
        resolution: samples,
        approximate: true,
    })
}

/// Range `M = sup V - inf V` on a dense grid (n <= 3).
pub fn potential_range(p: &Potential, resolution: usize) -> Result<RangeReport> {
    grid_range(p.dim(), resolution, |x| p.eval_value(x))
}

/// Range estimate for any dimension; exact grid up to n = 3, sampled above.
pub fn potential_range_auto(p: &Potential, resolution: usize, seed: u64) -> Result<RangeReport> {
    if p.dim() <= MAX_GRID_DIM {
        potential_range(p, resolution)
    } else {
        sampled_range(p.dim(), resolution.max(3).pow(3), seed, |x| p.eval_value(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub samples: usize,
    pub step: f64,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
}

impl DerivativeReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_gradient_error <= tol && self.max_hessian_error <= tol
    }
}

/// Compares analytic derivatives against central differences at seeded
/// sample points in `[-1+h, 1-h]^n`.
///
/// Errors are scaled by `max(1, |exact|)`, so steep potentials are not
/// penalized for the `O(h^2)` truncation of the difference quotient.
pub fn check_derivatives(p: &Potential, samples: usize, h: f64, seed: u64) -> Result<DerivativeReport> {
    if !(h > 0.0) || h >= 0.5 {
        return Err(QdError::config(format!(
            "finite-difference step {h} must lie in (0, 0.5)"
        )));
    }
    if samples == 0 {
        return Err(QdError::config("derivative check needs at least one sample"));
    }
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut max_g = 0.0_f64;
    let mut max_h = 0.0_f64;
    for _ in 0..samples {
        for c in x.iter_mut() {
            *c = rng.random_range((-1.0 + h)..=(1.0 - h));
        }
        let eval = p.eval_all(&x)?;
        for k in 0..n {
            xp.copy_from_slice(&x);
            xp[k] = x[k] + h;
            let vp = p.value(&xp);
            p.gradient_into(&xp, &mut gp);
            xp[k] = x[k] - h;
            let vm = p.value(&xp);
            p.gradient_into(&xp, &mut gm);
            if !(vp.is_finite() && vm.is_finite()) {
                return Err(QdError::Evaluation {
                    what: "value",
                    point: x.clone(),
                });
            }
            let fd = (vp - vm) / (2.0 * h);
            max_g = max_g.max((fd - eval.gradient[k]).abs() / eval.gradient[k].abs().max(1.0));
            for j in 0..n {
                let fd_h = (gp[j] - gm[j]) / (2.0 * h);
                if !fd_h.is_finite() {
                    return Err(QdError::Evaluation {
                        what: "gradient",
                        point: x.clone(),
                    });
                }
                let exact = eval.hessian_at(j, k);
                max_h = max_h.max((fd_h - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    Ok(DerivativeReport {
        samples,
        step: h,
        max_gradient_error: max_g,
        max_hessian_error: max_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn dw() -> Potential {
        catalog_make("double_well", &json!({"a": 0.5})).unwrap()
    }

    #[test]
    fn double_well_values_at_known_points() {
        let p = dw();
        let e = p.eval_all(&[0.5]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient[0], 0.0);
        let e = p.eval_all(&[0.0]).unwrap();
        assert!((e.value - 0.0625).abs() < 1e-15);
        assert!((e.hessian[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn double_well_gradient_matches_finite_difference_oracle() {
        let p = dw();
        let h = 1e-6;
        let fd = (p.value(&[0.8 + h]) - p.value(&[0.8 - h])) / (2.0 * h);
        assert!((fd - 1.248).abs() < 1e-8);
        let e = p.eval_all(&[0.8]).unwrap();
        assert!((e.gradient[0] - fd).abs() < 1e-8);
    }

    #[test]
    fn out_of_cube_is_a_domain_error() {
        let p = dw();
        assert!(matches!(p.eval_all(&[1.0 + 1e-12]), Err(QdError::Domain { .. })));
        assert!(p.eval_all(&[1.0]).is_ok());
    }

    #[test]
    fn range_examples() {
        let c = catalog_make("constant", &json!({"value": 5.0})).unwrap();
        assert_eq!(potential_range(&c, 17).unwrap().range, 0.0);

        let r = potential_range(&dw(), 4097).unwrap();
        assert!((r.range - 0.5625).abs() < 1e-12);
        assert!((r.inf).abs() < 1e-15);

        let bowl = catalog_make("quadratic_bowl", &json!({"center": [0.0, 0.0]})).unwrap();
        let r = potential_range(&bowl, 65).unwrap();
        assert!((r.range - 2.0).abs() < 1e-12);
        assert_eq!(r.arg_inf, vec![0.0, 0.0]);
    }

    #[test]
    fn range_rejects_high_dimension_and_coarse_grids() {
        let p = catalog_make("quadratic_bowl", &json!({"center": [0.0, 0.0, 0.0, 0.0]})).unwrap();
        assert!(matches!(
            potential_range(&p, 5),
            Err(QdError::UnsupportedDimension { n: 4, .. })
        ));
        let r = potential_range_auto(&p, 9, 3).unwrap();
        assert!(r.approximate);
        assert!(r.range <= 4.0);
        assert!(matches!(potential_range(&dw(), 2), Err(QdError::Config(_))));
    }

    #[test]
    fn range_is_monotone_under_refinement() {
        let p = catalog_make("tilted_double_well", &json!({"a": 0.5, "b": 0.05})).unwrap();
        let mut prev = 0.0;
        for r in [3, 5, 9, 17, 33, 65, 129, 257] {
            let m = potential_range(&p, r).unwrap().range;
            assert!(m >= prev - 1e-12, "r={r}: {m} < {prev}");
            prev = m;
        }
    }

    #[test]
    fn derivative_check_examples() {
        let lin = catalog_make("linear", &json!({"coeffs": [0.3, -1.2]})).unwrap();
        let r = check_derivatives(&lin, 20, 1e-4, 1).unwrap();
        assert!(r.max_gradient_error < 1e-10);

        let bowl = catalog_make("quadratic_bowl", &json!({"center": [0.1, -0.2, 0.3]})).unwrap();
        let r = check_derivatives(&bowl, 20, 1e-4, 2).unwrap();
        assert!(r.max_hessian_error <= 1e-8);

        let r = check_derivatives(&dw(), 100, 1e-4, 3).unwrap();
        assert!(r.max_gradient_error <= 1e-6);
    }

    #[test]
    fn derivative_check_is_deterministic() {
        let a = check_derivatives(&dw(), 10, 1e-3, 9).unwrap();
        let b = check_derivatives(&dw(), 10, 1e-3, 9).unwrap();
        assert_eq!(a, b);
        assert!(check_derivatives(&dw(), 10, 0.0, 9).is_err());
    }

    #[derive(Debug)]
    struct Blowup;
    impl Objective for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            1.0 / x[0]
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            out[0] = -1.0 / (x[0] * x[0]);
        }
        fn hessian(&self, x: &[f64], out: &mut [f64]) {
            out[0] = 2.0 / (x[0] * x[0] * x[0]);
        }
    }

    #[test]
    fn non_finite_results_are_evaluation_errors() {
        let p = Potential::new("blowup", Arc::new(Blowup), vec![]).unwrap();
        assert!(matches!(p.eval_all(&[0.0]), Err(QdError::Evaluation { .. })));
        assert!(p.eval_all(&[0.5]).is_ok());
    }

    #[test]
    fn declared_minimizers_are_validated() {
        let bad = Potential::new("bad", Arc::new(Blowup), vec![vec![0.5]]);
        assert!(bad.is_err());
    }
}
