//! Thermal `T(t)` and quantum `Γ(t)` schedules.

use serde::{Deserialize, Serialize};

use crate::error::{QdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThermalSchedule {
    Constant {
        #[serde(rename = "T")]
        t: f64,
    },
    /// `T(t) = T0 / log2(2 + t)`
    Logarithmic {
        #[serde(rename = "T0")]
        t0: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantumSchedule {
    Zero,
    Constant {
        gamma0: f64,
    },
    /// `Γ(t) = Γ0 / (1 + t)^p`
    PowerDecay {
        gamma0: f64,
        p: f64,
    },
    /// `Γ(t) = max(0, Γ0 (1 - t / t_end))`
    LinearToZero {
        gamma0: f64,
        t_end: f64,
    },
}

impl ThermalSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThermalSchedule::Constant { t } if t >= 0.0 && t.is_finite() => Ok(()),
            ThermalSchedule::Logarithmic { t0 } if t0 > 0.0 && t0.is_finite() => Ok(()),
            other => Err(QdError::config(format!("invalid thermal schedule {other:?}"))),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            ThermalSchedule::Constant { t: temp } => temp,
            ThermalSchedule::Logarithmic { t0 } => t0 / (2.0 + t).log2(),
        }
    }

    pub fn initial(&self) -> f64 {
        self.at(0.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ThermalSchedule::Constant { .. })
    }
}

impl QuantumSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            QuantumSchedule::Zero => true,
            QuantumSchedule::Constant { gamma0 } => gamma0 >= 0.0 && gamma0.is_finite(),
            QuantumSchedule::PowerDecay { gamma0, p } => {
                gamma0 >= 0.0 && gamma0.is_finite() && p > 0.0 && p.is_finite()
            }
            QuantumSchedule::LinearToZero { gamma0, t_end } => {
                gamma0 >= 0.0 && gamma0.is_finite() && t_end > 0.0 && t_end.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(QdError::config(format!("invalid quantum schedule {self:?}")))
        }
    }

    /// `(Γ(t), dΓ/dt)`; at the `LinearToZero` kink the left derivative is used.
    pub fn at(&self, t: f64) -> (f64, f64) {
        match *self {
            QuantumSchedule::Zero => (0.0, 0.0),
            QuantumSchedule::Constant { gamma0 } => (gamma0, 0.0),
            QuantumSchedule::PowerDecay { gamma0, p } => {
                let base = 1.0 + t;
                (gamma0 / base.powf(p), -p * gamma0 / base.powf(p + 1.0))
            }
            QuantumSchedule::LinearToZero { gamma0, t_end } => {
                if t <= t_end {
                    (gamma0 * (1.0 - t / t_end), -gamma0 / t_end)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.at(t).0
    }

    pub fn initial(&self) -> f64 {
        self.value(0.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, QuantumSchedule::Zero | QuantumSchedule::Constant { .. })
    }

    /// Times where the schedule is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            QuantumSchedule::LinearToZero { t_end, .. } => vec![t_end],
            _ => vec![],
        }
    }
}

pub fn thermal_at(s: &ThermalSchedule, t: f64) -> f64 {
    s.at(t)
}

pub fn quantum_at(s: &QuantumSchedule, t: f64) -> (f64, f64) {
    s.at(t)
}

/// Diagnostics for a joint thermal/quantum schedule pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub m: f64,
    pub m_tilde: f64,
    pub t0: f64,
    pub t0_exceeds_2m: bool,
    /// `M + Γ(0) M̃`, an upper bound on `sup_t M*(Γ(t))` for nonincreasing Γ.
    pub m_star_sup_bound: f64,
    pub t0_exceeds_2m_star_bound: bool,
    pub probe_times: Vec<f64>,
    /// `Λ(t) = Γ(t) / T(t)` at the probe times.
    pub lambda: Vec<f64>,
    pub lambda_max: f64,
    /// Λ never increases between consecutive probes.
    pub lambda_nonincreasing: bool,
    /// `D(t) = 1 / T(t)` at the probe times.
    pub d_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Number of probe points for [`validate_joint`].
pub const JOINT_PROBES: usize = 64;

fn probe_times(horizon: f64) -> Vec<f64> {
    // t = 0 followed by a geometric grid from horizon*1e-4 to horizon.
    let mut times = vec![0.0];
    let lo = (horizon * 1e-4).ln();
    let hi = horizon.ln();
    for k in 0..JOINT_PROBES - 1 {
        let s = k as f64 / (JOINT_PROBES - 2) as f64;
        times.push((lo + s * (hi - lo)).exp());
    }
    *times.last_mut().expect("non-empty") = horizon;
    times
}

/// Checks the sufficient conditions of joint annealing. Violations are
/// reported as warnings, never as errors.
pub fn validate_joint(th: &ThermalSchedule, q: &QuantumSchedule, m: f64, m_tilde: f64, horizon: f64) -> JointReport {
    let horizon = if horizon > 0.0 { horizon } else { 1.0 };
    let times = probe_times(horizon);
    let t0 = th.initial();
    let lambda: Vec<f64> = times
        .iter()
        .map(|&t| {
            let temp = th.at(t);
            let g = q.value(t);
            if g == 0.0 {
                0.0
            } else if temp > 0.0 {
                g / temp
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let d_values: Vec<f64> = times.iter().map(|&t| 1.0 / th.at(t)).collect();
    let lambda_max = lambda.iter().copied().fold(0.0, f64::max);
    let lambda_nonincreasing = lambda.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let m_star_sup_bound = m + q.initial() * m_tilde;

    let mut warnings = Vec::new();
    let t0_exceeds_2m = t0 > 2.0 * m;
    if !t0_exceeds_2m {
        warnings.push(format!("T(0)={t0} does not exceed 2M={}", 2.0 * m));
    }
    let t0_exceeds_2m_star_bound = t0 > 2.0 * m_star_sup_bound;
    if !lambda_nonincreasing {
        warnings.push("Λ(t)=Γ(t)/T(t) increases over the probe horizon".to_string());
    }
    let first = lambda[0];
    let last = *lambda.last().expect("non-empty");
    if last > 0.0 && !(last < first) {
        warnings.push(format!("Λ does not decay: Λ(0)={first}, Λ(horizon)={last}"));
    }
    JointReport {
        m,
        m_tilde,
        t0,
        t0_exceeds_2m,
        m_star_sup_bound,
        t0_exceeds_2m_star_bound,
        probe_times: times,
        lambda,
        lambda_max,
        lambda_nonincreasing,
        d_values,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thermal_examples() {
        let log = ThermalSchedule::Logarithmic { t0: 1.0 };
        assert_eq!(thermal_at(&log, 0.0), 1.0);
        assert_eq!(thermal_at(&log, 2.0), 0.5);
        assert_eq!(thermal_at(&ThermalSchedule::Constant { t: 0.4 }, 1e6), 0.4);
    }

    #[test]
    fn quantum_examples() {
        let (g, dg) = quantum_at(&QuantumSchedule::PowerDecay { gamma0: 1.0, p: 1.0 }, 3.0);
        assert!((g - 0.25).abs() < 1e-15 && (dg + 0.0625).abs() < 1e-15);
        let lin = QuantumSchedule::LinearToZero {
            gamma0: 1.0,
            t_end: 10.0,
        };
        assert_eq!(quantum_at(&lin, 20.0), (0.0, 0.0));
        assert_eq!(quantum_at(&lin, 10.0), (0.0, -0.1));
        assert_eq!(quantum_at(&QuantumSchedule::Zero, 7.0), (0.0, 0.0));
    }

    #[test]
    fn joint_examples() {
        let r = validate_joint(
            &ThermalSchedule::Logarithmic { t0: 1.2 },
            &QuantumSchedule::PowerDecay { gamma0: 1.0, p: 1.0 },
            0.5625,
            0.5625,
            1000.0,
        );
        assert!(r.t0_exceeds_2m);
        assert!(r.lambda_nonincreasing);
        // Oracle: Λ(t) = log2(2+t) / (1.2 (1+t)) evaluated independently.
        for (t, l) in r.probe_times.iter().zip(&r.lambda) {
            let expect = (2.0 + t).log2() / (1.2 * (1.0 + t));
            assert!((l - expect).abs() < 1e-12);
        }
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert!(!r.t0_exceeds_2m_star_bound);

        let r = validate_joint(
            &ThermalSchedule::Constant { t: 0.4 },
            &QuantumSchedule::Zero,
            0.5,
            0.0,
            10.0,
        );
        assert!(r.lambda.iter().all(|&l| l == 0.0));
        assert_eq!(r.lambda_max, 0.0);

        let r = validate_joint(
            &ThermalSchedule::Logarithmic { t0: 1.0 },
            &QuantumSchedule::Constant { gamma0: 0.5 },
            0.3,
            0.3,
            100.0,
        );
        assert!(!r.lambda_nonincreasing);
        assert!(!r.warnings.is_empty());
        assert!(r.d_values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(ThermalSchedule::Logarithmic { t0: 0.0 }.validate().is_err());
        assert!(QuantumSchedule::PowerDecay { gamma0: 1.0, p: 0.0 }.validate().is_err());
        assert!(QuantumSchedule::LinearToZero {
            gamma0: 1.0,
            t_end: -1.0
        }
        .validate()
        .is_err());
        assert!(QuantumSchedule::Constant { gamma0: -0.1 }.validate().is_err());
    }

    #[test]
    fn serde_uses_config_key_names() {
        let th: ThermalSchedule = serde_json::from_str(r#"{"kind":"logarithmic","T0":1.2}"#).unwrap();
        assert_eq!(th, ThermalSchedule::Logarithmic { t0: 1.2 });
        let q: QuantumSchedule = serde_json::from_str(r#"{"kind":"power_decay","gamma0":0.5,"p":1}"#).unwrap();
        assert_eq!(q, QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 });
    }

    fn any_thermal() -> impl Strategy<Value = ThermalSchedule> {
        prop_oneof![
            (0.0..5.0f64).prop_map(|t| ThermalSchedule::Constant { t }),
            (0.01..5.0f64).prop_map(|t0| ThermalSchedule::Logarithmic { t0 }),
        ]
    }

    fn any_quantum() -> impl Strategy<Value = QuantumSchedule> {
        prop_oneof![
            Just(QuantumSchedule::Zero),
            (0.0..2.0f64).prop_map(|gamma0| QuantumSchedule::Constant { gamma0 }),
            (0.0..2.0f64, 0.1..3.0f64).prop_map(|(gamma0, p)| QuantumSchedule::PowerDecay { gamma0, p }),
            (0.0..2.0f64, 0.5..50.0f64).prop_map(|(gamma0, t_end)| QuantumSchedule::LinearToZero { gamma0, t_end }),
        ]
    }

    proptest! {
        #[test]
        fn schedules_are_nonincreasing(th in any_thermal(), q in any_quantum(), mut ts in prop::collection::vec(0.0..1e4f64, 2..40)) {
            ts.sort_by(f64::total_cmp);
            for w in ts.windows(2) {
                prop_assert!(th.at(w[1]) <= th.at(w[0]));
                prop_assert!(q.value(w[1]) <= q.value(w[0]) + 1e-15);
            }
        }

        #[test]
        fn quantum_derivative_matches_central_difference(q in any_quantum(), t in 0.0..100.0f64) {
            let h = 1e-5;
            prop_assume!(q.kinks().iter().all(|k| (k - t).abs() > 10.0 * h));
            prop_assume!(t > h);
            let fd = (q.value(t + h) - q.value(t - h)) / (2.0 * h);
            prop_assert!((fd - q.at(t).1).abs() <= 1e-6);
        }
    }
}
