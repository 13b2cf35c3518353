//! Named experiment configurations. Each criterion of the acceptance suite
//! has one preset; `all` runs them in order.

use std::collections::BTreeMap;

use super::config::{
    AnnealConfig, AuxCheckConfig, AuxConfig, EnsembleConfig, ExperimentConfig, ExperimentKind, GridConfig,
    HopfieldConfig, InitialDensity, OutputConfig, StationaryConfig, SweepConfig,
};
use crate::dynamics::{SimConfig, TargetConfig};
use crate::potentials::{Factor, PotentialSpec};
use crate::schedules::{QuantumSchedule, ThermalSchedule};

pub struct PresetInfo {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn() -> ExperimentConfig,
}

impl PresetInfo {
    pub fn config(&self) -> ExperimentConfig {
        (self.build)()
    }
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "stationary-check",
        summary: "double well at T=0.4: long-run histogram vs Gibbs quadrature",
        build: stationary_check,
    },
    PresetInfo {
        name: "tilted-stationary",
        summary: "contraction auxiliary at fixed Γ=0.25: histogram vs tilted Gibbs law",
        build: tilted_stationary,
    },
    PresetInfo {
        name: "generator-check",
        summary: "finite-volume generator: null vector, column sums, h-refinement",
        build: generator_check,
    },
    PresetInfo {
        name: "flat-spectrum",
        summary: "V ≡ 0: spectral gap 2T/w and Poincaré constant 1/w",
        build: flat_spectrum,
    },
    PresetInfo {
        name: "gap-bound",
        summary: "spectral gap vs c T exp(-2M*/T) over a temperature sweep",
        build: gap_bound,
    },
    PresetInfo {
        name: "zt-tracking",
        summary: "density evolution under Γ(t)=0.5/(1+t): z_t and hit-probability bounds",
        build: zt_tracking,
    },
    PresetInfo {
        name: "joint-anneal",
        summary: "logarithmic cooling with decaying Γ on a tilted double well",
        build: joint_anneal,
    },
    PresetInfo {
        name: "hopfield-descent",
        summary: "T ≡ 0, Γ ≡ 0: energy descent on every catalog potential",
        build: hopfield_descent,
    },
    PresetInfo {
        name: "aux-properties",
        summary: "sign and contact tests of the Hessian and kinetic auxiliaries",
        build: aux_properties,
    },
    PresetInfo {
        name: "aux-benchmark",
        summary: "success fraction per auxiliary under joint annealing",
        build: aux_benchmark,
    },
    PresetInfo {
        name: "quantum-anneal",
        summary: "fixed T, decaying Γ: ensemble hit fractions vs Gibbs masses",
        build: quantum_anneal,
    },
];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    PRESETS.iter().find(|p| p.name == name).map(PresetInfo::config)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.name)
}

fn base(name: &str, kind: ExperimentKind, description: &str, potentials: Vec<PotentialSpec>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        kind,
        description: description.to_string(),
        seed: 42,
        potentials,
        aux: AuxConfig::None,
        auxes: Vec::new(),
        thermal: None,
        quantum: QuantumSchedule::Zero,
        sim: None,
        ensemble: None,
        stationary: None,
        grid: None,
        sweep: None,
        anneal: None,
        hopfield: None,
        aux_checks: None,
        targets: Vec::new(),
        tolerances: kind
            .default_tolerances()
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
        output: OutputConfig::default(),
    }
}

fn double_well() -> PotentialSpec {
    PotentialSpec::DoubleWell { a: 0.5, n: 1 }
}

fn multi_well() -> PotentialSpec {
    PotentialSpec::MultiWellCos { k: 3, amp: 0.25, n: 1 }
}

fn tilted() -> PotentialSpec {
    PotentialSpec::TiltedDoubleWell { a: 0.5, b: 0.05, n: 1 }
}

fn stationary_check() -> ExperimentConfig {
    let mut c = base(
        "stationary-check",
        ExperimentKind::StationaryCheck,
        "Empirical law of x after burn-in against the Gibbs density exp(-V/T)",
        vec![double_well()],
    );
    c.thermal = Some(ThermalSchedule::Constant { t: 0.4 });
    c.sim = Some(SimConfig::new(5_000_000));
    c.stationary = Some(StationaryConfig {
        burn_in: 100_000,
        bins: 64,
    });
    c
}

fn tilted_stationary() -> ExperimentConfig {
    let mut c = stationary_check();
    c.name = "tilted-stationary".into();
    c.description = "Empirical law at fixed Γ against exp(-(V - ΓṼ)/T)".into();
    c.aux = AuxConfig::Contraction;
    c.quantum = QuantumSchedule::Constant { gamma0: 0.25 };
    c
}

fn generator_check() -> ExperimentConfig {
    let mut c = base(
        "generator-check",
        ExperimentKind::GapSweep,
        "Null vector of the generator against the Gibbs masses; second-order residual",
        vec![double_well()],
    );
    c.aux = AuxConfig::Contraction;
    c.grid = Some(GridConfig {
        cells: 400,
        ..GridConfig::default()
    });
    c.sweep = Some(SweepConfig {
        temperatures: vec![0.4],
        gammas: vec![0.0, 0.25],
        generator_checks: true,
        flat_oracle: false,
        bound_checks: false,
    });
    c
}

fn flat_spectrum() -> ExperimentConfig {
    let mut c = base(
        "flat-spectrum",
        ExperimentKind::GapSweep,
        "Constant potential: the generator is the Legendre operator",
        vec![PotentialSpec::Constant { value: 0.0, n: 1 }],
    );
    c.grid = Some(GridConfig {
        cells: 512,
        ..GridConfig::default()
    });
    c.sweep = Some(SweepConfig {
        temperatures: vec![0.25, 0.5, 1.0],
        gammas: vec![0.0],
        generator_checks: false,
        flat_oracle: true,
        bound_checks: false,
    });
    c
}

fn gap_bound() -> ExperimentConfig {
    let mut c = base(
        "gap-bound",
        ExperimentKind::GapSweep,
        "Spectral gap against c T exp(-2M*(Γ)/T) and the Arrhenius slope",
        vec![double_well(), multi_well()],
    );
    c.aux = AuxConfig::Contraction;
    c.grid = Some(GridConfig {
        cells: 400,
        ..GridConfig::default()
    });
    c.sweep = Some(SweepConfig {
        temperatures: vec![0.2, 0.3, 0.5, 1.0],
        gammas: vec![0.0, 0.25],
        generator_checks: false,
        flat_oracle: false,
        bound_checks: true,
    });
    c
}

fn zt_tracking() -> ExperimentConfig {
    let mut c = base(
        "zt-tracking",
        ExperimentKind::ZtTrack,
        "z_t along the density path and the hit-probability bound",
        vec![double_well()],
    );
    c.aux = AuxConfig::Contraction;
    c.thermal = Some(ThermalSchedule::Constant { t: 0.4 });
    c.quantum = QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 };
    c.grid = Some(GridConfig {
        cells: 400,
        dt_ode: 0.01,
        t_end: 200.0,
        record_every: 100,
        m0: InitialDensity::Gibbs,
        ..GridConfig::default()
    });
    c.targets = vec![
        TargetConfig::Superlevel { theta: 0.05 },
        TargetConfig::Superlevel { theta: 0.2 },
    ];
    c
}

fn joint_anneal() -> ExperimentConfig {
    let mut c = base(
        "joint-anneal",
        ExperimentKind::AnnealJoint,
        "Ensemble under T(t)=T0/log2(2+t) and Γ(t)=0.5/(1+t)",
        vec![tilted()],
    );
    c.aux = AuxConfig::Contraction;
    c.thermal = Some(ThermalSchedule::Logarithmic { t0: 1.2 });
    c.quantum = QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 };
    c.sim = Some(SimConfig::new(2_000_000));
    c.ensemble = Some(EnsembleConfig {
        trajectories: 200,
        eval_times: vec![2.0, 20.0, 200.0, 2000.0],
        hist_bins: 64,
    });
    c.anneal = Some(AnnealConfig {
        ground_radius: 0.1,
        superlevel_theta: 0.2,
    });
    c
}

fn hopfield_descent() -> ExperimentConfig {
    let mut c = base(
        "hopfield-descent",
        ExperimentKind::HopfieldDescent,
        "Noise-free, Γ-free dynamics decrease V along every trajectory",
        vec![
            double_well(),
            tilted(),
            multi_well(),
            PotentialSpec::QuadraticBowl { center: None, n: 2 },
            PotentialSpec::SeparableNd {
                factors: vec![
                    Factor::DoubleWell { a: 0.5 },
                    Factor::MultiWellCos { k: 3, amp: 0.25 },
                    Factor::Quadratic { center: 0.1 },
                ],
            },
        ],
    );
    c.thermal = Some(ThermalSchedule::Constant { t: 0.0 });
    c.sim = Some(SimConfig::new(100_000));
    c.hopfield = Some(HopfieldConfig::default());
    c
}

fn aux_properties() -> ExperimentConfig {
    let mut c = base(
        "aux-properties",
        ExperimentKind::AuxBenchmark,
        "Hessian auxiliary sign at extrema; kinetic auxiliary contact at inflections",
        vec![double_well(), multi_well()],
    );
    c.aux_checks = Some(AuxCheckConfig {
        resolution: 4097,
        gamma: 0.5,
        eps: 0.1,
    });
    c
}

fn aux_benchmark() -> ExperimentConfig {
    let mut c = base(
        "aux-benchmark",
        ExperimentKind::AuxBenchmark,
        "Fraction of trajectories ending near the ground state, per auxiliary",
        vec![tilted()],
    );
    c.auxes = vec![
        AuxConfig::None,
        AuxConfig::Homotopy { v0: None },
        AuxConfig::Contraction,
        AuxConfig::HessianQuadratic { eps: None },
        AuxConfig::Kinetic1D { eps: None },
        AuxConfig::KineticNd { eps: None },
    ];
    c.thermal = Some(ThermalSchedule::Logarithmic { t0: 1.2 });
    c.quantum = QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 };
    c.sim = Some(SimConfig::new(200_000));
    c.ensemble = Some(EnsembleConfig {
        trajectories: 100,
        eval_times: vec![20.0, 200.0],
        hist_bins: 64,
    });
    c.anneal = Some(AnnealConfig::default());
    c
}

fn quantum_anneal() -> ExperimentConfig {
    let mut c = base(
        "quantum-anneal",
        ExperimentKind::AnnealQuantum,
        "Fixed T with decaying Γ: the ensemble relaxes to the untilted Gibbs law",
        vec![double_well()],
    );
    c.aux = AuxConfig::Contraction;
    c.thermal = Some(ThermalSchedule::Constant { t: 0.4 });
    c.quantum = QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 };
    c.sim = Some(SimConfig::new(200_000));
    c.ensemble = Some(EnsembleConfig {
        trajectories: 200,
        eval_times: vec![20.0, 100.0, 200.0],
        hist_bins: 64,
    });
    c.anneal = Some(AnnealConfig::default());
    c.targets = vec![TargetConfig::Superlevel { theta: 0.05 }];
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for info in PRESETS {
            let c = info.config();
            assert_eq!(c.name, info.name);
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", info.name));
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c, "{}", info.name);
            for (k, _) in c.kind.default_tolerances() {
                assert!(c.tolerances.contains_key(*k), "{}: {k}", info.name);
            }
        }
        let names: Vec<_> = preset_names().collect();
        let mut dedup = names.clone();
        dedup.dedup();
        assert_eq!(names, dedup);
        assert!(preset("nope").is_none());
    }
}
