use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::json;

use super::*;
use crate::auxiliary::AuxiliarySpec;
use crate::dynamics::TargetSet;
use crate::gibbs::{density_grid, tv_between, GibbsSpec};
use crate::potentials::catalog_make;
use crate::schedules::{QuantumSchedule, ThermalSchedule};

fn flat() -> Potential {
    catalog_make("constant", &json!({"value": 0.0})).unwrap()
}

fn dw() -> Potential {
    catalog_make("double_well", &json!({"a": 0.5})).unwrap()
}

fn catalog_1d() -> Vec<Potential> {
    vec![
        dw(),
        catalog_make("tilted_double_well", &json!({"a": 0.5, "b": 0.05})).unwrap(),
        catalog_make("multi_well_cos", &json!({})).unwrap(),
        catalog_make("quadratic_bowl", &json!({"center": [0.2]})).unwrap(),
        catalog_make("linear", &json!({"coeffs": [0.3]})).unwrap(),
        flat(),
    ]
}

fn mu_masses(p: &Potential, aux: &AuxiliarySpec, gamma: f64, t: f64, n: usize) -> Vec<f64> {
    density_grid(
        &GibbsSpec {
            potential: p.clone(),
            aux: aux.clone(),
            gamma,
            temperature: t,
        },
        n,
    )
    .unwrap()
    .masses()
}

/// Rayleigh–Ritz over mean-zero polynomials of degree ≤ 6 with exact
/// integrals on (-1, 1): minimizes ∫(1-x²)φ'²/w over 2∫φ².
fn poincare_ritz(w: f64) -> f64 {
    let mono = |m: usize| {
        if m.is_multiple_of(2) {
            2.0 / (m as f64 + 1.0)
        } else {
            0.0
        }
    };
    let deg = 6;
    let mean = |j: usize| mono(j) / 2.0;
    let mut a = DMatrix::zeros(deg, deg);
    let mut b = DMatrix::zeros(deg, deg);
    for j in 1..=deg {
        for k in 1..=deg {
            let (jf, kf) = (j as f64, k as f64);
            let d = jf * kf * (mono(j + k - 2) - mono(j + k));
            a[(j - 1, k - 1)] = d / w;
            // ∫(x^j - m_j)(x^k - m_k) = ∫x^{j+k} - 2 m_j m_k
            b[(j - 1, k - 1)] = 2.0 * (mono(j + k) - 2.0 * mean(j) * mean(k));
        }
    }
    let chol = b.cholesky().unwrap();
    let linv = chol.l().try_inverse().unwrap();
    let m = &linv * a * linv.transpose();
    let eig = SymmetricEigen::new(m);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn grid_rejects_coarse_meshes() {
    assert!(Grid1D::new(15).is_err());
    let g = Grid1D::new(16).unwrap();
    assert_eq!(g.h(), 0.125);
    assert!((g.center(0) + 0.9375).abs() < 1e-15);
    assert_eq!(g.face(16), 1.0);
}

#[test]
fn bernoulli_is_smooth_at_zero() {
    assert_eq!(bernoulli(0.0), 1.0);
    for z in [1e-9_f64, 1e-7, 1e-3, 0.5, 3.0, -3.0, 40.0] {
        let direct: f64 = z / (z.exp() - 1.0);
        assert!((bernoulli(z) - direct).abs() < 1e-7 * direct.max(1.0), "z={z}");
        assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12 * z.abs().max(1.0));
    }
    assert!(bernoulli(800.0) >= 0.0);
}

#[test]
fn flat_potential_keeps_uniform() {
    let g = Grid1D::new(128).unwrap();
    let l = build_generator(&flat(), &AuxiliarySpec::None, 0.0, 0.5, &g, 1.0).unwrap();
    let lu = l.apply(&vec![0.5; 128]);
    assert!(lu.iter().all(|v| v.abs() <= 1e-12));
}

#[test]
fn columns_sum_to_zero_and_couplings_are_positive() {
    let g = Grid1D::new(200).unwrap();
    for p in catalog_1d() {
        for t in [0.05, 0.4, 2.0] {
            let l = build_generator(&p, &AuxiliarySpec::Contraction, 0.25, t, &g, 1.0).unwrap();
            let worst = l.column_sums().iter().map(|s| s.abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-10 * l.inf_norm().max(1.0), "{} T={t}: {worst}", p.name());
            assert!(l.lower.iter().chain(&l.upper).all(|v| *v > 0.0));
        }
    }
}

#[test]
fn generator_requires_positive_temperature_and_1d() {
    let g = Grid1D::new(32).unwrap();
    assert!(build_generator(&dw(), &AuxiliarySpec::None, 0.0, 0.0, &g, 1.0).is_err());
    let p2 = catalog_make("double_well", &json!({"a": 0.5, "n": 2})).unwrap();
    assert!(matches!(
        build_generator(&p2, &AuxiliarySpec::None, 0.0, 0.4, &g, 1.0),
        Err(QdError::UnsupportedDimension { .. })
    ));
}

#[test]
fn residual_of_quadrature_gibbs_is_second_order() {
    let p = dw();
    let mut residuals = Vec::new();
    for n in [100, 200, 400] {
        let g = Grid1D::new(n).unwrap();
        let l = build_generator(&p, &AuxiliarySpec::None, 0.0, 0.4, &g, 1.0).unwrap();
        let mu = mu_masses(&p, &AuxiliarySpec::None, 0.0, 0.4, n);
        let dens: Vec<f64> = mu.iter().map(|m| m / g.h()).collect();
        residuals.push(l.apply(&dens).iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    for w in residuals.windows(2) {
        assert!(w[0] / w[1] >= 3.0, "{residuals:?}");
    }
}

#[test]
fn null_vector_matches_gibbs_for_catalog() {
    let g = Grid1D::new(400).unwrap();
    for p in catalog_1d() {
        for t in [0.2, 0.4, 1.0] {
            let l = build_generator(&p, &AuxiliarySpec::None, 0.0, t, &g, 1.0).unwrap();
            let pi: Vec<f64> = l.stationary().iter().map(|v| v * g.h()).collect();
            let tv = tv_between(&pi, &mu_masses(&p, &AuxiliarySpec::None, 0.0, t, 400)).unwrap();
            assert!(tv <= 0.01, "{} T={t}: {tv}", p.name());
            let res = l.apply(&l.stationary()).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(res <= 1e-9 * l.inf_norm(), "{} T={t}: {res}", p.name());
        }
    }
}

#[test]
fn legendre_gap() {
    let g = Grid1D::new(512).unwrap();
    for (t, w) in [(0.5, 1.0), (0.25, 1.0), (1.0, 1.0), (0.5, 2.0)] {
        let l = build_generator(&flat(), &AuxiliarySpec::None, 0.0, t, &g, w).unwrap();
        let s = spectral_gap(&l).unwrap();
        let oracle = 2.0 * t / w;
        assert!((s.gap - oracle).abs() <= 0.02 * oracle, "T={t} w={w}: {}", s.gap);
        assert!(s.zero_eigenvalue < 1e-8 * s.spectral_radius);
    }
}

#[test]
fn legendre_higher_modes() {
    // eigenvalues k(k+1) T / w for small k
    let g = Grid1D::new(256).unwrap();
    let l = build_generator(&flat(), &AuxiliarySpec::None, 0.0, 1.0, &g, 1.0).unwrap();
    let (d, off) = l.symmetrized();
    let n = d.len();
    let m = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => d[i],
        1 => off[i.min(j)],
        _ => 0.0,
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|v| -v).collect();
    ev.sort_by(f64::total_cmp);
    for k in 1..5 {
        let exact = (k * (k + 1)) as f64;
        assert!((ev[k] - exact).abs() < 0.01 * exact, "k={k}: {}", ev[k]);
    }
}

#[test]
fn dense_and_symmetric_gaps_agree() {
    let g = Grid1D::new(200).unwrap();
    let l = build_generator(&dw(), &AuxiliarySpec::Contraction, 0.25, 0.3, &g, 1.0).unwrap();
    let a = spectral_gap(&l).unwrap();
    let b = spectral_gap_symmetric(&l).unwrap();
    assert!((a.gap - b.gap).abs() <= 1e-6 * b.gap, "{} vs {}", a.gap, b.gap);
}

#[test]
fn poincare_constant_matches_ritz_oracle() {
    let oracle = poincare_ritz(1.0);
    assert!((oracle - 1.0).abs() < 1e-10, "{oracle}");
    let g = Grid1D::new(512).unwrap();
    let c1 = poincare_c(&g, 1.0).unwrap();
    assert!((c1 - oracle).abs() <= 0.02 * oracle, "{c1}");
    let c2 = poincare_c(&g, 2.0).unwrap();
    assert!((c2 / c1 - 0.5).abs() < 1e-6);
    assert!((c2 - poincare_ritz(2.0)).abs() <= 0.02 * c2);
    assert!(c1 > 0.0);
    // cached value is returned unchanged
    assert_eq!(poincare_c(&g, 1.0).unwrap(), c1);
}

#[test]
fn rayleigh_ratios_bound_the_gap() {
    let g = Grid1D::new(200).unwrap();
    let l = build_generator(&dw(), &AuxiliarySpec::None, 0.0, 0.3, &g, 1.0).unwrap();
    let gap = spectral_gap(&l).unwrap().gap;
    let xs = g.centers();
    let trials: Vec<Vec<f64>> = vec![
        xs.clone(),
        xs.iter().map(|x| x * x * x).collect(),
        xs.iter().map(|x| x.signum() * x.abs().sqrt()).collect(),
        xs.iter().map(|x| (3.0 * x).tanh()).collect(),
        xs.iter().map(|x| (2.0 * x).sin() + 0.3 * x * x).collect(),
    ];
    for phi in trials {
        let r = rayleigh_ratio(&l, &phi).unwrap();
        assert!(r >= gap * (1.0 - 0.05), "ratio {r} below gap {gap}");
    }
    assert!(rayleigh_ratio(&l, &vec![1.0; 200]).is_err());
}

#[test]
fn flat_sweep_passes_and_is_linear() {
    let g = Grid1D::new(128).unwrap();
    let s = gap_bound_sweep(
        &flat(),
        &AuxiliarySpec::None,
        0.0,
        &[0.25, 0.5, 1.0],
        &g,
        1.0,
        257,
        None,
    )
    .unwrap();
    for r in &s.reports {
        assert!(r.pass);
        assert!((r.gap / r.bound - 2.0).abs() < 0.02, "{r:?}");
    }
}

#[test]
fn double_well_gap_decreases_with_temperature() {
    let g = Grid1D::new(200).unwrap();
    let temps = [1.0, 0.5, 0.3, 0.2];
    let s = gap_bound_sweep(&dw(), &AuxiliarySpec::None, 0.0, &temps, &g, 1.0, 4097, None).unwrap();
    assert!(s.all_pass, "{s:?}");
    assert!(s.reports.windows(2).all(|w| w[1].gap < w[0].gap));
    let json = serde_json::to_string(&s).unwrap();
    let back: GapSweep = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

#[test]
fn b_function_flags_nonpositive_denominators() {
    assert_eq!(b_function(0.1, 1.0, 0.4, 0.0, 0.1), Some(1.0));
    let b = b_function(0.1, 1.0, 0.5, -0.1, 0.0).unwrap();
    assert!((b - 1.0 / 0.98).abs() < 1e-12);
    assert_eq!(b_function(1.0, 1.0, 0.1, -1.0, 1.0), None);
}

fn fp(p: Potential, aux: AuxiliarySpec, n: usize) -> FokkerPlanck {
    FokkerPlanck::new(p, aux, Grid1D::new(n).unwrap(), 1.0).unwrap()
}

#[test]
fn stationary_start_stays_put() {
    let prob = fp(dw(), AuxiliarySpec::Contraction, 200);
    let l = prob.generator(0.25, 0.4).unwrap();
    let m0 = l.stationary();
    let cfg = EvolveConfig {
        t_end: 5.0,
        dt: 0.01,
        record_every: 50,
        refresh_every: 1,
    };
    let path = evolve_density(
        &prob,
        &ThermalSchedule::Constant { t: 0.4 },
        &QuantumSchedule::Constant { gamma0: 0.25 },
        &m0,
        &cfg,
    )
    .unwrap();
    let h = prob.grid.h();
    for d in &path.densities {
        let tv = 0.5 * d.iter().zip(&m0).map(|(a, b)| (a - b).abs() * h).sum::<f64>();
        assert!(tv <= 1e-8, "{tv}");
        assert!((d.iter().sum::<f64>() * h - 1.0).abs() <= 1e-9);
    }
    assert!(path.max_mass_drift <= 1e-10);
}

#[test]
fn uniform_start_relaxes_monotonically() {
    let prob = fp(dw(), AuxiliarySpec::None, 200);
    let l = prob.generator(0.0, 0.4).unwrap();
    let gap = spectral_gap(&l).unwrap().gap;
    let pi = l.stationary();
    let cfg = EvolveConfig {
        t_end: 50.0 / gap,
        dt: 0.01,
        record_every: 20,
        refresh_every: 1,
    };
    let path = evolve_density(
        &prob,
        &ThermalSchedule::Constant { t: 0.4 },
        &QuantumSchedule::Zero,
        &vec![0.5; 200],
        &cfg,
    )
    .unwrap();
    let h = prob.grid.h();
    let tvs: Vec<f64> = path
        .densities
        .iter()
        .map(|d| 0.5 * d.iter().zip(&pi).map(|(a, b)| (a - b).abs() * h).sum::<f64>())
        .collect();
    assert!(tvs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(*tvs.last().unwrap() <= 1e-4, "{:?}", tvs.last());
}

#[test]
fn evolve_validates_inputs() {
    let prob = fp(dw(), AuxiliarySpec::None, 32);
    let th = ThermalSchedule::Constant { t: 0.4 };
    let cfg = EvolveConfig::new(1.0);
    assert!(evolve_density(&prob, &th, &QuantumSchedule::Zero, &vec![1.0; 32], &cfg).is_err());
    assert!(evolve_density(&prob, &th, &QuantumSchedule::Zero, &vec![0.5; 31], &cfg).is_err());
    let mut neg = vec![0.5; 32];
    neg[0] = -0.1;
    neg[1] = 0.6;
    assert!(evolve_density(&prob, &th, &QuantumSchedule::Zero, &neg, &cfg).is_err());
    let zero_t = ThermalSchedule::Constant { t: 0.0 };
    assert!(evolve_density(&prob, &zero_t, &QuantumSchedule::Zero, &vec![0.5; 32], &cfg).is_err());
}

#[test]
fn z_is_one_at_gibbs_and_bounded_below() {
    let prob = fp(dw(), AuxiliarySpec::Contraction, 100);
    let th = ThermalSchedule::Constant { t: 0.4 };
    let q = QuantumSchedule::Constant { gamma0: 0.25 };
    let m0 = prob.gibbs(0.25, 0.4).unwrap().density;
    let path = DensityPath {
        dim: 1,
        h: prob.grid.h(),
        times: vec![0.0, 1.0],
        temperatures: vec![0.4; 2],
        gammas: vec![0.25; 2],
        densities: vec![m0.clone(), vec![0.5; 100]],
        max_mass_drift: 0.0,
        steps: 0,
    };
    let tr = z_trace(&prob, &path, &th, &q, 1.0).unwrap();
    assert!((tr.z[0] - 1.0).abs() < 1e-12);
    assert!(tr.z[1] > 1.0);
    assert_eq!(tr.max_z, tr.z[1]);
    assert_eq!(tr.k, tr.z[1].sqrt());
}

#[test]
fn decaying_gamma_drives_z_to_one() {
    let prob = fp(dw(), AuxiliarySpec::Contraction, 200);
    let th = ThermalSchedule::Constant { t: 0.4 };
    let q = QuantumSchedule::PowerDecay { gamma0: 0.5, p: 1.0 };
    let m0 = prob.gibbs(0.5, 0.4).unwrap().density;
    let cfg = EvolveConfig {
        t_end: 200.0,
        dt: 0.01,
        record_every: 500,
        refresh_every: 1,
    };
    let path = evolve_density(&prob, &th, &q, &m0, &cfg).unwrap();
    let c = poincare_c(&prob.grid, 1.0).unwrap();
    let tr = z_trace(&prob, &path, &th, &q, c).unwrap();
    assert!(tr.min_z >= 1.0 - 1e-8);
    assert!(tr.k.is_finite());
    assert!(*tr.z.last().unwrap() <= 1.0 + 1e-3, "{:?}", tr.z.last());
    assert_eq!(tr.underflow_cells, 0);

    let targets = [
        TargetSet::superlevel(&prob.potential, 0.05, 4097).unwrap(),
        TargetSet::superlevel(&prob.potential, 0.2, 4097).unwrap(),
    ];
    let rows = hit_bound(&prob, &path, &tr, &th, &q, &targets).unwrap();
    assert_eq!(rows.len(), 2 * path.times.len());
    assert!(rows
        .iter()
        .all(|r| r.pass && r.bound <= tr.k * r.gibbs_mass.sqrt() * (1.0 + 1e-12)));
    let back: ZtTrace = serde_json::from_str(&serde_json::to_string(&tr).unwrap()).unwrap();
    assert_eq!(back, tr);
}

#[test]
fn density_path_csv_layout() {
    let path = DensityPath {
        dim: 1,
        h: 1.0,
        times: vec![0.0],
        temperatures: vec![1.0],
        gammas: vec![0.0],
        densities: vec![vec![0.25, 0.75]],
        max_mass_drift: 0.0,
        steps: 0,
    };
    let mut buf = Vec::new();
    path.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "t,m1,m2\n0,0.25,0.75\n");
}

#[test]
fn two_dimensional_relaxation() {
    let p = catalog_make("double_well", &json!({"a": 0.5, "n": 2})).unwrap();
    let prob = Grid2DProblem::new(p.clone(), AuxiliarySpec::None, 40, 1.0).unwrap();
    let n = 40;
    let m0 = vec![0.25; n * n];
    let cfg = EvolveConfig {
        t_end: 30.0,
        dt: 0.02,
        record_every: 250,
        refresh_every: 1,
    };
    let path = evolve_density_2d(
        &prob,
        &ThermalSchedule::Constant { t: 0.4 },
        &QuantumSchedule::Zero,
        &m0,
        &cfg,
    )
    .unwrap();
    let mu = density_grid(&GibbsSpec::plain(p, 0.4), n).unwrap().masses();
    let tvs: Vec<f64> = (0..path.times.len())
        .map(|k| tv_between(&path.masses(k), &mu).unwrap())
        .collect();
    assert!(tvs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{tvs:?}");
    assert!(*tvs.last().unwrap() < 0.01, "{tvs:?}");
    assert!(path.max_mass_drift < 1e-9);
    assert!(Grid2DProblem::new(dw(), AuxiliarySpec::None, 40, 1.0).is_err());
}
