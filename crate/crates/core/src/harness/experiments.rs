use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, InitialDensity};
use super::report::{num, ExperimentReport, Metric, Table};
use crate::auxiliary::{aux_range, contact_property, sign_property, AuxiliarySpec};
use crate::dynamics::{
    descent_slack_constant, run_ensemble, DiffusionNetwork, EnsembleReport, InitialCondition, SimConfig, TargetConfig,
    TargetSet,
};
use crate::error::{QdError, Result, StageContext};
use crate::fpgrid::{
    build_generator, evolve_density, gap_bound_sweep, hit_bound, poincare_c, z_trace, EvolveConfig, FokkerPlanck,
    Grid1D,
};
use crate::gibbs::{density_grid, gibbs_mass, tv_distance, DensityGrid, GibbsSpec};
use crate::potentials::{potential_range, Potential};
use crate::schedules::{validate_joint, QuantumSchedule, ThermalSchedule};

/// Cells per axis for Gibbs masses of ensemble targets.
fn ceiling_resolution(dim: usize) -> Option<usize> {
    match dim {
        1 => Some(4096),
        2 => Some(256),
        3 => Some(48),
        _ => None,
    }
}

/// Points per axis for `M` and `M̃` (sampled above three dimensions).
fn range_resolution(dim: usize) -> usize {
    match dim {
        1 => 4097,
        2 => 257,
        _ => 33,
    }
}

/// File-name-safe form of a potential label.
fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    report: ExperimentReport,
}

impl Run<'_> {
    fn tol(&self, key: &str) -> Result<f64> {
        self.cfg.tolerance(key)
    }

    fn push(&mut self, m: Metric) {
        self.report.push(m);
    }

    fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value)?;
        if let Value::Object(map) = &mut self.report.details {
            map.insert(key.to_string(), v);
        }
        Ok(())
    }

    fn note(&mut self, text: impl Into<String>) {
        self.report.notes.push(text.into());
    }

    /// Writes `<name>.<suffix>` into the output directory when artifacts are on.
    fn artifact(&mut self, suffix: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        if !self.cfg.output.artifacts {
            return Ok(());
        }
        let file = format!("{}.{suffix}", self.cfg.name);
        let mut buf = Vec::new();
        write(&mut buf)?;
        let path = self.dir.join(&file);
        fs::write(&path, &buf).map_err(|e| QdError::io(&path, e))?;
        self.report.artifacts.push(file);
        Ok(())
    }

    fn json_artifact(&mut self, suffix: &str, value: &impl Serialize) -> Result<()> {
        self.artifact(suffix, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn sim(&self) -> Result<SimConfig> {
        let mut sim = self.cfg.sim.clone().ok_or_else(|| QdError::config("sim: missing"))?;
        sim.seed = self.cfg.seed;
        Ok(sim)
    }

    fn gain(&self) -> f64 {
        self.cfg.sim.as_ref().map_or(1.0, |s| s.gain)
    }

    fn thermal(&self) -> Result<ThermalSchedule> {
        self.cfg.thermal.ok_or_else(|| QdError::config("thermal: missing"))
    }

    fn constant_temperature(&self) -> Result<f64> {
        match self.cfg.thermal {
            Some(ThermalSchedule::Constant { t }) if t > 0.0 => Ok(t),
            _ => Err(QdError::config("thermal: a constant T > 0 is required")),
        }
    }
}

/// Validates `cfg`, runs it, writes its artifacts into `cfg.output.dir` and
/// returns the report. Report files themselves are written by
/// [`super::emit_report`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cfg = cfg.clone().with_default_tolerances();
    let dir = cfg.output.dir.clone();
    if cfg.output.artifacts {
        fs::create_dir_all(&dir).map_err(|e| QdError::io(&dir, e))?;
    }
    let start = Instant::now();
    let mut run = Run {
        cfg: &cfg,
        dir: &dir,
        report: ExperimentReport::new(&cfg),
    };
    match cfg.kind {
        ExperimentKind::StationaryCheck => stationary_check(&mut run),
        ExperimentKind::GapSweep => gap_sweep(&mut run),
        ExperimentKind::ZtTrack => zt_track(&mut run),
        ExperimentKind::AnnealJoint => anneal(&mut run, true),
        ExperimentKind::AnnealQuantum => anneal(&mut run, false),
        ExperimentKind::AuxBenchmark => aux_benchmark(&mut run),
        ExperimentKind::HopfieldDescent => hopfield_descent(&mut run),
    }
    .stage(|| format!("experiment {} ({})", cfg.name, cfg.kind.as_str()))?;
    let mut report = run.report;
    report.finish();
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn stationary_check(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let temperature = run.constant_temperature()?;
    let thermal = run.thermal()?;
    let st = cfg
        .stationary
        .clone()
        .ok_or_else(|| QdError::config("stationary: missing"))?;
    let sim = run.sim()?;
    let tol = run.tol("tv")?;
    let gamma = cfg.quantum.value(0.0);
    let mut per = serde_json::Map::new();
    for p in cfg.build_potentials()? {
        let aux = cfg.aux.resolve(&p)?;
        let net = DiffusionNetwork::new(p.clone(), aux.clone(), thermal, cfg.quantum, sim.gain)?;
        let hist = net
            .stationary_histogram(&sim, st.burn_in, st.bins)
            .stage(|| format!("stationary run on {}", p.name()))?;
        let refine = match p.dim() {
            1 => 16,
            2 => 4,
            _ => 1,
        };
        let spec = GibbsSpec {
            potential: p.clone(),
            aux,
            gamma,
            temperature,
        };
        let gibbs = density_grid(&spec, st.bins * refine)
            .and_then(|g| g.coarsen(refine))
            .stage(|| format!("Gibbs quadrature for {}", p.name()))?;
        let tv = tv_distance(&hist, &gibbs)?;
        run.push(Metric::at_most(format!("tv[{}]", p.name()), tv, tol, "tv"));
        per.insert(
            p.name().to_string(),
            json!({ "tv": num(tv), "samples": hist.total, "temperature": temperature, "gamma": gamma }),
        );
        let empirical = hist.probabilities();
        let masses = gibbs.masses();
        run.artifact(&format!("{}.histogram.csv", slug(p.name())), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let mut header: Vec<String> = (1..=gibbs.dim).map(|k| format!("x{k}")).collect();
            header.extend(["empirical".to_string(), "gibbs".to_string()]);
            w.write_record(&header)?;
            for (flat, (e, g)) in empirical.iter().zip(&masses).enumerate() {
                let mut row: Vec<String> = gibbs.cell_center(flat).iter().map(f64::to_string).collect();
                row.push(e.to_string());
                row.push(g.to_string());
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| QdError::io("<csv>", e))
        })?;
    }
    run.detail("potentials", per)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// `‖L μ‖∞` with `μ` the quadrature Gibbs density on the same cells.
pub fn quadrature_residual(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    temperature: f64,
    cells: usize,
    gain: f64,
) -> Result<f64> {
    let grid = Grid1D::new(cells)?;
    let l = build_generator(p, aux, gamma, temperature, &grid, gain)?;
    let mu = density_grid(
        &GibbsSpec {
            potential: p.clone(),
            aux: aux.clone(),
            gamma,
            temperature,
        },
        cells,
    )?;
    Ok(max_abs(&l.apply(&mu.density)))
}

fn gap_sweep(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let sw = cfg.sweep.clone().ok_or_else(|| QdError::config("sweep: missing"))?;
    let gc = cfg.grid.clone().unwrap_or_default();
    let grid = Grid1D::new(gc.cells)?;
    let gain = run.gain();
    let factor = run.tol("gap_bound_factor")?;
    let margin = run.tol("slope_margin")?;
    let schedule = (!matches!(cfg.quantum, QuantumSchedule::Zero)).then_some(&cfg.quantum);
    let mut table = Table::new(&[
        "potential",
        "aux",
        "gamma",
        "T",
        "gap",
        "bound",
        "bound_ratio",
        "c",
        "m_star",
        "stationary_tv",
        "pass",
    ]);
    let mut sweeps = Vec::new();
    for p in cfg.build_potentials()? {
        let aux = cfg.aux.resolve(&p)?;
        for &g in &sw.gammas {
            let tag = format!("{} Γ={g}", p.name());
            let s = gap_bound_sweep(
                &p,
                &aux,
                g,
                &sw.temperatures,
                &grid,
                gain,
                gc.range_resolution,
                schedule,
            )
            .stage(|| format!("gap sweep on {tag}"))?;
            for r in &s.reports {
                let floor = factor * r.bound;
                if sw.bound_checks {
                    run.push(Metric::at_least(
                        format!("gap[{tag} T={}]", r.temperature),
                        r.gap,
                        floor,
                        "gap_bound_factor",
                    ));
                }
                if sw.generator_checks {
                    let tol = run.tol("stationary_tv")?;
                    run.push(Metric::at_most(
                        format!("stationary_tv[{tag} T={}]", r.temperature),
                        r.stationary_tv,
                        tol,
                        "stationary_tv",
                    ));
                }
                table.push(vec![
                    Value::String(p.name().to_string()),
                    Value::String(aux.kind().to_string()),
                    num(g),
                    num(r.temperature),
                    num(r.gap),
                    num(r.bound),
                    num(r.bound_ratio),
                    num(r.c),
                    num(r.m_star),
                    num(r.stationary_tv),
                    Value::Bool(r.gap >= floor),
                ]);
            }
            if sw.bound_checks {
                if let (Some(slope), Some(first)) = (s.arrhenius_slope, s.reports.first()) {
                    run.push(Metric::at_least(
                        format!("arrhenius_slope[{tag}]"),
                        slope,
                        -2.0 * first.m_star * (1.0 + margin),
                        "slope_margin",
                    ));
                }
            }
            if sw.generator_checks {
                let col_tol = run.tol("column_sum")?;
                let ratio_tol = run.tol("refinement_ratio")?;
                for &t in &sw.temperatures {
                    let l = build_generator(&p, &aux, g, t, &grid, gain)?;
                    run.push(Metric::at_most(
                        format!("column_sum[{tag} T={t}]"),
                        max_abs(&l.column_sums()),
                        col_tol,
                        "column_sum",
                    ));
                    let coarse = quadrature_residual(&p, &aux, g, t, gc.cells / 2, gain)?;
                    let fine = quadrature_residual(&p, &aux, g, t, gc.cells, gain)?;
                    run.push(Metric::at_least(
                        format!("refinement_ratio[{tag} T={t}]"),
                        coarse / fine,
                        ratio_tol,
                        "refinement_ratio",
                    ));
                }
            }
            if sw.flat_oracle {
                let tol = run.tol("oracle_rel")?;
                for r in &s.reports {
                    let oracle = 2.0 * r.temperature / gain;
                    run.push(Metric::at_most(
                        format!("flat_gap_rel[{tag} T={}]", r.temperature),
                        (r.gap - oracle).abs() / oracle,
                        tol,
                        "oracle_rel",
                    ));
                }
            }
            sweeps.push(s);
        }
    }
    if sw.flat_oracle {
        let tol = run.tol("oracle_rel")?;
        let c = poincare_c(&grid, gain)?;
        let oracle = 1.0 / gain;
        run.push(Metric::at_most(
            "poincare_c_rel",
            (c - oracle).abs() / oracle,
            tol,
            "oracle_rel",
        ));
        run.detail("poincare_c", json!({ "measured": c, "oracle": oracle }))?;
    }
    run.json_artifact("gap.json", &sweeps)?;
    run.detail("sweeps", &sweeps)?;
    run.report.table = Some(table);
    Ok(())
}

fn zt_track(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let temperature = run.constant_temperature()?;
    let thermal = run.thermal()?;
    let gc = cfg.grid.clone().ok_or_else(|| QdError::config("grid: missing"))?;
    let gain = run.gain();
    let (z_floor, z_final_tol, z_cap, drift_tol, slack) = (
        run.tol("z_floor")?,
        run.tol("z_final")?,
        run.tol("z_sup_cap")?,
        run.tol("mass_drift")?,
        run.tol("hit_bound_slack")?,
    );
    let mut per = serde_json::Map::new();
    for p in cfg.build_potentials()? {
        let aux = cfg.aux.resolve(&p)?;
        let name = p.name().to_string();
        let fp = FokkerPlanck::new(p.clone(), aux, Grid1D::new(gc.cells)?, gain)?;
        let gamma0 = cfg.quantum.value(0.0);
        let m0 = match gc.m0 {
            InitialDensity::Gibbs => fp.gibbs(gamma0, temperature)?.density,
            InitialDensity::Stationary => fp.generator(gamma0, temperature)?.stationary(),
            InitialDensity::Uniform => vec![0.5; gc.cells],
        };
        let ecfg = EvolveConfig {
            t_end: gc.t_end,
            dt: gc.dt_ode,
            record_every: gc.record_every,
            refresh_every: 1,
        };
        let path =
            evolve_density(&fp, &thermal, &cfg.quantum, &m0, &ecfg).stage(|| format!("density evolution on {name}"))?;
        let c = poincare_c(&fp.grid, gain)?;
        let trace = z_trace(&fp, &path, &thermal, &cfg.quantum, c).stage(|| format!("z_t trace on {name}"))?;
        let z_last = *trace.z.last().expect("trace holds t = 0");
        run.push(Metric::at_least(
            format!("z_min[{name}]"),
            trace.min_z,
            1.0 - z_floor,
            "z_floor",
        ));
        run.push(Metric::at_most(
            format!("z_sup[{name}]"),
            trace.max_z,
            z_cap,
            "z_sup_cap",
        ));
        run.push(Metric::at_most(
            format!("z_final_excess[{name}]"),
            z_last - 1.0,
            z_final_tol,
            "z_final",
        ));
        run.push(Metric::at_most(
            format!("mass_drift[{name}]"),
            path.max_mass_drift,
            drift_tol,
            "mass_drift",
        ));

        let targets: Vec<TargetSet> = cfg.targets.iter().map(|t| t.resolve(&p)).collect::<Result<_>>()?;
        let rows = hit_bound(&fp, &path, &trace, &thermal, &cfg.quantum, &targets)?;
        for (s, tc) in targets.iter().zip(&cfg.targets) {
            let label = s.label();
            let worst = rows
                .iter()
                .filter(|r| r.target == label)
                .map(|r| r.mass - r.bound)
                .fold(f64::NEG_INFINITY, f64::max);
            run.push(Metric::at_most(
                format!("hit_bound_excess[{name} {}]", target_tag(tc)),
                worst,
                slack,
                "hit_bound_slack",
            ));
        }

        let b_nonpositive = trace.b_nonpositive.iter().filter(|b| **b).count();
        if b_nonpositive > 0 {
            run.note(format!(
                "{name}: B(t) denominator non-positive at {b_nonpositive} of {} recorded times",
                trace.times.len()
            ));
        }
        per.insert(
            name.clone(),
            json!({
                "K": num(trace.k),
                "z_min": num(trace.min_z),
                "z_max": num(trace.max_z),
                "z_final": num(z_last),
                "c": num(c),
                "m_tilde": num(trace.m_tilde),
                "b_nonpositive": b_nonpositive,
                "underflow_cells": trace.underflow_cells,
                "mass_drift": num(path.max_mass_drift),
                "steps": path.steps,
            }),
        );
        let stem = slug(&name);
        run.json_artifact(&format!("{stem}.zt.json"), &trace)?;
        run.artifact(&format!("{stem}.density.csv"), |buf| path.write_csv(buf))?;
        run.artifact(&format!("{stem}.hit_bound.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| QdError::io("<csv>", e))
        })?;
    }
    run.detail("potentials", per)
}

fn target_tag(t: &TargetConfig) -> String {
    match t {
        TargetConfig::Whole => "whole".into(),
        TargetConfig::Superlevel { theta } => format!("superlevel θ={theta}"),
        TargetConfig::Ball { center, radius } => format!("ball {center:?} r={radius}"),
        TargetConfig::GroundState { radius } => format!("ground r={radius}"),
        TargetConfig::Union { sets } => format!("union of {}", sets.len()),
    }
}

/// Gibbs masses of `targets` at `(T, Γ)`, when the dimension allows a grid.
fn gibbs_masses(
    p: &Potential,
    aux: &AuxiliarySpec,
    gamma: f64,
    temperature: f64,
    targets: &[TargetSet],
) -> Result<Option<Vec<f64>>> {
    let Some(res) = ceiling_resolution(p.dim()) else {
        return Ok(None);
    };
    if !(temperature > 0.0) {
        return Ok(None);
    }
    let grid: DensityGrid = density_grid(
        &GibbsSpec {
            potential: p.clone(),
            aux: aux.clone(),
            gamma,
            temperature,
        },
        res,
    )?;
    Ok(Some(targets.iter().map(|s| gibbs_mass(&grid, s)).collect()))
}

fn ensemble_artifact(run: &mut Run, suffix: &str, report: &EnsembleReport) -> Result<()> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), serde_json::to_value(run.cfg)?);
    }
    run.json_artifact(suffix, &v)
}

fn failure_metric(run: &mut Run, tag: &str, report: &EnsembleReport) -> Result<()> {
    let tol = run.tol("max_failure_fraction")?;
    run.push(Metric::at_most(
        format!("failure_fraction[{tag}]"),
        report.failures as f64 / report.trajectories as f64,
        tol,
        "max_failure_fraction",
    ));
    for msg in report.failure_messages.iter().take(3) {
        run.note(format!("{tag}: {msg}"));
    }
    Ok(())
}

fn ensemble_table(report: &EnsembleReport) -> Table {
    let mut cols: Vec<String> = vec!["t".into(), "meanV".into(), "minV".into()];
    cols.extend(report.targets.iter().cloned());
    let mut t = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for (k, time) in report.times.iter().enumerate() {
        let mut row = vec![num(*time), num(report.mean_v[k]), num(report.min_v[k])];
        row.extend(report.hit_fractions.iter().map(|h| num(h[k])));
        t.push(row);
    }
    t
}

fn anneal(run: &mut Run, joint: bool) -> Result<()> {
    let cfg = run.cfg;
    let thermal = run.thermal()?;
    let sim = run.sim()?;
    let ens = cfg
        .ensemble
        .clone()
        .ok_or_else(|| QdError::config("ensemble: missing"))?;
    let an = cfg.anneal.clone().unwrap_or_default();
    let mut per = serde_json::Map::new();
    for p in cfg.build_potentials()? {
        let name = p.name().to_string();
        let aux = cfg.aux.resolve(&p)?;
        let net = DiffusionNetwork::new(p.clone(), aux.clone(), thermal, cfg.quantum, sim.gain)?;
        let mut targets = vec![TargetSet::ground_states(&p, an.ground_radius)?];
        if joint {
            targets.push(
                TargetConfig::Superlevel {
                    theta: an.superlevel_theta,
                }
                .resolve(&p)?,
            );
        }
        for t in &cfg.targets {
            targets.push(t.resolve(&p)?);
        }
        let report = run_ensemble(&net, &sim, ens.trajectories, &targets, &ens.eval_times, ens.hist_bins)
            .stage(|| format!("ensemble on {name}"))?;
        let last = report.times.len() - 1;
        let ground_final = report.hit_fractions[0][last];
        let horizon = report.times[last];
        let (t_end, g_end) = (thermal.at(horizon), cfg.quantum.value(horizon));
        let ceiling = gibbs_masses(&p, &aux, g_end, t_end, &targets)?;

        let mut info = serde_json::Map::new();
        info.insert("ground_fraction".into(), num(ground_final));
        info.insert("horizon".into(), num(horizon));
        info.insert("T_horizon".into(), num(t_end));
        info.insert("gamma_horizon".into(), num(g_end));
        if let Some(c) = &ceiling {
            info.insert("gibbs_ground_mass_horizon".into(), num(c[0]));
        }

        if joint {
            let tol = run.tol("ground_fraction")?;
            run.push(Metric::at_least(
                format!("ground_fraction[{name}]"),
                ground_final,
                tol,
                "ground_fraction",
            ));
            let sl = &report.hit_fractions[1];
            let from = sl.len().saturating_sub(3);
            let rise = sl[from..]
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            let rise = if rise.is_finite() { rise } else { 0.0 };
            let slack = run.tol("monotone_slack")?;
            run.push(Metric::at_most(
                format!("superlevel_rise[{name} θ={}]", an.superlevel_theta),
                rise,
                slack,
                "monotone_slack",
            ));
            let res = range_resolution(p.dim());
            let m = potential_range(&p, res)?.range;
            let m_tilde = if aux.is_none() {
                0.0
            } else {
                aux_range(&aux, &p, res)?.range
            };
            let jr = validate_joint(&thermal, &cfg.quantum, m, m_tilde, horizon);
            for w in &jr.warnings {
                run.note(format!("{name}: {w}"));
            }
            if let Some(c) = &ceiling {
                if c[0] < tol {
                    run.note(format!(
                        "{name}: the Gibbs mass of the ground target at the horizon (T={t_end:.4}) is {:.4}, below the required fraction {tol}",
                        c[0]
                    ));
                }
            }
            info.insert("joint".into(), serde_json::to_value(&jr)?);
        } else {
            let tol = run.tol("gibbs_gap")?;
            match &ceiling {
                Some(c) => {
                    for (k, label) in report.targets.iter().enumerate() {
                        run.push(Metric::at_most(
                            format!("gibbs_gap[{name} {label}]"),
                            (report.hit_fractions[k][last] - c[k]).abs(),
                            tol,
                            "gibbs_gap",
                        ));
                    }
                    info.insert("gibbs_masses".into(), serde_json::to_value(c)?);
                }
                None => run.note(format!("{name}: no Gibbs grid in dimension {}", p.dim())),
            }
        }
        failure_metric(run, &name, &report)?;
        ensemble_artifact(run, &format!("{}.ensemble.json", slug(&name)), &report)?;
        run.report.table = Some(ensemble_table(&report));
        per.insert(name, Value::Object(info));
    }
    run.detail("potentials", per)
}

fn aux_benchmark(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let potentials = cfg.build_potentials()?;
    if let Some(ac) = cfg.aux_checks.clone() {
        let sign_tol = run.tol("sign_violations")?;
        let contact_tol = run.tol("contact_violations")?;
        let mut checks = serde_json::Map::new();
        for p in &potentials {
            let name = p.name();
            let sign = sign_property(&AuxiliarySpec::HessianQuadratic { eps: vec![ac.eps] }, p, ac.resolution)
                .stage(|| format!("sign test on {name}"))?;
            let contact =
                contact_property(ac.eps, p, ac.gamma, ac.resolution).stage(|| format!("contact test on {name}"))?;
            // An empty check counts as one violation.
            let sign_bad = if sign.extrema.is_empty() {
                1
            } else {
                sign.extrema.iter().filter(|e| !e.ok).count()
            };
            let contact_bad = if contact.points.is_empty() {
                1
            } else {
                contact.points.iter().filter(|c| !c.ok).count()
            };
            run.push(Metric::at_most(
                format!("sign_violations[{name}]"),
                sign_bad as f64,
                sign_tol,
                "sign_violations",
            ));
            run.push(Metric::at_most(
                format!("contact_violations[{name}]"),
                contact_bad as f64,
                contact_tol,
                "contact_violations",
            ));
            checks.insert(name.to_string(), json!({ "sign": sign, "contact": contact }));
        }
        run.json_artifact("aux_checks.json", &checks)?;
        run.detail("aux_checks", checks)?;
    }
    if let Some(ens) = cfg.ensemble.clone() {
        let thermal = run.thermal()?;
        let sim = run.sim()?;
        let an = cfg.anneal.clone().unwrap_or_default();
        let mut table = Table::new(&[
            "potential",
            "aux",
            "success_fraction",
            "mean_v_final",
            "min_v_final",
            "trajectories",
            "failures",
        ]);
        for p in &potentials {
            let ground = TargetSet::ground_states(p, an.ground_radius)?;
            for a in &cfg.auxes {
                let aux = a.resolve(p)?;
                let tag = format!("{} {}", p.name(), a.label());
                let net = DiffusionNetwork::new(p.clone(), aux, thermal, cfg.quantum, sim.gain)?;
                let report = run_ensemble(
                    &net,
                    &sim,
                    ens.trajectories,
                    std::slice::from_ref(&ground),
                    &ens.eval_times,
                    ens.hist_bins,
                )
                .stage(|| format!("ensemble on {tag}"))?;
                let last = report.times.len() - 1;
                table.push(vec![
                    Value::String(p.name().to_string()),
                    Value::String(a.label().to_string()),
                    num(report.hit_fractions[0][last]),
                    num(report.mean_v[last]),
                    num(report.min_v[last]),
                    json!(report.trajectories),
                    json!(report.failures),
                ]);
                failure_metric(run, &tag, &report)?;
                ensemble_artifact(run, &format!("{}.{}.ensemble.json", slug(p.name()), a.label()), &report)?;
            }
        }
        run.report.table = Some(table);
    }
    Ok(())
}

fn hopfield_descent(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let hop = cfg.hopfield.clone().unwrap_or_default();
    let mut sim = run.sim()?;
    sim.x0 = InitialCondition::UniformInterior {
        half_width: hop.half_width,
    };
    let slack_factor = run.tol("slack_factor")?;
    let grad_tol = run.tol("grad_tol")?;
    let mut per = serde_json::Map::new();
    for p in cfg.build_potentials()? {
        let name = p.name().to_string();
        let net = DiffusionNetwork::new(
            p.clone(),
            AuxiliarySpec::None,
            ThermalSchedule::Constant { t: 0.0 },
            QuantumSchedule::Zero,
            sim.gain,
        )?;
        let l_hat = descent_slack_constant(&p, sim.gain, hop.lipschitz_samples, cfg.seed);
        let slack = slack_factor * sim.dt * sim.dt * l_hat;
        let mut worst_rise = 0.0_f64;
        let mut worst_grad = 0.0_f64;
        for s in 0..hop.starts {
            let mut prev: Option<f64> = None;
            let mut rise = 0.0_f64;
            let last = net
                .simulate_with(&sim, s as u64, |_, st| {
                    let v = p.value(&st.x);
                    if let Some(pv) = prev {
                        rise = rise.max(v - pv);
                    }
                    prev = Some(v);
                    Ok(())
                })
                .stage(|| format!("descent on {name}, start {s}"))?;
            worst_rise = worst_rise.max(rise);
            worst_grad = worst_grad.max(max_abs(&p.gradient(&last.x)));
        }
        run.push(Metric::at_most(
            format!("v_increase[{name}]"),
            worst_rise,
            slack,
            "slack_factor",
        ));
        run.push(Metric::at_most(
            format!("terminal_grad[{name}]"),
            worst_grad,
            grad_tol,
            "grad_tol",
        ));
        per.insert(
            name.clone(),
            json!({ "l_hat": num(l_hat), "slack": num(slack), "max_v_increase": num(worst_rise), "terminal_grad": num(worst_grad) }),
        );
        let stride = (sim.steps / 1000).max(1);
        let tr = net
            .simulate(&SimConfig { stride, ..sim.clone() })
            .map_err(QdError::from)
            .stage(|| format!("recorded descent on {name}"))?;
        run.artifact(&format!("{}.trajectory.csv", slug(&name)), |buf| tr.write_csv(buf))?;
    }
    run.detail("potentials", per)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("double_well(a=0.5, n=1)"), "double_well_a_0.5_n_1");
        assert_eq!(slug("x"), "x");
    }
}
