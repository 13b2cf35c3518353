use std::ffi::OsString;
use std::fs;

use proptest::prelude::*;
use serde_json::{json, Value};

use super::cli::{run_cli, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use super::*;
use crate::dynamics::SimConfig;

fn quick_stationary(dir: &std::path::Path) -> ExperimentConfig {
    let mut c = preset("stationary-check").unwrap();
    c.sim = Some(SimConfig::new(1_000_000));
    c.stationary = Some(StationaryConfig {
        burn_in: 1_000,
        bins: 16,
    });
    c.output.dir = dir.to_path_buf();
    c
}

#[test]
fn config_round_trip_is_identity() {
    for info in PRESETS {
        let c = info.config();
        let text = c.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v = serde_json::to_value(preset("gap-bound").unwrap()).unwrap();
    v["bogus"] = json!(1);
    assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
}

#[test]
fn minimal_config_takes_defaults() {
    let c = ExperimentConfig::from_json(
        r#"{"name": "m", "kind": "hopfield-descent",
            "potentials": [{"name": "double_well", "a": 0.5}],
            "sim": {"steps": 10}}"#,
    )
    .unwrap();
    assert_eq!(c.seed, 42);
    assert_eq!(c.aux, AuxConfig::None);
    assert_eq!(c.output, OutputConfig::default());
    c.validate().unwrap();
    let full = c.with_default_tolerances();
    assert_eq!(full.tolerance("grad_tol").unwrap(), 1e-3);
    assert!(full.tolerance("nope").is_err());
}

#[test]
fn aux_config_uses_kind_and_eps_keys() {
    let a: AuxConfig = serde_json::from_value(json!({"kind": "kinetic1d", "eps": 0.2})).unwrap();
    assert_eq!(a, AuxConfig::Kinetic1D { eps: Some(0.2) });
    let h: AuxConfig = serde_json::from_value(json!({"kind": "homotopy"})).unwrap();
    let p = crate::potentials::catalog_make("double_well", &json!({"a": 0.5})).unwrap();
    assert_eq!(h.resolve(&p).unwrap().kind(), "homotopy");
    let nd: AuxConfig = serde_json::from_value(json!({"kind": "hessian_quadratic"})).unwrap();
    assert!(matches!(
        nd.resolve(&p).unwrap(),
        crate::auxiliary::AuxiliarySpec::HessianQuadratic { eps } if eps == vec![0.1]
    ));
}

#[test]
fn validation_lists_every_offending_key() {
    let mut c = preset("joint-anneal").unwrap();
    c.name = String::new();
    c.thermal = None;
    c.ensemble.as_mut().unwrap().trajectories = 0;
    c.tolerances.insert("ground_fraction".into(), f64::NAN);
    let msg = c.validate().unwrap_err().to_string();
    for key in ["name", "thermal", "ensemble.trajectories", "tolerances.ground_fraction"] {
        assert!(msg.contains(key), "{key} missing from {msg}");
    }

    let mut g = preset("gap-bound").unwrap();
    g.potentials
        .push(crate::potentials::PotentialSpec::DoubleWell { a: 0.5, n: 2 });
    g.sweep.as_mut().unwrap().temperatures = vec![0.2, -1.0];
    let msg = g.validate().unwrap_err().to_string();
    assert!(msg.contains("not 1-D") && msg.contains("sweep.temperatures"), "{msg}");

    let mut z = preset("zt-tracking").unwrap();
    z.potentials[0] = crate::potentials::PotentialSpec::DoubleWell { a: 1.5, n: 1 };
    assert!(z.validate().unwrap_err().to_string().contains("potentials[0]"));
}

#[test]
fn dotted_overrides() {
    let c = preset("stationary-check").unwrap();
    let o = with_overrides(
        &c,
        &[
            ("sim.steps".into(), "123".into()),
            ("thermal.T".into(), "0.7".into()),
            ("potentials.0.a".into(), "0.4".into()),
            ("tolerances.tv".into(), "0.1".into()),
            ("aux.kind".into(), "contraction".into()),
            ("name".into(), "renamed".into()),
        ],
    )
    .unwrap();
    assert_eq!(o.sim.as_ref().unwrap().steps, 123);
    assert_eq!(o.thermal, Some(crate::schedules::ThermalSchedule::Constant { t: 0.7 }));
    assert_eq!(
        o.potentials[0],
        crate::potentials::PotentialSpec::DoubleWell { a: 0.4, n: 1 }
    );
    assert_eq!(o.tolerances["tv"], 0.1);
    assert_eq!(o.aux, AuxConfig::Contraction);
    assert_eq!(o.name, "renamed");

    assert!(with_overrides(&c, &[("potentials.7.a".into(), "1".into())]).is_err());
    assert!(with_overrides(&c, &[("seed.x".into(), "1".into())]).is_err());
    assert!(with_overrides(&c, &[("sim.steps".into(), "many".into())]).is_err());
    let mut doc = json!({"a": null});
    apply_override(&mut doc, "a.b.c", "[1, 2]").unwrap();
    assert_eq!(doc, json!({"a": {"b": {"c": [1, 2]}}}));
}

proptest! {
    #[test]
    fn seed_and_tolerance_overrides_round_trip(seed in any::<u64>(), tol in 1e-6f64..1.0) {
        let c = preset("gap-bound").unwrap();
        let o = with_overrides(&c, &[
            ("seed".into(), seed.to_string()),
            ("tolerances.slope_margin".into(), format!("{tol:?}")),
        ]).unwrap();
        prop_assert_eq!(o.seed, seed);
        prop_assert_eq!(o.tolerances["slope_margin"], tol);
        let back = ExperimentConfig::from_json(&o.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, o);
    }
}

#[test]
fn metric_comparisons() {
    assert!(Metric::at_most("a", 1.0, 1.0, "t").pass);
    assert!(!Metric::at_most("a", 1.5, 1.0, "t").pass);
    assert!(Metric::at_least("a", 2.0, 1.0, "t").pass);
    assert!(!Metric::at_least("a", f64::NAN, 1.0, "t").pass);
    assert!(!Metric::at_most("a", f64::NAN, 1.0, "t").pass);
    assert_eq!(serde_json::to_value(Comparison::AtMost).unwrap(), json!("<="));
}

#[test]
fn empty_report_is_valid_json_with_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_stationary(dir.path());
    let mut r = ExperimentReport::new(&cfg);
    r.finish();
    assert!(r.pass);
    let files = emit_report(&r, dir.path(), &[ReportFormat::Json, ReportFormat::CsvSummary]).unwrap();
    let v: Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(v["metrics"], json!([]));
    assert_eq!(v["config"]["name"], json!("stationary-check"));
    let csv = fs::read_to_string(&files[1]).unwrap();
    assert_eq!(csv, "metric,value,comparison,threshold,tolerance,pass\n");
    assert!(dir.path().join("stationary-check.timing.json").exists());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = || {
        let cfg = quick_stationary(dir.path());
        let r = run_experiment(&cfg).unwrap();
        emit_report(&r, dir.path(), &cfg.output.formats).unwrap();
        let mut names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| !n.to_string_lossy().ends_with("timing.json"))
            .collect();
        names.sort();
        names
            .into_iter()
            .map(|n| (fs::read(dir.path().join(&n)).unwrap(), n))
            .collect::<Vec<_>>()
    };
    let first = snapshot();
    let second = snapshot();
    assert_eq!(first.len(), 3);
    for ((a, name), (b, _)) in first.iter().zip(&second) {
        assert!(a == b, "{name:?} differs between runs");
    }

    let mut other = quick_stationary(dir.path());
    other.seed = 7;
    let r7 = run_experiment(&other).unwrap();
    let r42 = run_experiment(&quick_stationary(dir.path())).unwrap();
    assert_ne!(r7.metrics[0].value, r42.metrics[0].value);
}

#[test]
fn gap_sweep_summary_has_a_row_per_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("gap-bound").unwrap();
    cfg.potentials.truncate(1);
    cfg.grid.as_mut().unwrap().cells = 64;
    cfg.grid.as_mut().unwrap().range_resolution = 257;
    cfg.sweep.as_mut().unwrap().gammas = vec![0.0];
    cfg.output.dir = dir.path().to_path_buf();
    let r = run_experiment(&cfg).unwrap();
    emit_report(&r, dir.path(), &[ReportFormat::CsvSummary]).unwrap();
    let text = fs::read_to_string(dir.path().join("gap-bound.summary.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().unwrap().clone();
    assert!(
        header.iter().any(|h| h == "gap") && header.iter().any(|h| h == "bound") && header.iter().any(|h| h == "T")
    );
    let t_col = header.iter().position(|h| h == "T").unwrap();
    let temps: Vec<f64> = rd.records().map(|row| row.unwrap()[t_col].parse().unwrap()).collect();
    assert_eq!(temps, vec![0.2, 0.3, 0.5, 1.0]);
    assert!(r.metric("arrhenius_slope[double_well(a=0.5, n=1) Γ=0]").is_some());
    assert!(r.artifacts.contains(&"gap-bound.gap.json".to_string()));
}

#[test]
fn failing_tolerance_flips_pass() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_stationary(dir.path());
    cfg.tolerances.insert("tv".into(), 0.0);
    let r = run_experiment(&cfg).unwrap();
    assert!(!r.pass);
    assert_eq!(r.failed_metrics().count(), 1);
    assert_eq!(r.metrics[0].tolerance, "tv");
}

#[test]
fn artifacts_can_be_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_stationary(&dir.path().join("nested"));
    cfg.output.artifacts = false;
    let r = run_experiment(&cfg).unwrap();
    assert!(r.artifacts.is_empty());
    assert!(!dir.path().join("nested").exists());
}

fn args(list: &[&str]) -> Vec<OsString> {
    std::iter::once("qdiff")
        .chain(list.iter().copied())
        .map(OsString::from)
        .collect()
}

#[test]
fn cli_exit_codes_and_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("flag");
    let env = dir.path().join("env");
    let quick = [
        "--set",
        "sim.steps=1000000",
        "--set",
        "stationary.burn_in=1000",
        "--set",
        "stationary.bins=16",
    ];

    assert_eq!(run_cli(args(&["list-presets"]), None), EXIT_PASS);
    assert_eq!(run_cli(args(&["bogus"]), None), EXIT_ERROR);
    assert_eq!(run_cli(args(&["preset", "no-such-preset"]), None), EXIT_ERROR);

    let mut a = vec![
        "preset",
        "stationary-check",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    a.extend(quick);
    assert_eq!(run_cli(args(&a), Some(env.clone().into())), EXIT_PASS);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("stationary-check.report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], json!(3));
    assert_eq!(report["pass"], json!(true));
    assert!(!env.exists());

    let mut b = vec!["preset", "stationary-check", "--set", "tolerances.tv=0"];
    b.extend(quick);
    assert_eq!(run_cli(args(&b), Some(env.clone().into())), EXIT_FAIL);
    assert!(env.join("stationary-check.summary.csv").exists());

    let cfg_path = dir.path().join("cfg.json");
    let mut cfg = quick_stationary(&dir.path().join("from-config"));
    cfg.name = "from-file".into();
    fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();
    assert_eq!(
        run_cli(args(&["validate", cfg_path.to_str().unwrap()]), None),
        EXIT_PASS
    );
    assert_eq!(
        run_cli(
            args(&["validate", cfg_path.to_str().unwrap(), "--set", "thermal.T=-1"]),
            None
        ),
        EXIT_ERROR
    );
    assert_eq!(run_cli(args(&["run", cfg_path.to_str().unwrap()]), None), EXIT_PASS);
    assert!(dir.path().join("from-config/from-file.report.json").exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"name\": \"x\"}").unwrap();
    assert_eq!(run_cli(args(&["validate", bad.to_str().unwrap()]), None), EXIT_ERROR);
    assert_eq!(run_cli(args(&["run", bad.to_str().unwrap()]), None), EXIT_ERROR);
    assert_eq!(run_cli(args(&["run", "/nonexistent/cfg.json"]), None), EXIT_ERROR);
}
