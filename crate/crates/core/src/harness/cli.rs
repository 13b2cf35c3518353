use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{with_overrides, ExperimentConfig};
use super::presets::{preset, PRESETS};
use super::report::{emit_report, ExperimentReport};
use super::run_experiment;
use crate::error::Result;

/// Exit status when every pass flag is true.
pub const EXIT_PASS: i32 = 0;
/// Exit status when an experiment ran but a check failed.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for invalid input or a runtime error.
pub const EXIT_ERROR: i32 = 2;

/// Name accepted by `run` and `preset` for the whole preset suite.
pub const ALL_PRESETS: &str = "all-presets";

#[derive(Debug, Parser)]
#[command(name = "qdiff", version, about = "Annealed diffusion network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a JSON config (or `all-presets`).
    Run {
        config: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a named preset (or `all`).
    Preset {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List preset names.
    ListPresets,
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; wins over QDIFF_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `--set sim.steps=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k.to_string(), v.to_string()))
}

/// Applies overrides, the seed and the output-directory precedence
/// `--out` > `QDIFF_OUT` > config.
fn prepare(cfg: &ExperimentConfig, opts: &RunOpts, env_out: Option<&OsString>) -> Result<ExperimentConfig> {
    let mut cfg = with_overrides(cfg, &opts.set)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &opts.out {
        cfg.output.dir = dir.clone();
    } else if let Some(dir) = env_out.filter(|d| !d.is_empty()) {
        cfg.output.dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn run_one(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_experiment(cfg)?;
    let files = emit_report(&report, &cfg.output.dir, &cfg.output.formats)?;
    let status = if report.pass { "PASS" } else { "FAIL" };
    println!(
        "{status} {} ({}, {:.1}s)",
        report.name,
        report.kind.as_str(),
        report.wall_clock_s
    );
    for m in report.failed_metrics() {
        println!(
            "  failed {}: {} {} {} [{}]",
            m.name,
            m.value,
            m.comparison.symbol(),
            m.threshold,
            m.tolerance
        );
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
    for f in files {
        println!("  wrote {}", f.display());
    }
    Ok(report)
}

fn run_many(configs: Vec<ExperimentConfig>, opts: &RunOpts, env_out: Option<&OsString>) -> i32 {
    let mut code = EXIT_PASS;
    for cfg in configs {
        let outcome = prepare(&cfg, opts, env_out).and_then(|c| run_one(&c));
        match outcome {
            Ok(r) if r.pass => {}
            Ok(_) => code = code.max(EXIT_FAIL),
            Err(e) => {
                eprintln!("error: {e}");
                code = EXIT_ERROR;
            }
        }
    }
    code
}

fn all_presets() -> Vec<ExperimentConfig> {
    PRESETS.iter().map(|p| p.config()).collect()
}

/// Runs the command line and returns the process exit status. `env_out` is
/// the value of `QDIFF_OUT`.
pub fn run_cli<I, T>(args: I, env_out: Option<OsString>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    let env_out = env_out.as_ref();
    match cli.command {
        Command::ListPresets => {
            for p in PRESETS {
                println!("{:<18} {}", p.name, p.summary);
            }
            EXIT_PASS
        }
        Command::Validate { config, set } => {
            match ExperimentConfig::load(&config)
                .and_then(|c| with_overrides(&c, &set))
                .and_then(|c| c.validate().map(|_| c))
            {
                Ok(c) => {
                    println!("ok: {} ({})", c.name, c.kind.as_str());
                    EXIT_PASS
                }
                Err(e) => {
                    eprintln!("invalid {}: {e}", config.display());
                    EXIT_ERROR
                }
            }
        }
        Command::Preset { name, opts } => {
            if name == "all" || name == ALL_PRESETS {
                return run_many(all_presets(), &opts, env_out);
            }
            match preset(&name) {
                Some(cfg) => run_many(vec![cfg], &opts, env_out),
                None => {
                    let known: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
                    eprintln!("unknown preset {name:?}; known: {}", known.join(", "));
                    EXIT_ERROR
                }
            }
        }
        Command::Run { config, opts } => {
            if config == ALL_PRESETS {
                return run_many(all_presets(), &opts, env_out);
            }
            match ExperimentConfig::load(config.as_ref()) {
                Ok(cfg) => run_many(vec![cfg], &opts, env_out),
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_ERROR
                }
            }
        }
    }
}

/// Entry point for the binary: reads `QDIFF_OUT` from the environment.
pub fn main_from_env() -> i32 {
    run_cli(std::env::args_os(), std::env::var_os("QDIFF_OUT"))
}
