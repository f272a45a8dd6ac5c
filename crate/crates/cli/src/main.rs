//! `quenchlab`: batch runner for harmonic-chain quench experiments.
//!
//! ```text
//! quenchlab --preset fig1 --out results
//! quenchlab --config my.toml --out results --threads 1
//! ```
//!
//! Every run writes `<out>/manifest.json`; each preset writes its artifacts
//! under `<out>/<preset name>/`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use quenchlab_core::covariance::{ThermalFormConfig, UNCERTAINTY_SLACK};
use quenchlab_core::fock::{DEFAULT_LADDER_TOLERANCE, DEFAULT_PROJECTION_TOLERANCE};
use serde::Serialize;
use serde_json::json;

use crate::config::{builtin, load_config, ExperimentPreset, PresetConfig, BUILTIN_PRESETS};
use crate::error::{CliError, ErrorRecord};
use crate::output::{write_json, OutputDir};
use crate::pipeline::{run_preset, RunFlags};

#[derive(Debug, Clone, Parser, Serialize)]
#[command(
    name = "quenchlab",
    version,
    about = "Quench two harmonic chains and record what happens"
)]
struct Args {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, env = "QUENCHLAB_OUT", default_value = "quenchlab-out")]
    out: PathBuf,

    /// Run one preset: a name from the config, or a built-in
    /// (fig1, table1, sweep, oracle, covariance) when no config is given.
    #[arg(long)]
    preset: Option<String>,

    /// Worker threads; 1 runs everything serially.
    #[arg(long)]
    threads: Option<usize>,

    /// Also write alpha.csv, beta.csv and f_matrix.csv for every preset.
    #[arg(long)]
    dump_bogoliubov: bool,

    /// Amplitude floor for delocalization counts.
    #[arg(long)]
    floor: Option<f64>,

    /// Recorded in the manifest; nothing in the pipeline is random.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct PresetRecord {
    name: String,
    analyses: Vec<&'static str>,
    config: PresetConfig,
    files: Vec<String>,
    wall_time_s: f64,
    status: &'static str,
}

#[derive(Serialize)]
struct Manifest {
    program: &'static str,
    version: &'static str,
    args: Option<Args>,
    tolerances: serde_json::Value,
    presets: Vec<PresetRecord>,
    wall_time_s: f64,
    status: &'static str,
    error: Option<ErrorRecord>,
}

fn select(args: &Args) -> Result<Vec<ExperimentPreset>, CliError> {
    match (&args.config, &args.preset) {
        (Some(path), name) => {
            let presets = load_config(path)?;
            match name {
                None => Ok(presets),
                Some(name) => {
                    let chosen: Vec<_> = presets.into_iter().filter(|p| &p.name == name).collect();
                    if chosen.is_empty() {
                        Err(CliError::Config(format!(
                            "no preset {name:?} in {}",
                            path.display()
                        )))
                    } else {
                        Ok(chosen)
                    }
                }
            }
        }
        (None, Some(name)) => builtin(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset {name:?}; built-ins are {}",
                BUILTIN_PRESETS.join(", ")
            ))
        }),
        (None, None) => Err(CliError::Config("give --config or --preset".into())),
    }
}

fn run(args: &Args, records: &mut Vec<PresetRecord>) -> Result<(), CliError> {
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if let Some(floor) = args.floor {
        if !(floor > 0.0) {
            return Err(CliError::Config(format!(
                "--floor must be positive, got {floor}"
            )));
        }
    }
    let presets = select(args)?;
    let flags = RunFlags {
        dump_bogoliubov: args.dump_bogoliubov,
        floor: args.floor,
    };
    for preset in &presets {
        let start = Instant::now();
        let mut out = OutputDir::new(args.out.join(&preset.name));
        let result = run_preset(preset, &flags, &mut out);
        records.push(PresetRecord {
            name: preset.name.clone(),
            analyses: preset.analyses.iter().map(|a| a.name()).collect(),
            config: preset.echo.clone(),
            files: out
                .written()
                .iter()
                .map(|f| format!("{}/{f}", preset.name))
                .collect(),
            wall_time_s: start.elapsed().as_secs_f64(),
            status: if result.is_ok() { "ok" } else { "error" },
        });
        result?;
    }
    Ok(())
}

fn tolerances() -> serde_json::Value {
    json!({
        "projection_tolerance": DEFAULT_PROJECTION_TOLERANCE,
        "ladder_tolerance": DEFAULT_LADDER_TOLERANCE,
        "uncertainty_slack": UNCERTAINTY_SLACK,
        "thermal_form": ThermalFormConfig::default(),
        "csv_significant_digits": 17,
    })
}

/// Where a run whose arguments did not parse should leave its manifest.
fn fallback_out() -> PathBuf {
    let raw: Vec<String> = std::env::args().collect();
    for (i, arg) in raw.iter().enumerate() {
        if let Some(v) = arg.strip_prefix("--out=") {
            return v.into();
        }
        if arg == "--out" {
            if let Some(v) = raw.get(i + 1) {
                return v.into();
            }
        }
    }
    std::env::var_os("QUENCHLAB_OUT").map_or_else(|| "quenchlab-out".into(), PathBuf::from)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (args, out, result) = match Args::try_parse() {
        Ok(args) => (Some(args.clone()), args.out.clone(), Ok(args)),
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let message = first.strip_prefix("error: ").unwrap_or(first).to_string();
            (None, fallback_out(), Err(CliError::Config(message)))
        }
    };
    let mut records = Vec::new();
    let result = result.and_then(|args| run(&args, &mut records));

    let error = result.as_ref().err().map(CliError::record);
    let manifest = Manifest {
        program: "quenchlab",
        version: env!("CARGO_PKG_VERSION"),
        args,
        tolerances: tolerances(),
        presets: records,
        wall_time_s: start.elapsed().as_secs_f64(),
        status: if error.is_some() { "error" } else { "ok" },
        error,
    };
    let written = std::fs::create_dir_all(&out)
        .map_err(|e| CliError::io(&out, e))
        .and_then(|_| write_json(&out.join("manifest.json"), &manifest));

    let failure = match (result, written) {
        (Err(e), _) | (Ok(()), Err(e)) => e,
        (Ok(()), Ok(())) => return ExitCode::SUCCESS,
    };
    eprintln!("quenchlab: {failure}");
    if let Some(record) = &manifest.error {
        if let Ok(text) = serde_json::to_string(record) {
            eprintln!("{text}");
        }
    }
    ExitCode::from(failure.exit_code())
}
