//! Command-line front end: `simulate`, `fit` and `diagnose`.
//!
//! Exit codes: 0 on success, 1 for invalid arguments, configuration or
//! data, 2 for file-system and JSON errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{diagnose, DiagnosticsOptions};
use crate::error::{MsprError, Result};
use crate::estimator::{fit_with_bootstrap, FitOptions, GammaThreshold};
use crate::io::{
    format_isi_csv, format_matrix_csv, format_pp_csv, read_json, read_spikes, write_json,
    write_spikes, write_text, DiagnosticsDocument, FitReport, Mode, Provenance, RunConfig,
    Settings, SimulationRecord,
};
use crate::simulator::simulate_dataset;

#[derive(Debug, Parser)]
#[command(
    name = "mspr",
    version,
    about = "Multivariate Skellam process with resetting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset; writes spikes.csv and params.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the model to a spike CSV; writes fit_report.json.
    Fit {
        /// Spike CSV (trial,neuron,time).
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Goodness-of-fit checks against a fit report; writes diagnostics.json
    /// and CSV tables.
    Diagnose {
        #[arg(long)]
        data: Option<PathBuf>,
        /// fit_report.json produced by `mspr fit`.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn load_settings(config: Option<&Path>, fallback: Settings) -> Result<Settings> {
    match config {
        Some(p) => read_json(p),
        None => Ok(fallback),
    }
}

fn build(cli: Cli) -> Result<RunConfig> {
    let (mode, data, fit, common) = match cli.command {
        Command::Simulate { common } => (Mode::Simulate, None, None, common),
        Command::Fit { data, common } => (Mode::Fit, data, None, common),
        Command::Diagnose { data, fit, common } => (Mode::Diagnose, data, fit, common),
    };
    let mut settings = load_settings(common.config.as_deref(), Settings::default())?;
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    Ok(RunConfig {
        mode,
        data,
        fit,
        out: common.out,
        settings,
    })
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MsprError::io(dir, e))
}

fn run_simulate(rc: &RunConfig) -> Result<()> {
    let s = &rc.settings;
    let (Some(params), Some(duration), Some(n_trials)) = (&s.params, s.duration, s.n_trials) else {
        unreachable!("validated");
    };
    params.validate().map_err(MsprError::InvalidParams)?;
    let data = simulate_dataset(params, duration, n_trials, s.seed)?;
    prepare_out(&rc.out)?;
    write_spikes(&data, rc.out.join("spikes.csv"))?;
    let record = SimulationRecord {
        provenance: Provenance::new(Mode::Simulate, s),
        params: params.clone(),
        duration,
        n_trials,
    };
    write_json(&rc.out.join("params.json"), &record)
}

fn run_fit(rc: &RunConfig) -> Result<()> {
    let s = &rc.settings;
    let data = read_spikes(rc.data.as_ref().expect("validated"), s.duration)?;
    let opts = FitOptions {
        threshold: s.threshold_gamma.then_some(GammaThreshold {
            alpha: s.alpha,
            permutations: s.permutations,
            seed: s.seed,
        }),
    };
    let fit = fit_with_bootstrap(&data, s.bootstrap_replicates, s.seed, &opts)?;
    prepare_out(&rc.out)?;
    let report = FitReport {
        provenance: Provenance::new(Mode::Fit, s),
        fit,
    };
    write_json(&rc.out.join("fit_report.json"), &report)
}

fn run_diagnose(rc: &RunConfig, explicit_config: bool, seed_override: Option<u64>) -> Result<()> {
    let fit_path = rc.fit.as_ref().expect("validated");
    let report: FitReport = read_json(fit_path)?;
    // Without --config, reuse the settings the fit was produced with.
    let mut s = if explicit_config {
        rc.settings.clone()
    } else {
        report.provenance.settings.clone()
    };
    if let Some(seed) = seed_override {
        s.seed = seed;
    }
    let checked = RunConfig {
        settings: s.clone(),
        ..rc.clone()
    };
    checked.validate()?;
    let duration = s.duration.unwrap_or(report.fit.duration);
    let data = read_spikes(rc.data.as_ref().expect("validated"), Some(duration))?;
    let opts = DiagnosticsOptions {
        isi_replicates: s.bootstrap_replicates,
        permutations: s.permutations,
        alpha: s.alpha,
        seed: s.seed,
    };
    let diag = diagnose(&data, &report.fit, &opts)?;
    prepare_out(&rc.out)?;
    write_text(
        &rc.out.join("correlation.csv"),
        &format_matrix_csv(&diag.correlations.correlation),
    )?;
    write_text(
        &rc.out.join("pvalues.csv"),
        &format_matrix_csv(&diag.correlations.p_values),
    )?;
    write_text(&rc.out.join("pp_points.csv"), &format_pp_csv(&diag))?;
    write_text(&rc.out.join("isi_table.csv"), &format_isi_csv(&diag))?;
    let doc = DiagnosticsDocument {
        provenance: Provenance::new(Mode::Diagnose, &s),
        report: diag,
    };
    write_json(&rc.out.join("diagnostics.json"), &doc)
}

fn execute(cli: Cli) -> Result<()> {
    let (explicit_config, seed_override) = match &cli.command {
        Command::Diagnose { common, .. } => (common.config.is_some(), common.seed),
        _ => (true, None),
    };
    let rc = build(cli)?;
    rc.validate()?;
    match rc.mode {
        Mode::Simulate => run_simulate(&rc),
        Mode::Fit => run_fit(&rc),
        Mode::Diagnose => run_diagnose(&rc, explicit_config, seed_override),
    }
}

fn exit_code(e: &MsprError) -> i32 {
    if e.is_io() {
        2
    } else {
        1
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
