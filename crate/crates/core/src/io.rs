//! Spike CSV files, run configuration and JSON/CSV reports.
//!
//! Spike files look like
//!
//! ```text
//! # T=10.000000000
//! # trials=50
//! # neurons=3
//! trial,neuron,time
//! 0,0,0.013521877
//! ```
//!
//! Ids are 0-based; times are seconds in `(0, T]`. `trials`/`neurons`
//! metadata preserve trials and neurons that never spiked; without them the
//! counts are inferred from the largest id.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsReport, IsiMoments, DEFAULT_ALPHA, DEFAULT_PERMUTATIONS};
use crate::error::{MsprError, Result};
use crate::estimator::{FitResult, DEFAULT_BOOTSTRAP_REPLICATES};
use crate::model::MsprParams;
use crate::simulator::SpikeDataset;

pub const SPIKES_HEADER: &str = "trial,neuron,time";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> MsprError {
    MsprError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a spike CSV. `duration` supplies `T` when the file has no `# T=`
/// line; if both are present they must agree.
pub fn read_spikes(path: impl AsRef<Path>, duration: Option<f64>) -> Result<SpikeDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| MsprError::io(path, e))?;
    parse_spikes(&text, path, duration)
}

fn parse_spikes(text: &str, path: &Path, duration: Option<f64>) -> Result<SpikeDataset> {
    let mut meta: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut header_seen = false;
    // (trial, neuron) -> [(time, line)]
    let mut spikes: BTreeMap<(usize, usize), Vec<(f64, usize)>> = BTreeMap::new();

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    meta.insert(k.to_string(), (v.to_string(), line_no));
                }
            }
            continue;
        }
        if !header_seen {
            if line.trim() != SPIKES_HEADER {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected header `{SPIKES_HEADER}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let trial: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid trial id `{}`", fields[0])))?;
        let neuron: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid neuron id `{}`", fields[1])))?;
        let time: f64 = fields[2]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| {
                parse_err(path, line_no, format!("invalid spike time `{}`", fields[2]))
            })?;
        spikes
            .entry((trial, neuron))
            .or_default()
            .push((time, line_no));
    }
    if !header_seen {
        return Err(parse_err(
            path,
            1,
            format!("missing header `{SPIKES_HEADER}`"),
        ));
    }

    let meta_f64 = |key: &str| -> Result<Option<f64>> {
        meta.get(key)
            .map(|(v, line)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(path, *line, format!("invalid {key} value `{v}`")))
            })
            .transpose()
    };
    let meta_usize = |key: &str| -> Result<Option<usize>> {
        meta.get(key)
            .map(|(v, line)| {
                v.parse::<usize>()
                    .map_err(|_| parse_err(path, *line, format!("invalid {key} value `{v}`")))
            })
            .transpose()
    };

    let duration = match (meta_f64("T")?, duration) {
        (Some(a), Some(b)) if (a - b).abs() > 1e-9 * a.abs().max(1.0) => {
            return Err(MsprError::Config(format!(
                "trial duration {b} conflicts with `# T={a}` in {}",
                path.display()
            )));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(MsprError::Config(format!(
                "{}: trial duration unknown; add `# T=<seconds>` or set `duration` in the config",
                path.display()
            )));
        }
    };
    if !(duration > 0.0) {
        return Err(MsprError::Config(format!(
            "trial duration must be positive, got {duration}"
        )));
    }

    let max_trial = spikes.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let max_neuron = spikes.keys().map(|k| k.1 + 1).max().unwrap_or(0);
    let n_trials = meta_usize("trials")?.unwrap_or(max_trial);
    let n_neurons = meta_usize("neurons")?.unwrap_or(max_neuron);
    if max_trial > n_trials || max_neuron > n_neurons {
        return Err(MsprError::InvalidData(format!(
            "{}: ids exceed declared {n_trials} trials / {n_neurons} neurons",
            path.display()
        )));
    }
    if n_trials == 0 || n_neurons == 0 {
        return Err(MsprError::InvalidData(format!(
            "{}: no trials or neurons; declare them with `# trials=` and `# neurons=`",
            path.display()
        )));
    }

    let mut trials = vec![vec![Vec::new(); n_neurons]; n_trials];
    for ((trial, neuron), mut times) in spikes {
        times.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(t, line) in &times {
            if !(t > 0.0 && t <= duration) {
                return Err(parse_err(
                    path,
                    line,
                    format!("spike time {t} outside (0, {duration}]"),
                ));
            }
        }
        if let Some(w) = times.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(parse_err(
                path,
                w[1].1,
                format!(
                    "duplicate spike (trial {trial}, neuron {neuron}, time {}) also on line {}",
                    w[1].0, w[0].1
                ),
            ));
        }
        trials[trial][neuron] = times.into_iter().map(|(t, _)| t).collect();
    }
    SpikeDataset::new(duration, n_neurons, trials)
}

/// Canonical spike CSV: metadata, header, rows ordered by trial, neuron,
/// time with 9 fractional digits. Writing what was read reproduces the file
/// byte for byte.
pub fn format_spikes(data: &SpikeDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# T={:.9}", data.duration());
    let _ = writeln!(out, "# trials={}", data.n_trials());
    let _ = writeln!(out, "# neurons={}", data.n_neurons());
    out.push_str(SPIKES_HEADER);
    out.push('\n');
    for (r, trial) in data.trials().iter().enumerate() {
        for (i, train) in trial.iter().enumerate() {
            for t in train {
                let _ = writeln!(out, "{r},{i},{t:.9}");
            }
        }
    }
    out
}

pub fn write_spikes(data: &SpikeDataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_spikes(data))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MsprError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MsprError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| MsprError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| MsprError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

fn default_seed() -> u64 {
    1
}
fn default_replicates() -> usize {
    DEFAULT_BOOTSTRAP_REPLICATES
}
fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// The JSON configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Model used by `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<MsprParams>,
    /// Trial duration in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trials: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Zero shared rates whose count correlation is not significant at `alpha`.
    #[serde(default)]
    pub threshold_gamma: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            params: None,
            duration: None,
            n_trials: None,
            seed: default_seed(),
            bootstrap_replicates: default_replicates(),
            permutations: default_permutations(),
            alpha: default_alpha(),
            threshold_gamma: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Fit,
    Diagnose,
}

/// Everything one CLI invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub data: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub out: PathBuf,
    pub settings: Settings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        let mut problems = Vec::new();
        if s.bootstrap_replicates < 2 {
            problems.push(format!(
                "bootstrap_replicates must be ≥ 2, got {}",
                s.bootstrap_replicates
            ));
        }
        if s.permutations == 0 {
            problems.push("permutations must be positive".to_string());
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            problems.push(format!("alpha must lie in (0, 1), got {}", s.alpha));
        }
        if let Some(t) = s.duration {
            if !(t > 0.0) || !t.is_finite() {
                problems.push(format!("duration must be positive, got {t}"));
            }
        }
        if s.n_trials == Some(0) {
            problems.push("n_trials must be positive".to_string());
        }
        if self.out.as_os_str().is_empty() {
            problems.push("output directory is empty".to_string());
        }
        let missing = |p: &Option<PathBuf>| p.as_ref().is_none_or(|p| p.as_os_str().is_empty());
        match self.mode {
            Mode::Simulate => {
                if s.params.is_none() {
                    problems.push("simulate needs `params` in the config".to_string());
                }
                if s.duration.is_none() {
                    problems.push("simulate needs `duration` in the config".to_string());
                }
                if s.n_trials.is_none() {
                    problems.push("simulate needs `n_trials` in the config".to_string());
                }
            }
            Mode::Fit => {
                if missing(&self.data) {
                    problems.push("fit needs --data".to_string());
                }
            }
            Mode::Diagnose => {
                if missing(&self.data) {
                    problems.push("diagnose needs --data".to_string());
                }
                if missing(&self.fit) {
                    problems.push("diagnose needs --fit (a fit report)".to_string());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MsprError::Config(problems.join("; ")))
        }
    }
}

/// Embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub settings: Settings,
}

impl Provenance {
    pub fn new(mode: Mode, settings: &Settings) -> Self {
        Self {
            tool: "mspr".to_string(),
            version: VERSION.to_string(),
            mode,
            seed: settings.seed,
            settings: settings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub provenance: Provenance,
    pub params: MsprParams,
    pub duration: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsDocument {
    pub provenance: Provenance,
    pub report: DiagnosticsReport,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Square matrix as CSV with a `neuron` column and one column per neuron.
pub fn format_matrix_csv(m: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("neuron");
    for j in 0..m.len() {
        let _ = write!(out, ",{j}");
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        let _ = write!(out, "{i}");
        for &x in row {
            let _ = write!(out, ",{}", cell(x));
        }
        out.push('\n');
    }
    out
}

pub fn format_pp_csv(report: &DiagnosticsReport) -> String {
    let mut out = String::from("neuron,u_model,u_empirical\n");
    for (i, pts) in report.pp.iter().enumerate() {
        for p in pts {
            let _ = writeln!(out, "{i},{},{}", p.model, p.empirical);
        }
    }
    out
}

/// One row per neuron and source (`observed` / `model`); missing entries
/// are empty cells.
pub fn format_isi_csv(report: &DiagnosticsReport) -> String {
    let mut out = String::from("neuron,source,mean,mean_se,variance,variance_se\n");
    let row = |out: &mut String, i: usize, source: &str, m: &Option<IsiMoments>| {
        let _ = writeln!(
            out,
            "{i},{source},{},{},{},{}",
            cell(m.map(|x| x.mean)),
            cell(m.and_then(|x| x.mean_se)),
            cell(m.map(|x| x.variance)),
            cell(m.and_then(|x| x.variance_se)),
        );
    };
    for i in 0..report.observed_isi.len() {
        row(&mut out, i, "observed", &report.observed_isi[i]);
        row(&mut out, i, "model", &report.model_isi[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, t: Option<f64>) -> Result<SpikeDataset> {
        parse_spikes(text, Path::new("mem.csv"), t)
    }

    #[test]
    fn small_file() {
        let d = parse("trial,neuron,time\n0,0,0.3\n0,0,0.1\n0,0,0.2\n", Some(1.0)).unwrap();
        assert_eq!(d.n_trials(), 1);
        assert_eq!(d.n_neurons(), 1);
        assert_eq!(d.train(0, 0), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn crlf_and_metadata() {
        let d = parse(
            "# T=2\r\n# trials=3 neurons=2\r\ntrial,neuron,time\r\n1,0,2\r\n",
            None,
        )
        .unwrap();
        assert_eq!(d.duration(), 2.0);
        assert_eq!(d.n_trials(), 3);
        assert_eq!(d.n_neurons(), 2);
        assert_eq!(d.train(1, 0), &[2.0]);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let e = parse("trial,neuron,time\n0,0,0.5\n0,x,0.2\n", Some(1.0)).unwrap_err();
        assert!(matches!(e, MsprError::Parse { line: 3, .. }), "{e}");
        let e = parse("trial,neuron,time\n0,0,0.5,1\n", Some(1.0)).unwrap_err();
        assert!(matches!(e, MsprError::Parse { line: 2, .. }));
        let e = parse("trial,neuron,time\n0,0,1.5\n", Some(1.0)).unwrap_err();
        assert!(matches!(e, MsprError::Parse { line: 2, .. }));
        let e = parse("trial,neuron,time\n0,0,0\n", Some(1.0)).unwrap_err();
        assert!(matches!(e, MsprError::Parse { .. }));
        let e = parse("trial,neuron,time\n0,0,0.5\n0,0,0.5\n", Some(1.0)).unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
        assert!(parse("time,neuron,trial\n", Some(1.0)).is_err());
        assert!(parse("trial,neuron,time\n0,0,0.5\n", None).is_err());
        assert!(parse("# T=1\ntrial,neuron,time\n0,0,0.5\n", Some(2.0)).is_err());
    }

    #[test]
    fn right_endpoint_is_accepted() {
        let d = parse("# T=1.5\ntrial,neuron,time\n0,0,1.5\n", None).unwrap();
        assert_eq!(d.train(0, 0), &[1.5]);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = SpikeDataset::new(1.0, 2, vec![vec![vec![], vec![]]]).unwrap();
        let text = format_spikes(&d);
        assert!(text.ends_with("trial,neuron,time\n"));
        assert_eq!(parse(&text, None).unwrap(), d);
    }

    #[test]
    fn write_reports_path_on_failure() {
        let d = SpikeDataset::new(1.0, 1, vec![vec![vec![0.5]]]).unwrap();
        let e = write_spikes(&d, "/nonexistent-dir/x/spikes.csv").unwrap_err();
        assert!(e.is_io());
        assert!(e.to_string().contains("/nonexistent-dir/x/spikes.csv"));
    }

    #[test]
    fn settings_defaults_and_unknown_fields() {
        let s: Settings = serde_json::from_str("{}").unwrap();
        assert_eq!(s, Settings::default());
        assert!(serde_json::from_str::<Settings>(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn run_config_validation() {
        let mut rc = RunConfig {
            mode: Mode::Diagnose,
            data: Some("d.csv".into()),
            fit: None,
            out: "out".into(),
            settings: Settings::default(),
        };
        assert!(rc.validate().is_err());
        rc.fit = Some("f.json".into());
        assert!(rc.validate().is_ok());
        rc.settings.alpha = 1.0;
        assert!(rc.validate().is_err());
        rc.settings.alpha = 0.05;
        rc.mode = Mode::Simulate;
        assert!(rc.validate().is_err());
    }

    proptest! {
        #[test]
        fn write_read_write_is_stable(
            trains in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 0..6), 1..8),
        ) {
            let n_neurons = 2;
            let mut trials = Vec::new();
            for chunk in trains.chunks(n_neurons) {
                let mut trial: Vec<Vec<f64>> = chunk.iter().map(|t| {
                    let mut t: Vec<f64> = t.iter().map(|x| (x * 1e9).round() / 1e9).filter(|&x| x > 0.0).collect();
                    t.sort_by(f64::total_cmp);
                    t.dedup();
                    t
                }).collect();
                trial.resize(n_neurons, Vec::new());
                trials.push(trial);
            }
            let d = SpikeDataset::new(10.0, n_neurons, trials).unwrap();
            let text = format_spikes(&d);
            let back = parse(&text, None).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(format_spikes(&back), text);
        }
    }
}
