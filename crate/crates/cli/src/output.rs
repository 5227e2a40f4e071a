//! CSV and JSON emitters. CSV is UTF-8 with a mandatory header row and `.`
//! decimal separator; floats use Rust's shortest round-trip formatting so
//! identical runs produce byte-identical files. JSON key order follows the
//! struct declarations.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use plecho_core::analysis::{EchoReport, SweepTable};
use plecho_core::ensemble::MacroscopicSignal;
use plecho_core::protocol::{AreaClassification, MaximalRule, PhaseMatch};

use crate::config::ScenarioConfig;
use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads a numeric CSV into (header, columns). Malformed input is a config
/// error so callers surface the documented exit code.
pub fn read_csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CliError::Config(format!(
                "{}: line {} has {} fields, header has {}",
                path.display(),
                lineno + 2,
                fields.len(),
                header.len()
            )));
        }
        for (i, tok) in fields.iter().enumerate() {
            let v = tok.trim().parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}: bad number {tok:?} on line {}",
                    path.display(),
                    lineno + 2
                ))
            })?;
            cols[i].push(v);
        }
    }
    Ok((header, cols))
}

/// Writes the signal table: `t_us,re_P,im_P,intensity[,pop1,pop2,pop3]`.
pub fn write_signal_csv(path: &Path, sig: &MacroscopicSignal) -> Result<(), CliError> {
    let mut out = String::new();
    let pops = sig.populations.as_ref();
    out.push_str(if pops.is_some() {
        "t_us,re_P,im_P,intensity,pop1,pop2,pop3\n"
    } else {
        "t_us,re_P,im_P,intensity\n"
    });
    for k in 0..sig.len() {
        let t = sig.times[k];
        let p = sig.p[k];
        match pops {
            Some(pop) => out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t, p.re, p.im, sig.intensity[k], pop[0][k], pop[1][k], pop[2][k]
            )),
            None => out.push_str(&format!("{},{},{},{}\n", t, p.re, p.im, sig.intensity[k])),
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes the sweep table: `value,echo_time_us,efficiency,intensity`.
/// Skipped points are omitted from the table and listed in the sweep
/// summary.
pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<(), CliError> {
    let mut out = String::from("value,echo_time_us,efficiency,intensity\n");
    for row in &table.rows {
        if let Ok(point) = &row.outcome {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.value, point.echo.t_peak, point.efficiency, point.echo.intensity
            ));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("json encoding: {e}")))?;
    file.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(b"\n").map_err(|e| io_err(path, e))
}

/// JSON shape of an area classification.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationJson {
    pub condition: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    pub sum_multiple_of_4pi: bool,
}

impl From<AreaClassification> for ClassificationJson {
    fn from(c: AreaClassification) -> Self {
        ClassificationJson {
            condition: c.condition.as_str(),
            rule: c.rule.map(|r| match r {
                MaximalRule::B1LowBranch { n, m } => {
                    format!("B1=(4n-3)pi, B2=(4m-1)pi with n={n}, m={m}")
                }
                MaximalRule::B1HighBranch { n, m } => {
                    format!("B1=(4n-1)pi, B2=(4m-3)pi with n={n}, m={m}")
                }
            }),
            sum_multiple_of_4pi: c.sum_multiple_of_4pi,
        }
    }
}

/// Summary of one `run` invocation. `config` echoes the parsed scenario so
/// every input parameter round-trips with the results.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub echo_time_us: f64,
    pub echo_amplitude_re: f64,
    pub echo_amplitude_im: f64,
    pub echo_intensity: f64,
    pub predicted_echo_time_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_classification: Option<ClassificationJson>,
    pub echo_window_start_us: f64,
    pub echo_window_end_us: f64,
    pub edge_peak: bool,
    pub config: ScenarioConfig,
}

/// Sweep-level summary carrying the reference echo and any skipped points.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub axis: &'static str,
    pub reference_echo_time_us: f64,
    pub reference_intensity: f64,
    pub points_total: usize,
    pub points_written: usize,
    pub skipped: Vec<SkippedPoint>,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub value: f64,
    pub reason: String,
}

/// Validation-only report (no simulation).
#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub scenario: String,
    pub sequence_valid: bool,
    pub violations: Vec<ViolationJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_classification: Option<ClassificationJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_echo_time_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_matching: Option<PhaseMatchJson>,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationJson {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseMatchJson {
    pub k_e: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_e_mhz: Option<f64>,
    pub backwardness: f64,
}

impl PhaseMatchJson {
    pub fn new(pm: PhaseMatch, omegas_given: bool) -> Self {
        PhaseMatchJson {
            k_e: pm.k_e,
            omega_e_mhz: omegas_given.then_some(pm.omega_e),
            backwardness: pm.backwardness,
        }
    }
}

/// Decay-fit output of `fit`.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub tau_us: f64,
    pub i0: f64,
    pub residual: f64,
    pub spin_width_khz: f64,
    pub model: &'static str,
    pub points: usize,
}

/// Builds the echo-centric part of a run summary.
pub fn run_summary(
    scenario: String,
    config: &ScenarioConfig,
    echo: &EchoReport,
    predicted: f64,
    efficiency: Option<f64>,
    classification: Option<AreaClassification>,
) -> RunSummary {
    RunSummary {
        scenario,
        echo_time_us: echo.t_peak,
        echo_amplitude_re: echo.amplitude.re,
        echo_amplitude_im: echo.amplitude.im,
        echo_intensity: echo.intensity,
        predicted_echo_time_us: predicted,
        efficiency,
        area_classification: classification.map(ClassificationJson::from),
        echo_window_start_us: echo.window.0,
        echo_window_end_us: echo.window.1,
        edge_peak: echo.edge_peak,
        config: config.clone(),
    }
}
