//! Command implementations: run, sweep, validate, fit.
//!
//! Ensemble groups and sweep points are propagated on the rayon pool; the
//! weighted reduction always happens in ascending-detuning order afterwards,
//! so outputs are byte-identical for any `--threads` setting.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use plecho_core::analysis::{
    apply_axis, default_echo_window, detect_echo, signed_efficiency, EchoReport, SimSetup,
    SweepAxis, SweepPoint, SweepRow, SweepTable,
};
use plecho_core::ensemble::{group_signal, simulate_group, MacroscopicSignal, SignalAccumulator};
use plecho_core::error::CoreError;
use plecho_core::model::{validate_sequence, PulseSequence, SequenceKind};
use plecho_core::protocol::{
    assemble_phase_locked, build_two_pulse, classify_areas, phase_match, predict_echo_time,
    two_pulse_echo_time, AreaClassification, AREA_TOL,
};

use crate::config::{parse_values, ProtocolKind, ScenarioConfig};
use crate::output::{
    self, run_summary, FitSummary, PhaseMatchJson, RunSummary, SkippedPoint, SweepSummary,
    ValidateReport, ViolationJson,
};
use crate::{plot, CliError};

pub fn from_core(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidArgument(msg) => CliError::Config(msg),
        CoreError::SequenceInvalid(report) => CliError::Validation(format!("{report}")),
        CoreError::IntegrationDiverged { .. } => CliError::Numerical(format!("{e}")),
        CoreError::DegenerateGeometry | CoreError::ZeroReference => {
            CliError::Numerical(format!("{e}"))
        }
        CoreError::DegenerateFit(msg) => CliError::Fit(msg),
    }
}

fn scenario_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
}

/// Ensemble run with groups propagated in parallel and reduced in grid
/// order. Matches `plecho_core::ensemble::simulate_ensemble` bit for bit.
pub fn simulate_ensemble_parallel(
    seq: &PulseSequence,
    setup: &SimSetup,
) -> Result<MacroscopicSignal, CoreError> {
    let signals: Result<Vec<_>, CoreError> = setup
        .grid
        .groups()
        .par_iter()
        .map(|g| {
            let traj = simulate_group(seq, g.detuning, &setup.relax, &setup.sampling)?;
            let signal = group_signal(&traj, setup.sampling.record_populations);
            Ok((traj.times, signal))
        })
        .collect();
    let signals = signals?;
    let times = signals[0].0.clone();
    let mut acc = SignalAccumulator::new(times, setup.sampling.record_populations);
    for (group, (_, signal)) in setup.grid.groups().iter().zip(signals.iter()) {
        acc.add(group.weight, signal)?;
    }
    Ok(acc.finish())
}

/// Full run outcome plus the optional reference efficiency.
pub struct ScenarioOutcome {
    pub signal: MacroscopicSignal,
    pub echo: EchoReport,
    pub predicted: f64,
    pub efficiency: Option<f64>,
    pub classification: Option<AreaClassification>,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, CliError> {
    let setup = config.to_setup()?;
    let mut seq = setup.build_sequence().map_err(from_core)?;
    if let Some(t_end) = config.t_end_us {
        seq = seq.with_t_end(t_end).map_err(from_core)?;
    }
    let predicted = setup.predicted_echo_time().map_err(from_core)?;
    let signal = simulate_ensemble_parallel(&seq, &setup).map_err(from_core)?;
    let default_window = default_echo_window(&seq, predicted);
    let window = (
        config.echo_window_start_us.unwrap_or(default_window.0),
        config.echo_window_end_us.unwrap_or(default_window.1),
    );
    let echo = detect_echo(&signal, window).map_err(from_core)?;
    let efficiency = if config.with_reference {
        let reference = setup.reference_two_pulse();
        let ref_seq = reference.build_sequence().map_err(from_core)?;
        let ref_signal = simulate_ensemble_parallel(&ref_seq, &reference).map_err(from_core)?;
        let ref_pred = two_pulse_echo_time(reference.protocol.t_d, reference.protocol.t_r);
        let ref_echo = detect_echo(&ref_signal, default_echo_window(&ref_seq, ref_pred))
            .map_err(from_core)?;
        Some(signed_efficiency(&echo, &ref_echo).map_err(from_core)?)
    } else {
        None
    };
    let classification = (config.protocol == ProtocolKind::PhaseLocked).then(|| {
        classify_areas(
            setup.protocol.area_r,
            setup.protocol.area_b1,
            setup.protocol.area_b2,
            AREA_TOL,
        )
    });
    Ok(ScenarioOutcome { signal, echo, predicted, efficiency, classification })
}

pub struct RunArtifacts {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub svg: Option<PathBuf>,
    pub summary_value: RunSummary,
}

pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    svg: bool,
) -> Result<RunArtifacts, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let outcome = run_scenario(&config)?;
    let stem = scenario_stem(config_path);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let csv = out_dir.join(format!("{stem}_signal.csv"));
    output::write_signal_csv(&csv, &outcome.signal)?;
    let summary_value = run_summary(
        stem.clone(),
        &config,
        &outcome.echo,
        outcome.predicted,
        outcome.efficiency,
        outcome.classification,
    );
    let summary = out_dir.join(format!("{stem}_summary.json"));
    output::write_json(&summary, &summary_value)?;
    let svg = if svg {
        let path = out_dir.join(format!("{stem}_signal.svg"));
        plot::plot_signal_csv(&csv, &path, &stem)?;
        Some(path)
    } else {
        None
    };
    Ok(RunArtifacts { csv, summary, svg, summary_value })
}

pub fn parse_axis(axis: &str) -> Result<SweepAxis, CliError> {
    match axis {
        "r-delay" => Ok(SweepAxis::RDelay),
        "lock-duration" => Ok(SweepAxis::LockDuration),
        "b1-delay" => Ok(SweepAxis::B1Delay),
        "b2-area" => Ok(SweepAxis::B2Area),
        other => Err(CliError::Config(format!(
            "unknown --axis {other:?} (expected r-delay, lock-duration, b1-delay or b2-area)"
        ))),
    }
}

/// Sweep with points running on the rayon pool; rows keep the input order.
/// Semantics match `plecho_core::analysis::run_sweep`.
pub fn run_sweep_parallel(
    base: &SimSetup,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepTable, CoreError> {
    if base.kind == SequenceKind::TwoPulse && axis != SweepAxis::RDelay {
        return Err(CoreError::InvalidArgument(format!(
            "axis {} requires a phase-locked base configuration",
            axis.as_str()
        )));
    }
    let reference = base.reference_two_pulse().run()?.echo;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let setup = apply_axis(base, axis, value);
            let outcome = setup
                .run()
                .and_then(|out| {
                    let efficiency = signed_efficiency(&out.echo, &reference)?;
                    Ok(SweepPoint { echo: out.echo, efficiency })
                })
                .map_err(|e| format!("{e}"));
            SweepRow { value, outcome }
        })
        .collect();
    Ok(SweepTable { axis, reference, rows })
}

pub struct SweepArtifacts {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub svg: Option<PathBuf>,
    pub table: SweepTable,
}

pub fn cmd_sweep(
    config_path: &Path,
    axis: &str,
    values: &str,
    out_dir: &Path,
    svg: bool,
) -> Result<SweepArtifacts, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let setup = config.to_setup()?;
    let axis = parse_axis(axis)?;
    let values = parse_values(values)?;
    let table = run_sweep_parallel(&setup, axis, &values).map_err(from_core)?;
    for row in &table.rows {
        if let Err(reason) = &row.outcome {
            eprintln!("skipped value {}: {reason}", row.value);
        }
    }
    let stem = scenario_stem(config_path);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let csv = out_dir.join(format!("{stem}_sweep.csv"));
    output::write_sweep_csv(&csv, &table)?;
    let summary = out_dir.join(format!("{stem}_sweep_summary.json"));
    let skipped: Vec<SkippedPoint> = table
        .rows
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|reason| SkippedPoint { value: r.value, reason: reason.clone() })
        })
        .collect();
    output::write_json(
        &summary,
        &SweepSummary {
            scenario: stem.clone(),
            axis: axis.as_str(),
            reference_echo_time_us: table.reference.t_peak,
            reference_intensity: table.reference.intensity,
            points_total: table.rows.len(),
            points_written: table.rows.len() - skipped.len(),
            skipped,
            config: config.clone(),
        },
    )?;
    let svg = if svg {
        let path = out_dir.join(format!("{stem}_sweep.svg"));
        plot::plot_sweep_csv(&csv, &path, &format!("{stem} ({})", axis.as_str()))?;
        Some(path)
    } else {
        None
    };
    Ok(SweepArtifacts { csv, summary, svg, table })
}

/// Pure-algebra report: sequence validity, area classification, echo-time
/// prediction and phase matching. No simulation; NULL or INVERTED areas
/// still exit 0.
pub fn cmd_validate(config_path: &Path, out_dir: &Path) -> Result<ValidateReport, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let setup = config.to_setup()?;
    let kind: SequenceKind = config.protocol.into();
    let seq = match kind {
        SequenceKind::TwoPulse => build_two_pulse(&setup.protocol),
        SequenceKind::PhaseLocked => assemble_phase_locked(&setup.protocol),
    }
    .map_err(from_core)?;
    let report = validate_sequence(&seq, kind);
    let classification = (kind == SequenceKind::PhaseLocked).then(|| {
        classify_areas(
            setup.protocol.area_r,
            setup.protocol.area_b1,
            setup.protocol.area_b2,
            AREA_TOL,
        )
    });
    let predicted = match kind {
        SequenceKind::TwoPulse => Some(two_pulse_echo_time(setup.protocol.t_d, setup.protocol.t_r)),
        SequenceKind::PhaseLocked => predict_echo_time(
            setup.protocol.t_d,
            setup.protocol.t_r,
            setup.protocol.t_b1,
            setup.protocol.t_b2,
        )
        .ok(),
    };
    let phase_matching = match (config.k_d, config.k_b1, config.k_b2) {
        (Some(k_d), Some(k_b1), Some(k_b2)) => {
            let omegas_given = config.omega_d_mhz.is_some()
                && config.omega_b1_mhz.is_some()
                && config.omega_b2_mhz.is_some();
            match phase_match(
                k_d,
                k_b1,
                k_b2,
                config.omega_d_mhz.unwrap_or(0.0),
                config.omega_b1_mhz.unwrap_or(0.0),
                config.omega_b2_mhz.unwrap_or(0.0),
            ) {
                Ok(pm) => Some(PhaseMatchJson::new(pm, omegas_given)),
                Err(CoreError::DegenerateGeometry) => None,
                Err(e) => return Err(from_core(e)),
            }
        }
        _ => None,
    };
    let stem = scenario_stem(config_path);
    let json = ValidateReport {
        scenario: stem.clone(),
        sequence_valid: report.is_valid(),
        violations: report
            .violations
            .iter()
            .map(|v| ViolationJson { code: v.code.as_str(), message: v.message.clone() })
            .collect(),
        area_classification: classification.map(Into::into),
        predicted_echo_time_us: predicted,
        phase_matching,
        config,
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    output::write_json(&out_dir.join(format!("{stem}_validate.json")), &json)?;
    Ok(json)
}

/// Fits I(t) = I0·exp(−2t/τ) to two named CSV columns and prints the result.
pub fn cmd_fit(csv_path: &Path, columns: &str) -> Result<FitSummary, CliError> {
    let names: Vec<&str> = columns.split(',').map(str::trim).collect();
    if names.len() != 2 {
        return Err(CliError::Config(format!(
            "--columns must name exactly two columns, got {columns:?}"
        )));
    }
    let (header, cols) = output::read_csv_columns(csv_path)?;
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!(
                "{}: no column {name:?} (header: {})",
                csv_path.display(),
                header.join(",")
            ))
        })
    };
    let t = &cols[find(names[0])?];
    let i = &cols[find(names[1])?];
    let points: Vec<(f64, f64)> = t.iter().cloned().zip(i.iter().cloned()).collect();
    let fit = plecho_core::analysis::fit_decay(&points).map_err(|e| match e {
        CoreError::DegenerateFit(msg) => CliError::Fit(msg),
        other => CliError::Fit(format!("{other}")),
    })?;
    Ok(FitSummary {
        tau_us: fit.tau,
        i0: fit.i0,
        residual: fit.residual,
        spin_width_khz: plecho_core::analysis::spin_width(fit.tau),
        model: plecho_core::analysis::DecayFit::MODEL,
        points: points.len(),
    })
}
