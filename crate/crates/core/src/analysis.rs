//! Echo extraction and protocol-level analysis: peak detection, signed
//! retrieval efficiency, exponential decay fits, spin-width conversion, and
//! the standard parameter sweeps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::ensemble::{simulate_ensemble, MacroscopicSignal};
use crate::error::CoreError;
use crate::integrator::Sampling;
use crate::model::{EnsembleGrid, PulseSequence, RelaxationParams, SequenceKind};
use crate::protocol::{
    build_phase_locked, build_two_pulse, predict_echo_time, two_pulse_echo_time, ProtocolParams,
};
use crate::{C64, Result};

/// Detected echo: refined peak time, complex amplitude and intensity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoReport {
    /// Peak time, μs, refined by quadratic interpolation.
    pub t_peak: f64,
    /// Complex P at the peak.
    pub amplitude: C64,
    /// |amplitude|².
    pub intensity: f64,
    /// Search window that produced this report, μs.
    pub window: (f64, f64),
    /// The maximum sat on a window edge; no interpolation was applied.
    pub edge_peak: bool,
}

/// Vertex abscissa of the parabola through three points.
pub fn quadratic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    let num = (y0 - y1) * (x2 - x1) * (x2 - x1) - (y2 - y1) * (x1 - x0) * (x1 - x0);
    let den = (y0 - y1) * (x2 - x1) + (y2 - y1) * (x1 - x0);
    if den.abs() < 1e-300 {
        return x1;
    }
    x1 + 0.5 * num / den
}

fn lagrange3(x: f64, xs: [f64; 3], ys: [C64; 3]) -> C64 {
    let l0 = (x - xs[1]) * (x - xs[2]) / ((xs[0] - xs[1]) * (xs[0] - xs[2]));
    let l1 = (x - xs[0]) * (x - xs[2]) / ((xs[1] - xs[0]) * (xs[1] - xs[2]));
    let l2 = (x - xs[0]) * (x - xs[1]) / ((xs[2] - xs[0]) * (xs[2] - xs[1]));
    ys[0] * l0 + ys[1] * l1 + ys[2] * l2
}

/// Finds the |P| maximum inside `window` and refines peak time and amplitude
/// with a three-point quadratic.
///
/// The window must lie inside the sampled times and should exclude all drive
/// pulse intervals (see [`default_echo_window`]). A maximum on the window
/// edge is reported unrefined with `edge_peak` set.
pub fn detect_echo(sig: &MacroscopicSignal, window: (f64, f64)) -> Result<EchoReport> {
    let (a, b) = window;
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(CoreError::invalid(format!("empty echo window [{a}, {b}]")));
    }
    let lo = sig.times.partition_point(|&t| t < a);
    let hi = sig.times.partition_point(|&t| t <= b);
    if lo >= hi {
        return Err(CoreError::invalid(format!(
            "echo window [{a}, {b}] contains no samples"
        )));
    }
    let mut best = lo;
    let mut best_val = sig.p[lo].norm();
    for i in lo..hi {
        let v = sig.p[i].norm();
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let edge_peak = best == lo || best + 1 == hi;
    if edge_peak {
        return Ok(EchoReport {
            t_peak: sig.times[best],
            amplitude: sig.p[best],
            intensity: sig.p[best].norm_sqr(),
            window,
            edge_peak,
        });
    }
    let xs = [sig.times[best - 1], sig.times[best], sig.times[best + 1]];
    let ys = [sig.p[best - 1].norm(), sig.p[best].norm(), sig.p[best + 1].norm()];
    let mut t_peak = quadratic_vertex((xs[0], ys[0]), (xs[1], ys[1]), (xs[2], ys[2]));
    if !(xs[0]..=xs[2]).contains(&t_peak) {
        t_peak = xs[1];
    }
    let amplitude = lagrange3(t_peak, xs, [sig.p[best - 1], sig.p[best], sig.p[best + 1]]);
    Ok(EchoReport {
        t_peak,
        amplitude,
        intensity: amplitude.norm_sqr(),
        window,
        edge_peak,
    })
}

/// Default echo search window for a sequence with predicted echo `t_pred`:
/// starts at the last pulse end plus a guard of up to 0.5 μs that excludes
/// drive transients and free-induction tails. The guard shrinks when the
/// predicted echo follows the last pulse almost immediately (a late lock
/// pulse pushes the echo right against the unlock pulse).
pub fn default_echo_window(seq: &PulseSequence, t_pred: f64) -> (f64, f64) {
    let last_end = seq.last_pulse_end();
    let guard = (t_pred - last_end - 0.5).clamp(0.0, 0.5);
    (last_end + guard, seq.t_end())
}

/// Phase-referenced projection of one echo onto another:
/// Re[test · conj(reference)] / |reference|². +1 means an equal echo, −1 an
/// inverted echo of equal magnitude.
pub fn signed_efficiency(test: &EchoReport, reference: &EchoReport) -> Result<f64> {
    let denom = reference.amplitude.norm_sqr();
    if denom == 0.0 {
        return Err(CoreError::ZeroReference);
    }
    Ok((test.amplitude * reference.amplitude.conj()).re / denom)
}

/// Log-linear fit of I(t) = I0·exp(−2t/τ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    /// Decay constant, μs.
    pub tau: f64,
    /// Fitted intensity at t = 0.
    pub i0: f64,
    /// RMS residual of the log-intensity fit.
    pub residual: f64,
}

impl DecayFit {
    pub const MODEL: &'static str = "I(t) = I0*exp(-2t/tau)";
}

/// Least squares on log I vs t with slope −2/τ.
///
/// Requires at least three points with positive intensities and a non-zero
/// time spread; a non-decaying slope cannot produce a positive τ and is
/// reported as a degenerate fit.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(CoreError::invalid(format!(
            "decay fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(t, i) in points {
        if !t.is_finite() || !i.is_finite() {
            return Err(CoreError::invalid("decay fit points must be finite"));
        }
        if i <= 0.0 {
            return Err(CoreError::invalid(format!(
                "decay fit needs positive intensities, got I({t}) = {i}"
            )));
        }
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, i) in points {
        let dt = t - mean_t;
        sxx += dt * dt;
        sxy += dt * (i.ln() - mean_y);
    }
    if sxx == 0.0 {
        return Err(CoreError::invalid("decay fit needs distinct sample times"));
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(CoreError::DegenerateFit(format!(
            "intensities do not decay (slope {slope:.3e})"
        )));
    }
    let intercept = mean_y - slope * mean_t;
    let mut ss = 0.0;
    for &(t, i) in points {
        let r = i.ln() - (intercept + slope * t);
        ss += r * r;
    }
    Ok(DecayFit {
        tau: -2.0 / slope,
        i0: intercept.exp(),
        residual: (ss / n).sqrt(),
    })
}

/// Spin width implied by a lock-decay constant: 1/(π·τ), returned in kHz for
/// τ in μs.
pub fn spin_width(tau_us: f64) -> f64 {
    1e3 / (PI * tau_us)
}

/// One full simulation setup: protocol kind and parameters, grid, relaxation
/// and sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSetup {
    pub kind: SequenceKind,
    pub protocol: ProtocolParams,
    pub grid: EnsembleGrid,
    pub relax: RelaxationParams,
    pub sampling: Sampling,
}

/// Result of running a setup: the ensemble signal, the detected echo and the
/// timing-law prediction.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub signal: MacroscopicSignal,
    pub echo: EchoReport,
    pub predicted_echo_time: f64,
    pub window: (f64, f64),
}

impl SimSetup {
    /// Builds the pulse sequence for this setup.
    pub fn build_sequence(&self) -> Result<PulseSequence> {
        match self.kind {
            SequenceKind::TwoPulse => build_two_pulse(&self.protocol),
            SequenceKind::PhaseLocked => build_phase_locked(&self.protocol),
        }
    }

    /// Timing-law echo prediction for this setup.
    pub fn predicted_echo_time(&self) -> Result<f64> {
        match self.kind {
            SequenceKind::TwoPulse => Ok(two_pulse_echo_time(self.protocol.t_d, self.protocol.t_r)),
            SequenceKind::PhaseLocked => predict_echo_time(
                self.protocol.t_d,
                self.protocol.t_r,
                self.protocol.t_b1,
                self.protocol.t_b2,
            ),
        }
    }

    /// The conventional two-pulse reduction of this setup (same D/R, grid,
    /// relaxation and sampling), used as the efficiency reference.
    pub fn reference_two_pulse(&self) -> SimSetup {
        SimSetup { kind: SequenceKind::TwoPulse, ..self.clone() }
    }

    /// Builds, simulates and detects the echo in the default window.
    pub fn run(&self) -> Result<RunOutcome> {
        let seq = self.build_sequence()?;
        let t_pred = self.predicted_echo_time()?;
        let signal = simulate_ensemble(&seq, &self.grid, &self.relax, &self.sampling)?;
        let window = default_echo_window(&seq, t_pred);
        let echo = detect_echo(&signal, window)?;
        Ok(RunOutcome { signal, echo, predicted_echo_time: t_pred, window })
    }
}

/// Parameter swept by [`run_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Rephasing-pulse start time T_R, μs.
    RDelay,
    /// Lock duration T_B2 − T_B1, μs.
    LockDuration,
    /// Lock delay T_B1 − T_R, μs (lock length kept fixed).
    B1Delay,
    /// Unlock pulse area, radians.
    B2Area,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::RDelay => "r-delay",
            SweepAxis::LockDuration => "lock-duration",
            SweepAxis::B1Delay => "b1-delay",
            SweepAxis::B2Area => "b2-area",
        }
    }
}

/// Sweep-point payload: the detected echo and its efficiency against the
/// sweep reference.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    pub echo: EchoReport,
    pub efficiency: f64,
}

/// One sweep row. Invalid configurations are recorded as skipped, not fatal.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Result<SweepPoint, String>,
}

/// Sweep result table, ordered by input value order.
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axis: SweepAxis,
    /// Echo of the matching conventional two-pulse configuration.
    pub reference: EchoReport,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// (value, intensity) pairs of the successful rows, for decay fitting.
    pub fn decay_points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|p| (r.value, p.echo.intensity)))
            .collect()
    }
}

/// Applies one sweep value to a copy of the base setup.
pub fn apply_axis(base: &SimSetup, axis: SweepAxis, value: f64) -> SimSetup {
    let mut setup = base.clone();
    match axis {
        SweepAxis::RDelay => setup.protocol.t_r = value,
        SweepAxis::LockDuration => setup.protocol.t_b2 = setup.protocol.t_b1 + value,
        SweepAxis::B1Delay => {
            let lock = base.protocol.t_b2 - base.protocol.t_b1;
            setup.protocol.t_b1 = base.protocol.t_r + value;
            setup.protocol.t_b2 = setup.protocol.t_b1 + lock;
        }
        SweepAxis::B2Area => setup.protocol.area_b2 = value,
    }
    setup
}

/// Runs one simulation per sweep value against a shared two-pulse reference.
///
/// The reference echo is computed once from the base parameters. Rows keep
/// the input order; per-point validation or integration failures are
/// recorded in the row rather than aborting the sweep.
pub fn run_sweep(base: &SimSetup, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if base.kind == SequenceKind::TwoPulse && axis != SweepAxis::RDelay {
        return Err(CoreError::invalid(format!(
            "axis {} requires a phase-locked base configuration",
            axis.as_str()
        )));
    }
    let reference = base.reference_two_pulse().run()?.echo;
    let rows = values
        .iter()
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

/// Interior local maxima of y(x) at or above `threshold`, refined by the
/// three-point quadratic vertex. Used to locate efficiency maxima in area
/// sweeps.
pub fn local_maxima(xs: &[f64], ys: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        if ys[i] >= threshold && ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
            out.push(quadratic_vertex((xs[i - 1], ys[i - 1]), (xs[i], ys[i]), (xs[i + 1], ys[i + 1])));
        }
    }
    out
}
