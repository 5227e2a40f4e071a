//! Protocol construction and its algebraic laws: sequence builders from
//! start times and pulse areas, the echo-timing rule, the unlock-area
//! classification, and four-wave-mixing phase matching.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::error::CoreError;
use crate::model::{validate_sequence, Pulse, PulseSequence, SequenceKind, Transition};
use crate::Result;

/// Default tolerance for area classification, radians. Experimental areas
/// only roughly match the ideal multiples, so exact matching is useless.
pub const AREA_TOL: f64 = PI / 50.0;

/// Horizon margin past the expected echo, μs.
pub const ECHO_MARGIN_US: f64 = 5.0;

/// Protocol parameters: pulse start times, areas, and the shared Rabi
/// frequency from which durations are derived. Wave vectors and carrier
/// frequencies are optional and only feed the phase-matching report.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Start times, μs.
    pub t_d: f64,
    pub t_r: f64,
    pub t_b1: f64,
    pub t_b2: f64,
    /// Pulse areas, radians.
    pub area_d: f64,
    pub area_r: f64,
    pub area_b1: f64,
    pub area_b2: f64,
    /// Shared Rabi frequency, MHz; durations are area / (2π·rabi).
    pub rabi_freq: f64,
    /// Optional unit wave vectors for phase matching.
    pub k_d: Option<[f64; 3]>,
    pub k_b1: Option<[f64; 3]>,
    pub k_b2: Option<[f64; 3]>,
    /// Optional carrier frequencies, MHz.
    pub omega_d: Option<f64>,
    pub omega_b1: Option<f64>,
    pub omega_b2: Option<f64>,
}

impl ProtocolParams {
    /// Canonical timing/areas used by most runs: D(π/2), R(π), B1(π), B2(3π)
    /// at 5 MHz with starts 5, 10, 10.1, 55 μs.
    pub fn reference() -> Self {
        ProtocolParams {
            t_d: 5.0,
            t_r: 10.0,
            t_b1: 10.1,
            t_b2: 55.0,
            area_d: PI / 2.0,
            area_r: PI,
            area_b1: PI,
            area_b2: 3.0 * PI,
            rabi_freq: 5.0,
            k_d: None,
            k_b1: None,
            k_b2: None,
            omega_d: None,
            omega_b1: None,
            omega_b2: None,
        }
    }

    /// Duration of a pulse with the given area at the shared Rabi frequency.
    pub fn duration_of(&self, area: f64) -> f64 {
        area / (2.0 * PI * self.rabi_freq)
    }

    fn check_areas(&self, areas: &[(&str, f64)]) -> Result<()> {
        if !self.rabi_freq.is_finite() || self.rabi_freq <= 0.0 {
            return Err(CoreError::invalid(format!(
                "rabi_freq must be finite and > 0, got {}",
                self.rabi_freq
            )));
        }
        for (name, a) in areas {
            if !a.is_finite() || *a <= 0.0 {
                return Err(CoreError::invalid(format!("{name} must be > 0, got {a}")));
            }
        }
        Ok(())
    }

    fn pulse(&self, transition: Transition, t_start: f64, area: f64, label: &str) -> Pulse {
        Pulse {
            transition,
            t_start,
            duration: self.duration_of(area),
            rabi_freq: self.rabi_freq,
            phase: 0.0,
            wavevector: match label {
                "D" | "R" => self.k_d,
                "B1" => self.k_b1,
                "B2" => self.k_b2,
                _ => None,
            },
            label: label.to_string(),
        }
    }
}

/// Conventional echo time of a data/rephasing pair, 2·T_R − T_D.
pub fn two_pulse_echo_time(t_d: f64, t_r: f64) -> f64 {
    2.0 * t_r - t_d
}

/// Builds the conventional two-pulse sequence D, R on the data transition.
pub fn build_two_pulse(params: &ProtocolParams) -> Result<PulseSequence> {
    params.check_areas(&[("area_d", params.area_d), ("area_r", params.area_r)])?;
    // NaN start times fall through here and are rejected at construction.
    if params.t_d >= params.t_r {
        return Err(CoreError::invalid(format!(
            "start times must satisfy T_D < T_R, got ({}, {})",
            params.t_d, params.t_r
        )));
    }
    let pulses = vec![
        params.pulse(Transition::T13, params.t_d, params.area_d, "D"),
        params.pulse(Transition::T13, params.t_r, params.area_r, "R"),
    ];
    let t_end = two_pulse_echo_time(params.t_d, params.t_r) + ECHO_MARGIN_US;
    PulseSequence::new(pulses, t_end)
}

/// Assembles the four phase-locked pulses without protocol-shape validation,
/// so shape violations can be *reported* on the result. Only the sequence
/// type invariants (sorted, per-transition non-overlap, horizon) are
/// enforced.
pub fn assemble_phase_locked(params: &ProtocolParams) -> Result<PulseSequence> {
    params.check_areas(&[
        ("area_d", params.area_d),
        ("area_r", params.area_r),
        ("area_b1", params.area_b1),
        ("area_b2", params.area_b2),
    ])?;
    let mut pulses = vec![
        params.pulse(Transition::T13, params.t_d, params.area_d, "D"),
        params.pulse(Transition::T13, params.t_r, params.area_r, "R"),
        params.pulse(Transition::T23, params.t_b1, params.area_b1, "B1"),
        params.pulse(Transition::T23, params.t_b2, params.area_b2, "B2"),
    ];
    pulses.sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).expect("finite start times"));
    let t_echo = predict_echo_time(params.t_d, params.t_r, params.t_b1, params.t_b2)
        .unwrap_or_else(|_| two_pulse_echo_time(params.t_d.min(params.t_r), params.t_r));
    let last_end = pulses.iter().map(Pulse::t_end).fold(0.0, f64::max);
    let t_end = (t_echo + ECHO_MARGIN_US).max(last_end + ECHO_MARGIN_US);
    PulseSequence::new(pulses, t_end)
}

/// Builds the phase-locked sequence: D, R on the data transition, B1, B2 on
/// the auxiliary transition. Shape violations (including a lock pulse that
/// arrives after rephasing completes) are returned as
/// [`CoreError::SequenceInvalid`].
pub fn build_phase_locked(params: &ProtocolParams) -> Result<PulseSequence> {
    let starts = [params.t_d, params.t_r, params.t_b1, params.t_b2];
    if !starts.windows(2).all(|w| w[0] < w[1]) {
        return Err(CoreError::invalid(format!(
            "start times must be strictly increasing, got {starts:?}"
        )));
    }
    let seq = assemble_phase_locked(params)?;
    let report = validate_sequence(&seq, SequenceKind::PhaseLocked);
    if !report.is_valid() {
        return Err(CoreError::SequenceInvalid(report));
    }
    Ok(seq)
}

/// Echo arrival time of the phase-locked protocol:
/// T_E = T_B2 + (T_R − T_D) − (T_B1 − T_R).
///
/// Requires T_D < T_R ≤ T_B1 ≤ T_B2; with T_B1 = T_B2 = T_R the expression
/// collapses to the conventional 2·T_R − T_D.
pub fn predict_echo_time(t_d: f64, t_r: f64, t_b1: f64, t_b2: f64) -> Result<f64> {
    if !(t_d < t_r && t_r <= t_b1 && t_b1 <= t_b2) {
        return Err(CoreError::invalid(format!(
            "start times must satisfy T_D < T_R <= T_B1 <= T_B2, got ({t_d}, {t_r}, {t_b1}, {t_b2})"
        )));
    }
    Ok(t_b2 + (t_r - t_d) - (t_b1 - t_r))
}

/// Outcome of the pulse-area classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AreaCondition {
    /// Areas meet the full maximal-echo conditions.
    Maximal,
    /// Unlock area is an even multiple of π: the coherence stays parked and
    /// no echo is retrieved.
    Null,
    /// Unlock area lands on the sign-inverting branch: full-amplitude echo
    /// with inverted sign.
    Inverted,
    /// Anything else; the simulator is the oracle for intermediate areas.
    OffCondition,
}

impl AreaCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            AreaCondition::Maximal => "MAXIMAL",
            AreaCondition::Null => "NULL",
            AreaCondition::Inverted => "INVERTED",
            AreaCondition::OffCondition => "OFF_CONDITION",
        }
    }
}

/// Which maximal-area branch matched, with the integer indices of the
/// matched multiples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaximalRule {
    /// Φ_B1 = (4n−3)π paired with Φ_B2 = (4m−1)π.
    B1LowBranch { n: u32, m: u32 },
    /// Φ_B1 = (4n−1)π paired with Φ_B2 = (4m−3)π.
    B1HighBranch { n: u32, m: u32 },
}

/// Area classification plus the matched rule and the 4π unlock-sum check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaClassification {
    pub condition: AreaCondition,
    pub rule: Option<MaximalRule>,
    /// Whether Φ_B1 + Φ_B2 is a multiple of 4π (within tolerance).
    pub sum_multiple_of_4pi: bool,
}

/// Distance from `x` to the closest point `target + k·period`, k integer.
fn wrapped_distance(x: f64, target: f64, period: f64) -> f64 {
    let d = x - target;
    let r = d - (d / period).floor() * period; // r in [0, period)
    r.min(period - r)
}

fn congruent(x: f64, target: f64, period: f64, tol: f64) -> bool {
    wrapped_distance(x, target, period) <= tol
}

/// Classifies rephasing/lock/unlock pulse areas against the maximal-echo
/// rules.
///
/// MAXIMAL requires an odd-π rephasing area together with one of the two
/// lock/unlock branch pairings; NULL and INVERTED describe the unlock rule
/// alone (odd-π lock with an even-π or π-mod-4π unlock respectively), checked
/// after MAXIMAL. All congruences are evaluated within `tol`.
pub fn classify_areas(phi_r: f64, phi_b1: f64, phi_b2: f64, tol: f64) -> AreaClassification {
    let two_pi = 2.0 * PI;
    let four_pi = 4.0 * PI;
    let sum_multiple_of_4pi = congruent(phi_b1 + phi_b2, 0.0, four_pi, tol);

    let r_odd = congruent(phi_r, PI, two_pi, tol);
    let b1_low = congruent(phi_b1, PI, four_pi, tol); // (4n-3)π
    let b1_high = congruent(phi_b1, 3.0 * PI, four_pi, tol); // (4n-1)π
    let b2_low = congruent(phi_b2, PI, four_pi, tol);
    let b2_high = congruent(phi_b2, 3.0 * PI, four_pi, tol);

    let index_low = |phi: f64| ((phi / PI + 3.0) / 4.0).round().max(1.0) as u32;
    let index_high = |phi: f64| ((phi / PI + 1.0) / 4.0).round().max(1.0) as u32;

    if r_odd && b1_low && b2_high {
        return AreaClassification {
            condition: AreaCondition::Maximal,
            rule: Some(MaximalRule::B1LowBranch { n: index_low(phi_b1), m: index_high(phi_b2) }),
            sum_multiple_of_4pi,
        };
    }
    if r_odd && b1_high && b2_low {
        return AreaClassification {
            condition: AreaCondition::Maximal,
            rule: Some(MaximalRule::B1HighBranch { n: index_high(phi_b1), m: index_low(phi_b2) }),
            sum_multiple_of_4pi,
        };
    }
    let b1_odd = congruent(phi_b1, PI, two_pi, tol);
    if b1_odd && congruent(phi_b2, 0.0, two_pi, tol) {
        return AreaClassification {
            condition: AreaCondition::Null,
            rule: None,
            sum_multiple_of_4pi,
        };
    }
    if b1_odd && b2_low {
        return AreaClassification {
            condition: AreaCondition::Inverted,
            rule: None,
            sum_multiple_of_4pi,
        };
    }
    AreaClassification { condition: AreaCondition::OffCondition, rule: None, sum_multiple_of_4pi }
}

/// Four-wave-mixing output of the D/B1/B2 geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseMatch {
    /// Echo wave vector k_E = k_D − k_B1 + k_B2.
    pub k_e: [f64; 3],
    /// Echo carrier ω_E = ω_D − ω_B1 + ω_B2, same unit as the inputs.
    pub omega_e: f64,
    /// −(k_E·k_D)/|k_E|; 1.0 means perfectly backward along the data beam.
    pub backwardness: f64,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn check_unit(name: &str, v: [f64; 3]) -> Result<()> {
    let n = norm3(v);
    if (n - 1.0).abs() > crate::model::UNIT_NORM_TOL {
        return Err(CoreError::invalid(format!("{name} must be a unit vector, |{name}| = {n}")));
    }
    Ok(())
}

/// Computes the echo wave vector, carrier and backwardness from the input
/// geometry. All k's must be unit vectors.
pub fn phase_match(
    k_d: [f64; 3],
    k_b1: [f64; 3],
    k_b2: [f64; 3],
    omega_d: f64,
    omega_b1: f64,
    omega_b2: f64,
) -> Result<PhaseMatch> {
    check_unit("k_d", k_d)?;
    check_unit("k_b1", k_b1)?;
    check_unit("k_b2", k_b2)?;
    let k_e = [
        k_d[0] - k_b1[0] + k_b2[0],
        k_d[1] - k_b1[1] + k_b2[1],
        k_d[2] - k_b1[2] + k_b2[2],
    ];
    let n = norm3(k_e);
    if n < 1e-12 {
        return Err(CoreError::DegenerateGeometry);
    }
    let dot = k_e[0] * k_d[0] + k_e[1] * k_d[1] + k_e[2] * k_d[2];
    Ok(PhaseMatch {
        k_e,
        omega_e: omega_d - omega_b1 + omega_b2,
        backwardness: -dot / n,
    })
}
