//! Domain types shared by every layer: the single-atom density matrix,
//! relaxation rates, pulses and pulse sequences, and the detuning grid that
//! represents the inhomogeneously broadened ensemble.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use crate::error::CoreError;
use crate::{C64, Result};

/// Tolerance on the trace of a density matrix.
pub const TRACE_TOL: f64 = 1e-9;
/// Tolerance on diagonal-entry bounds.
pub const DIAG_TOL: f64 = 1e-12;
/// Tolerance on unit-vector norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Tolerance on grid-weight normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// State of one atom group: a 3×3 Hermitian density matrix.
///
/// Only the independent components are stored (three real populations and the
/// three upper-triangle coherences), so Hermiticity holds by construction.
/// Level labels: |1⟩ and |2⟩ are the ground/spin pair, |3⟩ the shared excited
/// state; ρ13 is the data-transition coherence whose ensemble sum is the
/// emitted signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho12: C64,
    pub rho13: C64,
    pub rho23: C64,
}

impl DensityMatrix {
    /// All population in |1⟩, no coherence.
    pub fn ground() -> Self {
        DensityMatrix {
            rho11: 1.0,
            rho22: 0.0,
            rho33: 0.0,
            rho12: C64::new(0.0, 0.0),
            rho13: C64::new(0.0, 0.0),
            rho23: C64::new(0.0, 0.0),
        }
    }

    /// Zero matrix; useful as an accumulator for derivatives.
    pub fn zero() -> Self {
        DensityMatrix {
            rho11: 0.0,
            rho22: 0.0,
            rho33: 0.0,
            rho12: C64::new(0.0, 0.0),
            rho13: C64::new(0.0, 0.0),
            rho23: C64::new(0.0, 0.0),
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho11 + self.rho22 + self.rho33
    }

    /// |tr ρ − 1|.
    pub fn trace_defect(&self) -> f64 {
        (self.trace() - 1.0).abs()
    }

    /// Hermiticity defect of the stored representation. The upper-triangle
    /// storage makes ρ(k,j) = conj(ρ(j,k)) an identity, so this is zero by
    /// construction; it exists so callers can assert the invariant uniformly.
    pub fn hermiticity_defect(&self) -> f64 {
        0.0
    }

    /// Element (j, k) of the full matrix, 1-based indices.
    pub fn element(&self, j: usize, k: usize) -> C64 {
        match (j, k) {
            (1, 1) => C64::new(self.rho11, 0.0),
            (2, 2) => C64::new(self.rho22, 0.0),
            (3, 3) => C64::new(self.rho33, 0.0),
            (1, 2) => self.rho12,
            (1, 3) => self.rho13,
            (2, 3) => self.rho23,
            (2, 1) => self.rho12.conj(),
            (3, 1) => self.rho13.conj(),
            (3, 2) => self.rho23.conj(),
            _ => panic!("density-matrix index out of range: ({j}, {k})"),
        }
    }

    /// Full 3×3 complex matrix (row-major), reconstructed from the triangle.
    pub fn full(&self) -> [[C64; 3]; 3] {
        [
            [self.element(1, 1), self.element(1, 2), self.element(1, 3)],
            [self.element(2, 1), self.element(2, 2), self.element(2, 3)],
            [self.element(3, 1), self.element(3, 2), self.element(3, 3)],
        ]
    }

    /// Checks trace, diagonal bounds and finiteness; returns the first
    /// violated invariant as a message.
    pub fn physicality_violation(&self) -> Option<String> {
        for (name, p) in [
            ("rho11", self.rho11),
            ("rho22", self.rho22),
            ("rho33", self.rho33),
        ] {
            if !p.is_finite() {
                return Some(format!("{name} is not finite"));
            }
            if !(-DIAG_TOL..=1.0 + DIAG_TOL).contains(&p) {
                return Some(format!("{name} = {p} outside [0, 1]"));
            }
        }
        for (name, c) in [
            ("rho12", self.rho12),
            ("rho13", self.rho13),
            ("rho23", self.rho23),
        ] {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Some(format!("{name} is not finite"));
            }
        }
        let defect = self.trace_defect();
        if defect > TRACE_TOL {
            return Some(format!("trace defect {defect:.3e} exceeds {TRACE_TOL:.0e}"));
        }
        None
    }
}

/// Relaxation rates, all in kHz (ordinary frequencies).
///
/// `gamma_pop_*` are population decay channels (|3⟩→|1⟩, |3⟩→|2⟩, |2⟩→|1⟩);
/// `gamma_13`/`gamma_23`/`gamma_12` are the corresponding phase (coherence)
/// decay rates. Defaults are all zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelaxationParams {
    pub gamma_pop_31: f64,
    pub gamma_pop_32: f64,
    pub gamma_pop_21: f64,
    pub gamma_13: f64,
    pub gamma_23: f64,
    pub gamma_12: f64,
}

impl RelaxationParams {
    pub const NONE: RelaxationParams = RelaxationParams {
        gamma_pop_31: 0.0,
        gamma_pop_32: 0.0,
        gamma_pop_21: 0.0,
        gamma_13: 0.0,
        gamma_23: 0.0,
        gamma_12: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("gamma_pop_31", self.gamma_pop_31),
            ("gamma_pop_32", self.gamma_pop_32),
            ("gamma_pop_21", self.gamma_pop_21),
            ("gamma_13", self.gamma_13),
            ("gamma_23", self.gamma_23),
            ("gamma_12", self.gamma_12),
        ];
        for (name, r) in rates {
            if !r.is_finite() || r < 0.0 {
                return Err(CoreError::invalid(format!(
                    "relaxation rate {name} must be finite and >= 0, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Which optical leg a pulse drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transition {
    /// Data transition |1⟩–|3⟩ (data and rephasing pulses).
    T13,
    /// Auxiliary transition |2⟩–|3⟩ (locking and unlocking pulses).
    T23,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::T13 => write!(f, "1-3"),
            Transition::T23 => write!(f, "2-3"),
        }
    }
}

/// One rectangular driving interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Pulse {
    pub transition: Transition,
    /// Start time, μs.
    pub t_start: f64,
    /// Duration, μs; must be > 0.
    pub duration: f64,
    /// Rabi frequency, MHz (ordinary, non-angular).
    pub rabi_freq: f64,
    /// Carrier phase, radians.
    pub phase: f64,
    /// Unit propagation direction; only used by phase matching.
    pub wavevector: Option<[f64; 3]>,
    /// Free-text role label (D, R, B1, B2, ...).
    pub label: String,
}

impl Pulse {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_start.is_finite() || !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(CoreError::invalid(format!(
                "pulse {}: duration must be > 0 (got {})",
                self.label, self.duration
            )));
        }
        if !self.rabi_freq.is_finite() || self.rabi_freq < 0.0 {
            return Err(CoreError::invalid(format!(
                "pulse {}: rabi_freq must be >= 0 (got {})",
                self.label, self.rabi_freq
            )));
        }
        if !self.phase.is_finite() {
            return Err(CoreError::invalid(format!("pulse {}: non-finite phase", self.label)));
        }
        if let Some(k) = self.wavevector {
            let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(CoreError::invalid(format!(
                    "pulse {}: wavevector norm {norm} is not 1",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Area of a rectangular pulse: ∫Ω dt in angular units, i.e. 2π·Ω·T radians.
pub fn pulse_area(p: &Pulse) -> f64 {
    2.0 * PI * p.rabi_freq * p.duration
}

/// An ordered, non-overlapping (per transition) list of pulses plus the
/// simulation horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    t_end: f64,
}

impl PulseSequence {
    /// Validates ordering, per-transition overlap and horizon coverage.
    pub fn new(pulses: Vec<Pulse>, t_end: f64) -> Result<Self> {
        for p in &pulses {
            p.validate()?;
        }
        for pair in pulses.windows(2) {
            if pair[1].t_start < pair[0].t_start {
                return Err(CoreError::invalid(format!(
                    "pulses must be sorted by start time ({} at {} before {} at {})",
                    pair[1].label, pair[1].t_start, pair[0].label, pair[0].t_start
                )));
            }
        }
        for (i, a) in pulses.iter().enumerate() {
            for b in pulses.iter().skip(i + 1) {
                if a.transition == b.transition && b.t_start < a.t_end() && a.t_start < b.t_end() {
                    return Err(CoreError::invalid(format!(
                        "pulses {} and {} overlap on transition {}",
                        a.label, b.label, a.transition
                    )));
                }
            }
        }
        let last = pulses.iter().map(Pulse::t_end).fold(0.0, f64::max);
        if !t_end.is_finite() || t_end < last {
            return Err(CoreError::invalid(format!(
                "t_end = {t_end} does not cover the last pulse end at {last}"
            )));
        }
        Ok(PulseSequence { pulses, t_end })
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// End time of the last pulse, or 0 for an empty sequence.
    pub fn last_pulse_end(&self) -> f64 {
        self.pulses.iter().map(Pulse::t_end).fold(0.0, f64::max)
    }

    /// Same sequence with an extended horizon.
    pub fn with_t_end(self, t_end: f64) -> Result<Self> {
        PulseSequence::new(self.pulses, t_end)
    }
}

/// One detuning group of the ensemble.
///
/// The detuning applies identically to both optical transitions (the spin
/// transition is treated as homogeneous), so the ρ12 detuning term vanishes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomGroup {
    /// Group detuning, MHz (ordinary frequency).
    pub detuning: f64,
    /// Probability mass of the group.
    pub weight: f64,
}

/// Detuning groups with normalized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleGrid {
    groups: Vec<AtomGroup>,
}

impl EnsembleGrid {
    /// Validates strictly increasing detunings, non-negative weights and unit
    /// total weight.
    pub fn new(groups: Vec<AtomGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(CoreError::invalid("ensemble grid must be non-empty"));
        }
        let mut sum = 0.0;
        for g in &groups {
            if !g.detuning.is_finite() || !g.weight.is_finite() || g.weight < 0.0 {
                return Err(CoreError::invalid(format!(
                    "bad atom group: detuning {}, weight {}",
                    g.detuning, g.weight
                )));
            }
            sum += g.weight;
        }
        for pair in groups.windows(2) {
            if pair[1].detuning <= pair[0].detuning {
                return Err(CoreError::invalid("grid detunings must be strictly increasing"));
            }
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::invalid(format!(
                "grid weights sum to {sum}, expected 1"
            )));
        }
        Ok(EnsembleGrid { groups })
    }

    pub fn groups(&self) -> &[AtomGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Builds a symmetric Gaussian detuning grid.
///
/// Detunings are δᵢ = (i − (count−1)/2)·spacing; weights follow
/// exp(−4 ln2 · δ²/fwhm²), normalized to unit sum. Negative-side weights are
/// mirrored from the positive side rather than recomputed, so
/// weight(−δ) == weight(δ) holds exactly.
pub fn gaussian_grid(fwhm: f64, spacing: f64, count: usize) -> Result<EnsembleGrid> {
    if count == 0 || count.is_multiple_of(2) {
        return Err(CoreError::invalid(format!(
            "grid count must be odd and positive, got {count}"
        )));
    }
    if !fwhm.is_finite() || fwhm <= 0.0 {
        return Err(CoreError::invalid(format!("grid fwhm must be finite and > 0, got {fwhm}")));
    }
    if !spacing.is_finite() || spacing <= 0.0 {
        return Err(CoreError::invalid(format!(
            "grid spacing must be finite and > 0, got {spacing}"
        )));
    }
    let half = count / 2;
    let coeff = 4.0 * f64::ln(2.0) / (fwhm * fwhm);
    let mut raw = Vec::with_capacity(count);
    // Positive side first, then mirror.
    let positive: Vec<f64> = (0..=half)
        .map(|i| {
            let delta = i as f64 * spacing;
            (-coeff * delta * delta).exp()
        })
        .collect();
    for i in (1..=half).rev() {
        raw.push((-(i as f64) * spacing, positive[i]));
    }
    for (i, w) in positive.iter().enumerate() {
        raw.push((i as f64 * spacing, *w));
    }
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    let groups = raw
        .into_iter()
        .map(|(detuning, w)| AtomGroup { detuning, weight: w / total })
        .collect();
    EnsembleGrid::new(groups)
}

/// Protocol shapes understood by the validator and builders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceKind {
    /// Data + rephasing pulse on the data transition.
    TwoPulse,
    /// Data + rephasing on the data transition, lock + unlock on the
    /// auxiliary transition.
    PhaseLocked,
}

/// Machine-readable violation codes produced by [`validate_sequence`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationCode {
    WrongPulseCount,
    WrongTransition,
    OrderViolation,
    /// The lock pulse starts at or after rephasing completes:
    /// (T_B1 − T_R) ≥ (T_R − T_D).
    LockTooLate,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::WrongPulseCount => "WRONG_PULSE_COUNT",
            ViolationCode::WrongTransition => "WRONG_TRANSITION",
            ViolationCode::OrderViolation => "ORDER_VIOLATION",
            ViolationCode::LockTooLate => "LOCK_TOO_LATE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One validation finding.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

/// Outcome of protocol-shape validation; empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.code, v.message)?;
        }
        Ok(())
    }
}

/// Checks that a sequence has the shape required by a protocol.
///
/// Violations are collected and reported, never thrown. Roles are assigned by
/// position within each transition: on the data leg the first pulse is D and
/// the second R; on the auxiliary leg the first is B1 and the second B2.
pub fn validate_sequence(seq: &PulseSequence, kind: SequenceKind) -> ValidationReport {
    let mut violations = Vec::new();
    let t13: Vec<&Pulse> = seq.pulses().iter().filter(|p| p.transition == Transition::T13).collect();
    let t23: Vec<&Pulse> = seq.pulses().iter().filter(|p| p.transition == Transition::T23).collect();

    let mut push = |code, message: String| violations.push(Violation { code, message });

    if t13.len() != 2 {
        push(
            ViolationCode::WrongPulseCount,
            format!("expected exactly 2 pulses on the data transition, found {}", t13.len()),
        );
    } else if t13[0].t_start >= t13[1].t_start {
        push(
            ViolationCode::OrderViolation,
            format!(
                "data pulse at {} must precede rephasing pulse at {}",
                t13[0].t_start, t13[1].t_start
            ),
        );
    }

    match kind {
        SequenceKind::TwoPulse => {
            if !t23.is_empty() {
                push(
                    ViolationCode::WrongTransition,
                    format!("two-pulse protocol must not drive the auxiliary transition ({} pulses found)", t23.len()),
                );
            }
        }
        SequenceKind::PhaseLocked => {
            if t23.len() != 2 {
                push(
                    ViolationCode::WrongPulseCount,
                    format!(
                        "expected exactly 2 pulses on the auxiliary transition, found {}",
                        t23.len()
                    ),
                );
            }
            if t13.len() == 2 && t23.len() == 2 {
                let (t_d, t_r) = (t13[0].t_start, t13[1].t_start);
                let (t_b1, t_b2) = (t23[0].t_start, t23[1].t_start);
                if !(t_d < t_r && t_r < t_b1 && t_b1 < t_b2) {
                    push(
                        ViolationCode::OrderViolation,
                        format!("start times must satisfy T_D < T_R < T_B1 < T_B2, got ({t_d}, {t_r}, {t_b1}, {t_b2})"),
                    );
                } else if t_b1 - t_r >= t_r - t_d {
                    push(
                        ViolationCode::LockTooLate,
                        format!(
                            "lock delay T_B1 - T_R = {} must be smaller than the storage interval T_R - T_D = {}",
                            t_b1 - t_r,
                            t_r - t_d
                        ),
                    );
                }
            }
        }
    }

    ValidationReport { violations }
}
