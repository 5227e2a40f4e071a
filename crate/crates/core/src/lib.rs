//! Density-matrix simulation of phase-locked photon echoes in a three-level
//! Λ-system over an inhomogeneously broadened ensemble.
//!
//! The crate models one optical "data" transition |1⟩–|3⟩ and one auxiliary
//! transition |2⟩–|3⟩ driven by rectangular pulses. A rephasing pulse on the
//! data leg produces a conventional photon echo; a π pulse on the auxiliary
//! leg parks the optical coherence in the spin coherence ρ12 (locking), and a
//! later unlock pulse resumes rephasing, delaying the echo.
//!
//! # Unit conventions
//!
//! All *configured* frequencies are ordinary (non-angular):
//!
//! - Rabi frequencies and detunings in MHz,
//! - decay rates in kHz,
//! - times in μs.
//!
//! The equations of motion use angular values, obtained by multiplying by 2π
//! (and by 2π·10⁻³ for kHz rates). A rectangular pulse of Rabi frequency
//! Ω MHz and duration T μs has area Φ = 2π·Ω·T radians, and a resonant pulse
//! on a fresh transition inverts population as sin²(Φ/2).
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches the float backend and error-trait plumbing.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod integrator;
pub mod model;
pub mod protocol;

pub use error::CoreError;
pub use model::{
    gaussian_grid, pulse_area, validate_sequence, AtomGroup, DensityMatrix, EnsembleGrid, Pulse,
    PulseSequence, RelaxationParams, SequenceKind, Transition, ValidationReport, Violation,
    ViolationCode,
};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;

/// `Result` alias with the crate error type.
pub type Result<T, E = error::CoreError> = core::result::Result<T, E>;
