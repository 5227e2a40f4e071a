//! Ensemble runs: propagate every detuning group through a sequence and
//! reduce the weighted coherences into the macroscopic signal
//! P(t) = Σᵢ wᵢ ρ13⁽ⁱ⁾(t).
//!
//! The reduction is performed in ascending detuning order with a fixed
//! accumulation sequence, so results are byte-identical no matter how the
//! per-group propagations were scheduled. Group propagation itself is pure
//! and may run on any number of concurrent workers; workers should produce
//! [`GroupSignal`]s and feed them to a [`SignalAccumulator`] in grid order.

use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::integrator::{propagate_sequence, Sampling, Trajectory};
use crate::model::{DensityMatrix, EnsembleGrid, PulseSequence, RelaxationParams, Transition};
use crate::{C64, Result};

/// Weighted ensemble coherence on the data transition plus optional averaged
/// populations.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroscopicSignal {
    /// Sample times, μs.
    pub times: Vec<f64>,
    /// P(t) = Σᵢ wᵢ ρ13⁽ⁱ⁾(t). |P| never exceeds 1/2.
    pub p: Vec<C64>,
    /// |P(t)|².
    pub intensity: Vec<f64>,
    /// Ensemble-averaged (ρ11, ρ22, ρ33) when requested.
    pub populations: Option<[Vec<f64>; 3]>,
}

impl MacroscopicSignal {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |P| inside [a, b] (inclusive), ignoring samples outside.
    pub fn max_abs_in(&self, a: f64, b: f64) -> f64 {
        self.times
            .iter()
            .zip(self.p.iter())
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(_, p)| p.norm())
            .fold(0.0, f64::max)
    }
}

/// Per-group contribution to the macroscopic signal: unweighted ρ13 samples
/// plus optionally the populations.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSignal {
    pub rho13: Vec<C64>,
    pub populations: Option<[Vec<f64>; 3]>,
}

/// Extracts the reducible signal from a trajectory.
pub fn group_signal(traj: &Trajectory, record_populations: bool) -> GroupSignal {
    let rho13 = traj.states.iter().map(|s| s.rho13).collect();
    let populations = record_populations.then(|| {
        [
            traj.states.iter().map(|s| s.rho11).collect(),
            traj.states.iter().map(|s| s.rho22).collect(),
            traj.states.iter().map(|s| s.rho33).collect(),
        ]
    });
    GroupSignal { rho13, populations }
}

/// Propagates one group from the ground state.
pub fn simulate_group(
    seq: &PulseSequence,
    detuning_mhz: f64,
    relax: &RelaxationParams,
    sampling: &Sampling,
) -> Result<Trajectory> {
    propagate_sequence(&DensityMatrix::ground(), seq, detuning_mhz, relax, sampling).map_err(
        |e| match e {
            CoreError::IntegrationDiverged { t_us, message } => CoreError::IntegrationDiverged {
                t_us,
                message: format!("group at detuning {detuning_mhz} MHz: {message}"),
            },
            other => other,
        },
    )
}

/// Fixed-order weighted accumulator for group signals.
///
/// Feeding groups in ascending detuning order reproduces the sequential
/// reduction exactly, independent of how the signals were computed.
pub struct SignalAccumulator {
    times: Vec<f64>,
    p: Vec<C64>,
    populations: Option<[Vec<f64>; 3]>,
}

impl SignalAccumulator {
    pub fn new(times: Vec<f64>, record_populations: bool) -> Self {
        let n = times.len();
        let zero_c = C64::new(0.0, 0.0);
        SignalAccumulator {
            times,
            p: alloc::vec![zero_c; n],
            populations: record_populations
                .then(|| [alloc::vec![0.0; n], alloc::vec![0.0; n], alloc::vec![0.0; n]]),
        }
    }

    pub fn add(&mut self, weight: f64, signal: &GroupSignal) -> Result<()> {
        if signal.rho13.len() != self.p.len() {
            return Err(CoreError::invalid(format!(
                "group signal length {} does not match accumulator length {}",
                signal.rho13.len(),
                self.p.len()
            )));
        }
        for (acc, x) in self.p.iter_mut().zip(signal.rho13.iter()) {
            *acc += weight * x;
        }
        if let (Some(pops), Some(gp)) = (self.populations.as_mut(), signal.populations.as_ref()) {
            for (dst, src) in pops.iter_mut().zip(gp.iter()) {
                for (acc, x) in dst.iter_mut().zip(src.iter()) {
                    *acc += weight * x;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> MacroscopicSignal {
        let intensity = self.p.iter().map(|p| p.norm_sqr()).collect();
        MacroscopicSignal {
            times: self.times,
            p: self.p,
            intensity,
            populations: self.populations,
        }
    }
}

/// Runs the full grid and reduces into the macroscopic signal.
///
/// Groups are propagated and accumulated in ascending detuning order; errors
/// are tagged with the failing group's detuning.
pub fn simulate_ensemble(
    seq: &PulseSequence,
    grid: &EnsembleGrid,
    relax: &RelaxationParams,
    sampling: &Sampling,
) -> Result<MacroscopicSignal> {
    let mut acc: Option<SignalAccumulator> = None;
    for group in grid.groups() {
        let traj = simulate_group(seq, group.detuning, relax, sampling)?;
        let signal = group_signal(&traj, sampling.record_populations);
        let acc = acc.get_or_insert_with(|| {
            SignalAccumulator::new(traj.times.clone(), sampling.record_populations)
        });
        acc.add(group.weight, &signal)?;
    }
    let acc = acc.ok_or_else(|| CoreError::invalid("ensemble grid must be non-empty"))?;
    Ok(acc.finish())
}

/// Trajectories for hand-picked detunings (e.g. a symmetric ±δ pair), using
/// the same engine as the ensemble run.
pub fn per_group_trajectories(
    seq: &PulseSequence,
    detunings_mhz: &[f64],
    relax: &RelaxationParams,
    sampling: &Sampling,
) -> Result<Vec<Trajectory>> {
    detunings_mhz
        .iter()
        .map(|&delta| simulate_group(seq, delta, relax, sampling))
        .collect()
}

/// Bloch-vector components (u, v) = (2 Re ρjk, 2 Im ρjk) along a trajectory,
/// on the chosen optical leg.
pub fn bloch_uv(traj: &Trajectory, transition: Transition) -> Vec<(f64, f64)> {
    traj.states
        .iter()
        .map(|s| {
            let c = match transition {
                Transition::T13 => s.rho13,
                Transition::T23 => s.rho23,
            };
            (2.0 * c.re, 2.0 * c.im)
        })
        .collect()
}
