//! Cross-module physics checks against closed-form oracles: rephasing
//! recovery, decay constants, unlock-area anchors and locking behavior.

use std::f64::consts::PI;

use plecho_core::analysis::{
    detect_echo, fit_decay, run_sweep, signed_efficiency, SimSetup, SweepAxis,
};
use plecho_core::ensemble::{per_group_trajectories, simulate_ensemble};
use plecho_core::integrator::Sampling;
use plecho_core::model::{gaussian_grid, RelaxationParams, SequenceKind};
use plecho_core::protocol::ProtocolParams;

fn reference_relax() -> RelaxationParams {
    RelaxationParams {
        gamma_pop_31: 5.0,
        gamma_pop_32: 5.0,
        gamma_13: 10.0,
        gamma_23: 10.0,
        ..RelaxationParams::NONE
    }
}

/// A reduced grid that keeps the full detuning span; enough groups for the
/// ensemble laws while staying fast.
fn small_setup(kind: SequenceKind) -> SimSetup {
    SimSetup {
        kind,
        protocol: ProtocolParams::reference(),
        grid: gaussian_grid(0.68, 0.02, 81).unwrap(),
        relax: reference_relax(),
        sampling: Sampling::default(),
    }
}

#[test]
fn zero_damping_echo_recovers_the_post_data_amplitude() {
    // With no relaxation and a drive strong enough that pulse bandwidth is
    // negligible across the grid, rephasing is lossless.
    let mut setup = small_setup(SequenceKind::TwoPulse);
    setup.relax = RelaxationParams::NONE;
    setup.protocol.rabi_freq = 50.0;
    let seq = setup.build_sequence().unwrap();
    let sig = simulate_ensemble(&seq, &setup.grid, &setup.relax, &setup.sampling).unwrap();
    let d_end = 5.0 + setup.protocol.duration_of(PI / 2.0);
    let post_d = sig.max_abs_in(d_end, d_end + 0.01);
    let echo = detect_echo(&sig, (11.0, seq.t_end())).unwrap();
    assert!((echo.t_peak - 15.0).abs() < 0.2);
    let ratio = echo.amplitude.norm() / post_d;
    assert!((ratio - 1.0).abs() < 1e-4, "rephasing ratio {ratio}");
}

#[test]
fn rectangular_pulse_bandwidth_sets_the_rephasing_deficit() {
    // At the reference 5 MHz drive the 0.1 us rephasing pulse is not flat
    // across the +-0.8 MHz grid; second-order detuning errors cost a few
    // tenths of a percent of the recovered amplitude. Pin the size of that
    // deficit so regressions in either direction are caught.
    let mut setup = small_setup(SequenceKind::TwoPulse);
    setup.relax = RelaxationParams::NONE;
    setup.grid = gaussian_grid(0.68, 0.01, 161).unwrap();
    let seq = setup.build_sequence().unwrap();
    let sig = simulate_ensemble(&seq, &setup.grid, &setup.relax, &setup.sampling).unwrap();
    let d_end = 5.0 + setup.protocol.duration_of(PI / 2.0);
    let post_d = sig.max_abs_in(d_end, d_end + 0.01);
    let echo = detect_echo(&sig, (11.0, seq.t_end())).unwrap();
    let deficit = 1.0 - echo.amplitude.norm() / post_d;
    assert!(deficit > 2e-4 && deficit < 3e-3, "deficit {deficit}");
}

#[test]
fn storage_decay_matches_the_coherence_rate() {
    // Echo intensity vs storage time decays with tau = 1/(4*pi*gamma13):
    // the coherence is exposed for twice the storage interval.
    let base = small_setup(SequenceKind::TwoPulse);
    let table = run_sweep(&base, SweepAxis::RDelay, &[10.0, 15.0, 20.0, 25.0, 30.0]).unwrap();
    let fit = fit_decay(&table.decay_points()).unwrap();
    let expected = 1.0 / (4.0 * PI * 0.010);
    assert!(
        (fit.tau - expected).abs() / expected < 0.05,
        "tau {} vs {expected}",
        fit.tau
    );
}

#[test]
fn lock_decay_matches_the_spin_coherence_rate() {
    // The lock stores one-way: amplitude decays at the angular spin rate, so
    // the fitted constant is 1/(2*pi*gamma12).
    let mut base = small_setup(SequenceKind::PhaseLocked);
    let gamma12_khz = 20.0;
    base.relax.gamma_12 = gamma12_khz;
    let values: Vec<f64> = (1..=6).map(|k| k as f64).collect();
    let table = run_sweep(&base, SweepAxis::LockDuration, &values).unwrap();
    let fit = fit_decay(&table.decay_points()).unwrap();
    let expected = 1e3 / (2.0 * PI * gamma12_khz);
    assert!(
        (fit.tau - expected).abs() / expected < 0.05,
        "tau {} vs {expected}",
        fit.tau
    );
}

#[test]
fn unlock_area_anchor_efficiencies() {
    let base = small_setup(SequenceKind::PhaseLocked);
    let reference = base.reference_two_pulse().run().unwrap().echo;
    let run_with_b2 = |area: f64| {
        let mut setup = base.clone();
        setup.protocol.area_b2 = area;
        let echo = setup.run().unwrap().echo;
        signed_efficiency(&echo, &reference).unwrap()
    };
    let full = run_with_b2(3.0 * PI);
    let null = run_with_b2(2.0 * PI);
    let inverted = run_with_b2(PI);
    assert!((full - 1.0).abs() < 0.03, "3pi: {full}");
    assert!(null.abs() < 0.02, "2pi: {null}");
    assert!((inverted + 1.0).abs() < 0.03, "pi: {inverted}");
}

#[test]
fn retrieval_is_independent_of_the_data_area() {
    // The phase-locked echo scales with the data pulse exactly like the
    // conventional echo does, so the efficiency ratio is flat in the data
    // area.
    let mut efficiencies = Vec::new();
    for area_d in [PI / 8.0, PI / 4.0, PI / 2.0] {
        let mut setup = small_setup(SequenceKind::PhaseLocked);
        setup.protocol.area_d = area_d;
        let echo = setup.run().unwrap().echo;
        let reference = setup.reference_two_pulse().run().unwrap().echo;
        efficiencies.push(signed_efficiency(&echo, &reference).unwrap());
    }
    let max = efficiencies.iter().cloned().fold(f64::MIN, f64::max);
    let min = efficiencies.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        max - min < 0.02,
        "efficiencies vary with the data area: {efficiencies:?}"
    );
}

#[test]
fn echo_position_is_invariant_under_joint_lock_shift() {
    // Moving lock and unlock together (same lock length) leaves the echo
    // where it was.
    let mut peaks = Vec::new();
    for shift in [0.0, 2.0, 4.0] {
        let mut setup = small_setup(SequenceKind::PhaseLocked);
        setup.protocol.t_b1 = 10.1 + shift;
        setup.protocol.t_b2 = 20.1 + shift;
        let out = setup.run().unwrap();
        assert!((out.predicted_echo_time - 25.0).abs() < 1e-9);
        peaks.push(out.echo.t_peak);
    }
    for p in &peaks {
        assert!((p - peaks[0]).abs() < 0.05, "peaks {peaks:?}");
    }
}

#[test]
fn unlock_branch_sign_shows_in_the_group_coherence() {
    // For a single group, unlocking with pi lands on the sign-inverted
    // branch relative to 3pi.
    let base = small_setup(SequenceKind::PhaseLocked);
    let sequence_with_b2 = |area: f64| {
        let mut params = base.protocol.clone();
        params.area_b2 = area;
        SimSetup { protocol: params, ..base.clone() }.build_sequence().unwrap()
    };
    let seq_pi = sequence_with_b2(PI);
    let seq_3pi = sequence_with_b2(3.0 * PI);
    let sampling = Sampling::default();
    let relax = RelaxationParams::NONE;
    let t_probe = 59.9;
    let pi_state = per_group_trajectories(&seq_pi, &[0.04], &relax, &sampling).unwrap()[0]
        .state_at(t_probe)
        .unwrap()
        .rho13;
    let tpi_state = per_group_trajectories(&seq_3pi, &[0.04], &relax, &sampling).unwrap()[0]
        .state_at(t_probe)
        .unwrap()
        .rho13;
    let mismatch = (pi_state + tpi_state).norm() / tpi_state.norm();
    assert!(mismatch < 0.05, "branches not opposite: {pi_state} vs {tpi_state}");
}
