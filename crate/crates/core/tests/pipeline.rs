use std::sync::Arc;

use medianflow_core::diagnostics::StoppingSpec;
use medianflow_core::initial::annulus;
use medianflow_core::scalar::{OperatorKind, ScalarScheme};
use medianflow_core::simulation::{
    run, run_stopping_experiment, Checkpoint, InitialScalar, InitialVelocity, RunSpec, RunState, Sample,
};
use medianflow_core::snapshot::{read_snapshot, write_snapshot};
use medianflow_core::{DealiasFraction, WaveGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Arc<WaveGrid> {
    WaveGrid::new(n, DealiasFraction::TWO_THIRDS).unwrap()
}

fn spec(kind: OperatorKind, rho0: InitialScalar) -> RunSpec {
    RunSpec {
        flow_grid: grid(16),
        scalar_grid: grid(32),
        alpha: 12.0,
        sigma: 1.0,
        kappa: 0.05,
        kind,
        scheme: ScalarScheme::Euler,
        dt: 0.005,
        t_burn: 0.2,
        t_total: 1.0,
        c_cfl: 0.5,
        u0: InitialVelocity::Stationary,
        rho0,
        record_every: 4,
    }
}

fn samples(spec: &RunSpec, seed: u64) -> Vec<Sample> {
    let mut out = Vec::new();
    run(spec, seed, |s| {
        out.push(s.clone());
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn resume_from_serialized_checkpoint_matches_uninterrupted_run() {
    let spec = spec(OperatorKind::Lns, InitialScalar::Annulus(4));
    let full = samples(&spec, 9);

    let mut first = Vec::new();
    let mut state = RunState::start(&spec, 9).unwrap();
    for _ in 0..77 {
        state
            .advance(&spec, |s| {
                first.push(s.clone());
                Ok(())
            })
            .unwrap();
    }
    let json = serde_json::to_string(&state.checkpoint()).unwrap();
    drop(state);
    let cp: Checkpoint = serde_json::from_str(&json).unwrap();
    let mut resumed = RunState::resume(&spec, &cp).unwrap();
    while resumed
        .advance(&spec, |s| {
            first.push(s.clone());
            Ok(())
        })
        .unwrap()
    {}
    assert_eq!(first, full);
}

#[test]
fn final_scalar_survives_a_snapshot_round_trip() {
    let spec = spec(OperatorKind::Adv, InitialScalar::Annulus(3));
    let mut state = RunState::start(&spec, 4).unwrap();
    while state.advance(&spec, |_| Ok(())).unwrap() {}
    let pi = state.sim().scalar().pi().clone();
    let mut bytes = Vec::new();
    write_snapshot(&pi, &mut bytes).unwrap();
    let back = read_snapshot(bytes.as_slice(), DealiasFraction::TWO_THIRDS).unwrap();
    assert!(back.grid().same_as(pi.grid()));
    assert_eq!(back.coeffs(), pi.coeffs());

    // A snapshot is a valid initial condition for a new run.
    let restart = RunSpec { rho0: InitialScalar::Field(back), ..spec };
    assert!(run(&restart, 5, |_| Ok(())).is_ok());
}

#[test]
fn advection_never_grows_the_scalar() {
    let spec = spec(OperatorKind::Adv, InitialScalar::Annulus(5));
    let s = samples(&spec, 2);
    for w in s.windows(2) {
        assert!(w[1].log_amp <= w[0].log_amp + 1e-12, "{} -> {}", w[0].log_amp, w[1].log_amp);
    }
}

#[test]
fn ensemble_members_differ_and_repeat() {
    let spec = spec(OperatorKind::Adv, InitialScalar::Annulus(4));
    let a = samples(&spec, 1);
    assert_eq!(a, samples(&spec, 1));
    assert_ne!(a, samples(&spec, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Scaling the initial datum only shifts the log-amplitude; the
    /// normalised scalar and every median observable are unchanged.
    #[test]
    fn median_traces_are_scale_invariant(seed in 0u64..1000, c in prop_oneof![0.01f64..0.5, 2.0f64..100.0]) {
        let g = grid(32);
        let rho0 = annulus(&g, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let base = spec(OperatorKind::Adv, InitialScalar::Field(rho0.clone()));
        let scaled = RunSpec { rho0: InitialScalar::Field(rho0.scaled(c)), ..base.clone() };
        let a = samples(&base, seed);
        let b = samples(&scaled, seed);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.median, y.median);
            prop_assert_eq!(x.quantile2, y.quantile2);
            prop_assert!((x.filament - y.filament).abs() <= 1e-9 * x.filament);
            prop_assert!((y.log_amp - x.log_amp - c.ln()).abs() < 1e-9);
        }

        let stop = StoppingSpec { m0: 5, kappa: 0.05, alpha: 12.0, delta: 0.2, q: 2.5 };
        let ta = run_stopping_experiment(&base, stop, seed, 5).unwrap();
        let tb = run_stopping_experiment(&scaled, stop, seed, 5).unwrap();
        prop_assert_eq!(ta.trace.median, tb.trace.median);
        prop_assert_eq!(ta.trace.quantile2, tb.trace.quantile2);
        prop_assert_eq!(ta.record, tb.record);
    }
}
