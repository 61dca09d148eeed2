use num_complex::Complex64;
use proptest::prelude::*;
use ptycho_core::epie::{run_epie, EpieConfig, ScanOrder};
use ptycho_core::field::split_transmission;
use ptycho_core::forward::{
    make_disc_probe, make_grid_plan, make_masked_label, make_phantom, simulate_stack, PhantomKind, Probe,
};
use ptycho_core::metrics::{apply_global_phase_shift, nrmse};
use ptycho_core::stitch::{stitch, PatchPrediction, StitchConfig, TaperWidth};
use ptycho_core::{unwrap_phase, ComplexField, RealField};

fn scene(seed: u64) -> (ComplexField, Probe, ptycho_core::forward::DiffractionStack) {
    let probe = make_disc_probe(32, 10.0, 0.0, 1.0).unwrap();
    let plan = make_grid_plan(3, 3, 6, 32).unwrap();
    let t = make_phantom(plan.canvas_height, plan.canvas_width, seed, PhantomKind::Gradients);
    let stack = simulate_stack(&t, &probe, &plan).unwrap();
    (t, probe, stack)
}

#[test]
fn cold_epie_recovers_small_object() {
    let (t, probe, stack) = scene(3);
    let label = make_masked_label(&t, &probe, &stack.plan.positions).unwrap();
    let (state, converged) = run_epie(&stack, &probe, &EpieConfig::default(), None).unwrap();
    assert!(converged);
    let (amp, phase) = split_transmission(&state.object);
    let phase = unwrap_phase(&phase, &label.mask);
    assert!(nrmse(&amp, &label.amplitude, &label.mask, false).unwrap() < 1e-4);
    assert!(nrmse(&phase, &label.phase, &label.mask, true).unwrap() < 1e-3);
    assert_eq!(state.sse_history.len(), state.iteration);
}

#[test]
fn shuffled_order_is_reproducible_and_converges() {
    let (_, probe, stack) = scene(8);
    let cfg = EpieConfig {
        scan_order: ScanOrder::Shuffled(42),
        max_iterations: 300,
        ..EpieConfig::default()
    };
    let (a, _) = run_epie(&stack, &probe, &cfg, None).unwrap();
    let (b, _) = run_epie(&stack, &probe, &cfg, None).unwrap();
    assert_eq!(a, b);
    let first = a.sse_history[0];
    assert!(*a.sse_history.last().unwrap() < 1e-6 * first);
}

#[test]
fn probe_update_reduces_error_from_wrong_probe() {
    let (_, probe, stack) = scene(5);
    let wrong = make_disc_probe(32, 10.0, 0.0, 0.6).unwrap();
    let fixed = EpieConfig {
        max_iterations: 150,
        ..EpieConfig::default()
    };
    let learned = EpieConfig {
        update_probe: true,
        ..fixed
    };
    let (a, _) = run_epie(&stack, &wrong, &fixed, None).unwrap();
    let (b, _) = run_epie(&stack, &wrong, &learned, None).unwrap();
    assert!(b.sse_history.last().unwrap() < a.sse_history.last().unwrap());
    // support stays confined to the initial disc
    for (p, s) in b.probe.data().iter().zip(b.support.data()) {
        if *s == 0.0 {
            assert_eq!(*p, Complex64::new(0.0, 0.0));
        }
    }
    assert_eq!(b.support, probe.support());
}

#[test]
fn global_phase_shift_survives_unwrapping_as_constant() {
    let (t, probe, stack) = scene(2);
    let label = make_masked_label(&t, &probe, &stack.plan.positions).unwrap();
    let shifted = apply_global_phase_shift(&t, 2.5, 0.0, 0.0);
    let (_, wrapped) = split_transmission(&shifted);
    let unwrapped = unwrap_phase(&wrapped, &label.mask);
    assert!(nrmse(&unwrapped, &label.phase, &label.mask, true).unwrap() < 1e-9);
}

fn patch_strategy() -> impl Strategy<Value = (Vec<(usize, usize, usize, usize, f64)>, usize)> {
    let patch = (0usize..30, 0usize..30, 4usize..20, 4usize..20, -2.0f64..2.0);
    (prop::collection::vec(patch, 1..6), 1usize..8)
}

proptest! {
    #[test]
    fn stitched_values_are_convex_combinations((specs, taper) in patch_strategy()) {
        let patches: Vec<PatchPrediction> = specs
            .iter()
            .map(|&(r, c, h, w, v)| {
                PatchPrediction::new(
                    RealField::filled(h, w, v),
                    RealField::filled(h, w, -v),
                    RealField::filled(h, w, 1.0),
                    (r, c),
                )
                .unwrap()
            })
            .collect();
        let cfg = StitchConfig { crop_margin: 0, taper_width: TaperWidth::Fixed(taper) };
        let out = stitch(&patches, (50, 50), &cfg).unwrap();
        let lo = specs.iter().map(|s| s.4).fold(f64::INFINITY, f64::min);
        let hi = specs.iter().map(|s| s.4).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..out.coverage.len() {
            let cov = out.coverage.data()[i];
            if cov == 0.0 {
                prop_assert_eq!(out.amplitude.data()[i], 0.0);
                continue;
            }
            prop_assert!((cov - 1.0).abs() < 1e-12);
            let a = out.amplitude.data()[i];
            prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
            prop_assert!((out.phase.data()[i] + a).abs() < 1e-12);
        }
    }
}
