//! In-memory building blocks shared by the commands and the sweep: a
//! simulated scene, synthetic patch predictions, reconstruction and scoring.

use std::time::Instant;

use num_complex::Complex64;
use ptycho_core::epie::{run_epie_with_observer, EpieConfig};
use ptycho_core::field::split_transmission;
use ptycho_core::forward::{
    assemble_input_set, gaussian_blur, grid_groups, make_masked_label, make_phantom, overlap_percent,
    simulate_stack, DiffractionStack, InputSet, MaskedLabel, Probe,
};
use ptycho_core::metrics::{report, MetricsReport};
use ptycho_core::stitch::{stitch, PatchPrediction, StitchConfig, Stitched};
use ptycho_core::{unwrap_phase, ComplexField, RealField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{PlanSpec, SimulateConfig, SyntheticPrediction};
use crate::error::{PipelineError, Result};

/// Ground truth and noiseless measurements for one configuration.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SimulateConfig,
    pub probe: Probe,
    pub truth: ComplexField,
    pub stack: DiffractionStack,
    pub label: MaskedLabel,
}

impl Scenario {
    pub fn simulate(config: &SimulateConfig) -> Result<Self> {
        let invalid = |e: ptycho_core::Error| PipelineError::InvalidConfig(e.to_string());
        let probe = config.probe.build().map_err(invalid)?;
        let plan = config.plan.build(config.probe.window, config.seed)?;
        let (h, w) = plan.canvas();
        let truth = make_phantom(h, w, config.seed, config.phantom);
        let stack = simulate_stack(&truth, &probe, &plan)?;
        let label = make_masked_label(&truth, &probe, &plan.positions)?;
        Ok(Self {
            config: *config,
            probe,
            truth,
            stack,
            label,
        })
    }

    pub fn canvas(&self) -> (usize, usize) {
        self.truth.shape()
    }

    /// Scan indices of each network input set.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        match self.config.plan {
            PlanSpec::Grid { rows, cols, .. } => grid_groups(rows, cols),
            PlanSpec::Alt { .. } => vec![(0..self.stack.plan.len()).collect()],
        }
    }

    pub fn overlap_percent(&self) -> Option<f64> {
        match self.config.plan {
            PlanSpec::Grid { offset, .. } => Some(overlap_percent(offset, &self.probe)),
            PlanSpec::Alt { .. } => None,
        }
    }

    /// Each input set with the masked label of its own canvas.
    pub fn input_sets(&self) -> Result<Vec<(InputSet, MaskedLabel)>> {
        self.groups()
            .iter()
            .map(|g| {
                let set = assemble_input_set(&self.stack, &self.probe, g)?;
                let (h, w) = set.canvas();
                let local = self.truth.crop(set.origin.0, set.origin.1, h, w)?;
                let label = make_masked_label(&local, &self.probe, &set.placements)?;
                Ok((set, label))
            })
            .collect()
    }
}

/// Zero-mean, unit-norm smooth noise over the masked pixels.
fn smooth_noise(mask: &RealField, sigma: f64, rng: &mut ChaCha8Rng) -> RealField {
    let (h, w) = mask.shape();
    let white = RealField::from_fn(h, w, |_, _| rng.random::<f64>() - 0.5);
    let noise = gaussian_blur(&white, sigma);
    let count = mask.sum();
    let mean = noise.data().iter().zip(mask.data()).map(|(v, m)| v * m).sum::<f64>() / count;
    let norm = noise
        .data()
        .iter()
        .zip(mask.data())
        .map(|(v, m)| m * (v - mean).powi(2))
        .sum::<f64>()
        .sqrt();
    noise.map(|v| (v - mean) / norm)
}

fn masked_norm(f: &RealField, mask: &RealField) -> f64 {
    f.data().iter().zip(mask.data()).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// Ground truth plus smooth noise scaled to the requested NRMSE on the
/// label mask, then clamped to the valid amplitude and phase ranges.
pub fn corrupt_truth(scene: &Scenario, cfg: &SyntheticPrediction, seed: u64) -> (RealField, RealField) {
    use std::f64::consts::PI;
    let mask = &scene.label.mask;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let phase_noise = smooth_noise(mask, cfg.noise_sigma, &mut rng);
    rng.set_stream(2);
    let amp_noise = smooth_noise(mask, cfg.noise_sigma, &mut rng);
    let phase_scale = cfg.phase_nrmse * masked_norm(&scene.label.phase, mask);
    let amp_scale = cfg.amplitude_nrmse * masked_norm(&scene.label.amplitude, mask);
    let (h, w) = mask.shape();
    let amplitude = RealField::from_fn(h, w, |r, c| {
        let m = mask[(r, c)];
        m * (scene.label.amplitude[(r, c)] + amp_scale * amp_noise[(r, c)]).clamp(0.05, 1.0)
    });
    let phase = RealField::from_fn(h, w, |r, c| {
        let m = mask[(r, c)];
        m * (scene.label.phase[(r, c)] + phase_scale * phase_noise[(r, c)]).clamp(-PI, PI)
    });
    (amplitude, phase)
}

/// Slices canvas-sized planes into one patch per input set, each masked to
/// the set's illuminated region.
pub fn slice_patches(scene: &Scenario, amplitude: &RealField, phase: &RealField) -> Result<Vec<PatchPrediction>> {
    scene
        .input_sets()?
        .into_iter()
        .map(|(set, _)| {
            let (h, w) = set.canvas();
            let (r, c) = set.origin;
            Ok(PatchPrediction::new(
                amplitude.crop(r, c, h, w)?,
                phase.crop(r, c, h, w)?,
                set.support_mask,
                set.origin,
            )?)
        })
        .collect()
}

/// Stand-in for model output: corrupted ground truth sliced per input set.
pub fn synthetic_prediction(scene: &Scenario, cfg: &SyntheticPrediction, seed: u64) -> Result<Vec<PatchPrediction>> {
    let (amplitude, phase) = corrupt_truth(scene, cfg, seed);
    slice_patches(scene, &amplitude, &phase)
}

pub fn stitch_prediction(scene: &Scenario, patches: &[PatchPrediction], cfg: &StitchConfig) -> Result<Stitched> {
    Ok(stitch(patches, scene.canvas(), cfg)?)
}

/// Object estimate from a stitched prediction. Pixels no patch covers start
/// as free space, like a cold start.
pub fn warm_start(stitched: &Stitched) -> ComplexField {
    let (h, w) = stitched.amplitude.shape();
    ComplexField::from_fn(h, w, |r, c| {
        if stitched.coverage[(r, c)] > 0.0 {
            Complex64::from_polar(stitched.amplitude[(r, c)].max(0.0), stitched.phase[(r, c)])
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub object: ComplexField,
    pub probe: ComplexField,
    pub amplitude: RealField,
    pub phase: RealField,
    pub unwrapped_phase: RealField,
    pub sse_history: Vec<f64>,
    pub converged: bool,
    pub iteration_seconds: Vec<f64>,
}

impl Reconstruction {
    pub fn iterations(&self) -> usize {
        self.sse_history.len()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Runs ePIE and unwraps the recovered phase inside `mask`.
pub fn reconstruct(
    stack: &DiffractionStack,
    probe: &Probe,
    mask: &RealField,
    cfg: &EpieConfig,
    init: Option<&ComplexField>,
) -> Result<Reconstruction> {
    let mut iteration_seconds = Vec::new();
    let mut tick = Instant::now();
    let (state, converged) = run_epie_with_observer(stack, probe, cfg, init, |_, _| {
        iteration_seconds.push(tick.elapsed().as_secs_f64());
        tick = Instant::now();
    })?;
    let (amplitude, phase) = split_transmission(&state.object);
    let unwrapped_phase = unwrap_phase(&phase, mask);
    Ok(Reconstruction {
        object: state.object,
        probe: state.probe,
        amplitude,
        phase,
        unwrapped_phase,
        sse_history: state.sse_history,
        converged,
        iteration_seconds,
    })
}

/// Scores an amplitude/phase estimate against the scene's masked label.
pub fn evaluate(scene: &Scenario, amplitude: &RealField, phase: &RealField) -> Result<MetricsReport> {
    let l = &scene.label;
    Ok(report(amplitude, phase, &l.amplitude, &l.phase, &l.mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ptycho_core::forward::{PhantomKind, ProbeParams};
    use ptycho_core::metrics::nrmse;
    use ptycho_core::stitch::TaperWidth;

    fn small_scene() -> Scenario {
        Scenario::simulate(&SimulateConfig {
            seed: 4,
            phantom: PhantomKind::Blobs,
            probe: ProbeParams { window: 32, radius: 10.0, edge_smooth: 1.0, phase_curvature: 1.0 },
            plan: PlanSpec::Grid { rows: 4, cols: 4, offset: 6 },
        })
        .unwrap()
    }

    #[test]
    fn synthetic_prediction_hits_target_error() {
        let scene = small_scene();
        let cfg = SyntheticPrediction::default();
        let (a, p) = corrupt_truth(&scene, &cfg, 11);
        let l = &scene.label;
        let pn = nrmse(&p, &l.phase, &l.mask, true).unwrap();
        let an = nrmse(&a, &l.amplitude, &l.mask, false).unwrap();
        assert!((pn - 0.3).abs() < 0.03, "phase nrmse {pn}");
        assert!((an - 0.1).abs() < 0.03, "amplitude nrmse {an}");
        assert_eq!(corrupt_truth(&scene, &cfg, 11), (a, p));
    }

    #[test]
    fn zero_noise_prediction_stitches_back_to_label() {
        let scene = small_scene();
        let cfg = SyntheticPrediction { phase_nrmse: 0.0, amplitude_nrmse: 0.0, ..Default::default() };
        let patches = synthetic_prediction(&scene, &cfg, 0).unwrap();
        assert_eq!(patches.len(), scene.groups().len());
        let stitched = stitch_prediction(&scene, &patches, &StitchConfig { crop_margin: 0, taper_width: TaperWidth::Auto }).unwrap();
        let l = &scene.label;
        for i in 0..l.mask.len() {
            if l.mask.data()[i] != 0.0 {
                assert!((stitched.coverage.data()[i] - 1.0).abs() < 1e-12);
                let expect = l.amplitude.data()[i].clamp(0.05, 1.0);
                assert!((stitched.amplitude.data()[i] - expect).abs() < 1e-12);
            }
        }
        let init = warm_start(&stitched);
        assert_eq!(init[(0, 0)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn input_set_labels_match_global_label() {
        let scene = small_scene();
        for (set, label) in scene.input_sets().unwrap() {
            let (h, w) = set.canvas();
            let crop = scene.label.amplitude.crop(set.origin.0, set.origin.1, h, w).unwrap();
            for i in 0..label.mask.len() {
                if label.mask.data()[i] != 0.0 {
                    assert_eq!(label.amplitude.data()[i], crop.data()[i]);
                }
            }
            assert_eq!(label.mask, set.support_mask);
        }
    }

    #[test]
    fn truth_start_scores_zero_error() {
        let scene = small_scene();
        let cfg = EpieConfig { max_iterations: 3, ..Default::default() };
        let rec = reconstruct(&scene.stack, &scene.probe, &scene.label.mask, &cfg, Some(&scene.truth)).unwrap();
        assert!(rec.converged);
        assert_eq!(rec.iterations(), 1);
        assert_eq!(rec.iteration_seconds.len(), 1);
        let m = evaluate(&scene, &rec.amplitude, &rec.unwrapped_phase).unwrap();
        assert!(m.amp_nrmse < 1e-9 && m.phase_nrmse < 1e-9);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
