//! The directory-to-directory commands behind the `ptycho` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use ptycho_core::forward::{overlap_percent, DiffractionStack, Probe, ProbeParams};
use ptycho_core::metrics::{fit_constant_offset, frc, FrcCurve, MetricsReport, FRC_THRESHOLD};
use ptycho_core::stitch::{stitch, PatchPrediction, Stitched};
use ptycho_core::{ComplexField, RealField};
use serde::{Deserialize, Serialize};

use crate::config::{EpfConfig, InitSource, SimulateConfig, StitchSettings};
use crate::error::{PipelineError, Result};
use crate::experiment::{median, reconstruct, warm_start, Scenario};
use crate::manifest::{ArrayRole, InputSetEntry, Manifest};
use crate::npy;
use crate::preview;

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_text(path, &text)
}

fn write_role_real(dir: &Path, role: ArrayRole, field: &RealField) -> Result<()> {
    npy::write_real(&dir.join(role.file_name()), field)
}

fn write_probe(dir: &Path, probe: &ComplexField) -> Result<()> {
    write_role_real(dir, ArrayRole::ProbeReal, &probe.map(|z| z.re))?;
    write_role_real(dir, ArrayRole::ProbeImag, &probe.map(|z| z.im))
}

/// Simulates a dataset: diffraction stack, masked labels, probe, input sets
/// and previews.
pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path) -> Result<Manifest> {
    let scene = Scenario::simulate(cfg)?;
    create_dir(out)?;
    npy::write_stack(&out.join(ArrayRole::DiffractionStack.file_name()), &scene.stack.patterns)?;
    write_role_real(out, ArrayRole::TrueAmplitude, &scene.label.amplitude)?;
    write_role_real(out, ArrayRole::TruePhase, &scene.label.phase)?;
    write_role_real(out, ArrayRole::Mask, &scene.label.mask)?;
    write_probe(out, scene.probe.field())?;
    preview::save_amplitude(&out.join("true_amplitude.png"), &scene.label.amplitude)?;
    preview::save_phase(&out.join("true_phase.png"), &scene.label.phase)?;

    let mut manifest = Manifest::new(scene.stack.plan.clone(), cfg.probe, cfg.seed);
    for role in [
        ArrayRole::DiffractionStack,
        ArrayRole::TrueAmplitude,
        ArrayRole::TruePhase,
        ArrayRole::Mask,
        ArrayRole::ProbeReal,
        ArrayRole::ProbeImag,
    ] {
        manifest = manifest.with_file(role);
    }
    manifest.overlap_percent = scene.overlap_percent();

    create_dir(&out.join("sets"))?;
    for (k, (set, label)) in scene.input_sets()?.into_iter().enumerate() {
        let name = |part: &str| format!("sets/set_{k:03}_{part}.npy");
        let entry = InputSetEntry {
            origin: set.origin,
            size: set.canvas().into(),
            indices: set.indices.clone(),
            placements: set.placements.clone(),
            channels: name("channels"),
            label_amplitude: name("label_amplitude"),
            label_phase: name("label_phase"),
            label_mask: name("label_mask"),
        };
        npy::write_stack(&out.join(&entry.channels), &set.channels)?;
        npy::write_real(&out.join(&entry.label_amplitude), &label.amplitude)?;
        npy::write_real(&out.join(&entry.label_phase), &label.phase)?;
        npy::write_real(&out.join(&entry.label_mask), &label.mask)?;
        manifest.input_sets.push(entry);
    }
    manifest.save(out)?;
    Ok(manifest)
}

/// A loaded dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stack: DiffractionStack,
    pub probe: Probe,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(dir)?;
        let patterns = npy::read_stack(&manifest.path(dir, ArrayRole::DiffractionStack)?)?;
        let stack = DiffractionStack::new(manifest.plan.clone(), patterns)?;
        let re = npy::read_real(&manifest.path(dir, ArrayRole::ProbeReal)?)?;
        let im = npy::read_real(&manifest.path(dir, ArrayRole::ProbeImag)?)?;
        let field = ComplexField::new(
            re.height(),
            re.width(),
            re.data().iter().zip(im.data()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        )?;
        let probe = Probe::from_field(manifest.probe_params, field)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            stack,
            probe,
        })
    }

    pub fn read(&self, role: ArrayRole) -> Result<RealField> {
        npy::read_real(&self.manifest.path(&self.dir, role)?)
    }
}

/// Loads the per-patch predictions listed in a manifest.
pub fn load_patches(dir: &Path, manifest: &Manifest) -> Result<Vec<PatchPrediction>> {
    manifest
        .patches
        .iter()
        .map(|p| {
            Ok(PatchPrediction::new(
                npy::read_real(&dir.join(&p.amplitude))?,
                npy::read_real(&dir.join(&p.phase))?,
                npy::read_real(&dir.join(&p.mask))?,
                p.origin,
            )?)
        })
        .collect()
}

fn write_stitched(out: &Path, parent: &Manifest, s: &Stitched) -> Result<Manifest> {
    create_dir(out)?;
    write_role_real(out, ArrayRole::PredAmplitude, &s.amplitude)?;
    write_role_real(out, ArrayRole::PredPhase, &s.phase)?;
    write_role_real(out, ArrayRole::Coverage, &s.coverage)?;
    preview::save_amplitude(&out.join("pred_amplitude.png"), &s.amplitude)?;
    preview::save_phase(&out.join("pred_phase.png"), &s.phase)?;
    let m = parent
        .derived()
        .with_file(ArrayRole::PredAmplitude)
        .with_file(ArrayRole::PredPhase)
        .with_file(ArrayRole::Coverage);
    m.save(out)?;
    Ok(m)
}

fn stitch_dir(dir: &Path, settings: &StitchSettings) -> Result<(Manifest, Stitched)> {
    let manifest = Manifest::load(dir)?;
    if manifest.patches.is_empty() {
        return Err(PipelineError::data(dir, "manifest lists no patches"));
    }
    let cfg = settings.resolve(&manifest.probe_params)?;
    let patches = load_patches(dir, &manifest)?;
    let stitched = stitch(&patches, manifest.canvas.shape(), &cfg)?;
    Ok((manifest, stitched))
}

/// Crops, feathers and blends a directory of patch predictions.
pub fn cmd_stitch(prediction_dir: &Path, settings: &StitchSettings, out: &Path) -> Result<Manifest> {
    let (manifest, stitched) = stitch_dir(prediction_dir, settings)?;
    write_stitched(out, &manifest, &stitched)
}

/// Canvas-sized prediction from a stitched directory, or by stitching a
/// patch directory with default settings.
pub fn load_prediction(dir: &Path) -> Result<Stitched> {
    let manifest = Manifest::load(dir)?;
    let has = |r| manifest.array_files.contains_key(&r);
    if has(ArrayRole::PredAmplitude) && has(ArrayRole::PredPhase) {
        let amplitude = npy::read_real(&manifest.path(dir, ArrayRole::PredAmplitude)?)?;
        let phase = npy::read_real(&manifest.path(dir, ArrayRole::PredPhase)?)?;
        let coverage = if has(ArrayRole::Coverage) {
            npy::read_real(&manifest.path(dir, ArrayRole::Coverage)?)?
        } else {
            RealField::filled(amplitude.height(), amplitude.width(), 1.0)
        };
        return Ok(Stitched {
            amplitude,
            phase,
            coverage,
        });
    }
    Ok(stitch_dir(dir, &StitchSettings::default())?.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpieSummary {
    pub init_source: InitSource,
    pub iterations: usize,
    pub converged: bool,
    pub final_sse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub median_iteration_seconds: f64,
    pub iteration_seconds: Vec<f64>,
}

#[derive(Serialize)]
struct SseLine {
    k: usize,
    sse: f64,
}

/// Runs ePIE on a dataset, cold or warm-started from a prediction directory.
pub fn cmd_epie(dataset_dir: &Path, cfg: &EpfConfig, init: Option<&Path>, out: &Path) -> Result<EpieSummary> {
    cfg.validate()?;
    let data = Dataset::load(dataset_dir)?;
    let init_object = match (cfg.init_source, init) {
        (InitSource::Cold, _) => None,
        (InitSource::StitchedPrediction, None) => {
            return Err(PipelineError::InvalidConfig(
                "init_source stitched_prediction needs a prediction directory".into(),
            ))
        }
        (InitSource::StitchedPrediction, Some(dir)) => {
            let pred = load_prediction(dir)?;
            let expected = data.manifest.canvas.shape();
            if pred.amplitude.shape() != expected || pred.phase.shape() != expected {
                return Err(ptycho_core::Error::ShapeMismatch {
                    expected,
                    found: pred.amplitude.shape(),
                }
                .into());
            }
            Some(warm_start(&pred))
        }
    };
    let mask = data.read(ArrayRole::Mask)?;
    let start = Instant::now();
    let rec = reconstruct(&data.stack, &data.probe, &mask, &cfg.epie, init_object.as_ref())?;
    let total_seconds = start.elapsed().as_secs_f64();

    create_dir(out)?;
    write_role_real(out, ArrayRole::ReconAmplitude, &rec.amplitude)?;
    write_role_real(out, ArrayRole::ReconPhase, &rec.phase)?;
    write_role_real(out, ArrayRole::ReconPhaseUnwrapped, &rec.unwrapped_phase)?;
    npy::write_complex(&out.join(ArrayRole::ReconObject.file_name()), &rec.object)?;
    write_probe(out, &rec.probe)?;
    preview::save_amplitude(&out.join("recon_amplitude.png"), &rec.amplitude)?;
    preview::save_phase(&out.join("recon_phase.png"), &rec.phase)?;

    let path = out.join("sse_history.jsonl");
    let mut lines = String::new();
    for (k, &sse) in rec.sse_history.iter().enumerate() {
        lines.push_str(&serde_json::to_string(&SseLine { k: k + 1, sse }).expect("serializes"));
        lines.push('\n');
    }
    write_text(&path, &lines)?;

    let summary = EpieSummary {
        init_source: cfg.init_source,
        iterations: rec.iterations(),
        converged: rec.converged,
        final_sse: rec.sse_history.last().copied().unwrap_or(f64::NAN),
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            total_seconds,
            median_iteration_seconds: median(&rec.iteration_seconds).unwrap_or(0.0),
            iteration_seconds: rec.iteration_seconds.clone(),
        },
    )?;

    let manifest = [
        ArrayRole::ReconAmplitude,
        ArrayRole::ReconPhase,
        ArrayRole::ReconPhaseUnwrapped,
        ArrayRole::ReconObject,
        ArrayRole::ProbeReal,
        ArrayRole::ProbeImag,
    ]
    .into_iter()
    .fold(data.manifest.derived(), Manifest::with_file);
    manifest.save(out)?;
    Ok(summary)
}

/// Centred square crop, so FRC can run on rectangular canvases.
fn centre_square(f: &RealField) -> Result<RealField> {
    let (h, w) = f.shape();
    let n = h.min(w);
    Ok(f.crop((h - n) / 2, (w - n) / 2, n, n)?)
}

fn masked_frc(estimate: &RealField, truth: &RealField, mask: &RealField, offset: f64) -> Result<FrcCurve> {
    let keep = |f: &RealField, shift: f64| {
        let (h, w) = f.shape();
        RealField::from_fn(h, w, |r, c| mask[(r, c)] * (f[(r, c)] - shift))
    };
    Ok(frc(&centre_square(&keep(estimate, offset))?, &centre_square(&keep(truth, 0.0))?)?)
}

/// Metrics, FRC table and FRC plot for a reconstruction or stitched
/// prediction against its dataset's labels.
pub fn cmd_metrics(recon_dir: &Path, dataset_dir: &Path, out: &Path) -> Result<MetricsReport> {
    let dataset = Manifest::load(dataset_dir)?;
    let recon = Manifest::load(recon_dir)?;
    if recon.canvas != dataset.canvas {
        return Err(ptycho_core::Error::ShapeMismatch {
            expected: dataset.canvas.shape(),
            found: recon.canvas.shape(),
        }
        .into());
    }
    let has = |r| recon.array_files.contains_key(&r);
    let (amp_role, phase_role) = if has(ArrayRole::ReconAmplitude) {
        let phase = if has(ArrayRole::ReconPhaseUnwrapped) {
            ArrayRole::ReconPhaseUnwrapped
        } else {
            ArrayRole::ReconPhase
        };
        (ArrayRole::ReconAmplitude, phase)
    } else {
        (ArrayRole::PredAmplitude, ArrayRole::PredPhase)
    };
    let est_amp = npy::read_real(&recon.path(recon_dir, amp_role)?)?;
    let est_phase = npy::read_real(&recon.path(recon_dir, phase_role)?)?;
    let read = |r| -> Result<RealField> { npy::read_real(&dataset.path(dataset_dir, r)?) };
    let (true_amp, true_phase, mask) = (
        read(ArrayRole::TrueAmplitude)?,
        read(ArrayRole::TruePhase)?,
        read(ArrayRole::Mask)?,
    );
    let report = ptycho_core::metrics::report(&est_amp, &est_phase, &true_amp, &true_phase, &mask)?;
    let offset = fit_constant_offset(&est_phase, &true_phase, &mask)?.a;
    let amp_frc = masked_frc(&est_amp, &true_amp, &mask, 0.0)?;
    let phase_frc = masked_frc(&est_phase, &true_phase, &mask, offset)?;

    create_dir(out)?;
    write_json(&out.join("metrics.json"), &report)?;
    let mut csv = String::from("ring,frequency,amplitude_frc,phase_frc\n");
    for (ring, f) in amp_frc.frequencies.iter().enumerate() {
        csv.push_str(&format!(
            "{ring},{f},{},{}\n",
            amp_frc.correlations[ring], phase_frc.correlations[ring]
        ));
    }
    write_text(&out.join("frc.csv"), &csv)?;
    write_json(
        &out.join("frc_crossing.json"),
        &serde_json::json!({
            "threshold": FRC_THRESHOLD,
            "amplitude": amp_frc.crossing,
            "phase": phase_frc.crossing,
        }),
    )?;
    preview::save_frc_plot(
        &out.join("frc.png"),
        &amp_frc.frequencies,
        &[&amp_frc.correlations, &phase_frc.correlations],
        FRC_THRESHOLD,
    )?;
    Ok(report)
}

/// Overlap percentage for each scan offset under the given probe.
pub fn overlap_table(params: &ProbeParams, offsets: &[usize]) -> Result<Vec<(usize, f64)>> {
    let probe = params
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    Ok(offsets.iter().map(|&o| (o, overlap_percent(o, &probe))).collect())
}

pub fn print_overlap_table(rows: &[(usize, f64)], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "offset_px\toverlap_percent")?;
    for (o, p) in rows {
        writeln!(out, "{o}\t{p:.1}")?;
    }
    Ok(())
}
