//! `manifest.json`: the index of a dataset, prediction, stitched or
//! reconstruction directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ptycho_core::forward::{ProbeParams, ScanPlan};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::npy::{read_header, ElementKind};

pub const SCHEMA_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub height: usize,
    pub width: usize,
}

impl From<(usize, usize)> for Dimensions {
    fn from((height, width): (usize, usize)) -> Self {
        Self { height, width }
    }
}

impl Dimensions {
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayRole {
    DiffractionStack,
    TrueAmplitude,
    TruePhase,
    Mask,
    PredAmplitude,
    PredPhase,
    ReconAmplitude,
    ReconPhase,
    ProbeReal,
    ProbeImag,
    Coverage,
    ReconPhaseUnwrapped,
    ReconObject,
}

impl ArrayRole {
    pub const ALL: [ArrayRole; 13] = [
        Self::DiffractionStack,
        Self::TrueAmplitude,
        Self::TruePhase,
        Self::Mask,
        Self::PredAmplitude,
        Self::PredPhase,
        Self::ReconAmplitude,
        Self::ReconPhase,
        Self::ProbeReal,
        Self::ProbeImag,
        Self::Coverage,
        Self::ReconPhaseUnwrapped,
        Self::ReconObject,
    ];

    /// Conventional file name inside a directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Self::DiffractionStack => "diffraction_stack.npy",
            Self::TrueAmplitude => "true_amplitude.npy",
            Self::TruePhase => "true_phase.npy",
            Self::Mask => "mask.npy",
            Self::PredAmplitude => "pred_amplitude.npy",
            Self::PredPhase => "pred_phase.npy",
            Self::ReconAmplitude => "recon_amplitude.npy",
            Self::ReconPhase => "recon_phase.npy",
            Self::ProbeReal => "probe_real.npy",
            Self::ProbeImag => "probe_imag.npy",
            Self::Coverage => "coverage.npy",
            Self::ReconPhaseUnwrapped => "recon_phase_unwrapped.npy",
            Self::ReconObject => "recon_object.npy",
        }
    }

    fn expected(self, m: &Manifest) -> (Vec<usize>, ElementKind) {
        let (h, w) = m.canvas.shape();
        match self {
            Self::DiffractionStack => (vec![m.plan.len(), m.window, m.window], ElementKind::Real),
            Self::ProbeReal | Self::ProbeImag => (vec![m.window, m.window], ElementKind::Real),
            Self::ReconObject => (vec![h, w], ElementKind::Complex),
            _ => (vec![h, w], ElementKind::Real),
        }
    }
}

/// One local prediction placed at `origin` on the canvas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub origin: (usize, usize),
    pub amplitude: String,
    pub phase: String,
    pub mask: String,
}

/// A network input set: up to nine placed patterns plus its masked label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSetEntry {
    pub origin: (usize, usize),
    pub size: Dimensions,
    pub indices: Vec<usize>,
    pub placements: Vec<(usize, usize)>,
    pub channels: String,
    pub label_amplitude: String,
    pub label_phase: String,
    pub label_mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub canvas: Dimensions,
    pub window: usize,
    pub plan: ScanPlan,
    pub probe_params: ProbeParams,
    pub seed: u64,
    pub array_files: BTreeMap<ArrayRole, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<PatchEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_sets: Vec<InputSetEntry>,
}

impl Manifest {
    pub fn new(plan: ScanPlan, probe_params: ProbeParams, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            canvas: plan.canvas().into(),
            window: plan.window,
            plan,
            probe_params,
            seed,
            array_files: BTreeMap::new(),
            overlap_percent: None,
            patches: Vec::new(),
            input_sets: Vec::new(),
        }
    }

    /// A manifest for a derived directory: same geometry, no files.
    pub fn derived(&self) -> Self {
        Self::new(self.plan.clone(), self.probe_params, self.seed)
    }

    pub fn with_file(mut self, role: ArrayRole) -> Self {
        self.array_files.insert(role, role.file_name().to_string());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::data(MANIFEST_FILE, e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| PipelineError::io(path, e))
    }

    /// Parses `dir/manifest.json` and cross-checks every referenced file
    /// header against the declared geometry.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| PipelineError::data(&path, e.to_string()))?;
        m.validate(dir)?;
        Ok(m)
    }

    pub fn path(&self, dir: &Path, role: ArrayRole) -> Result<PathBuf> {
        self.array_files
            .get(&role)
            .map(|f| dir.join(f))
            .ok_or_else(|| PipelineError::data(dir.join(MANIFEST_FILE), format!("no {role:?} array listed")))
    }

    pub fn validate(&self, dir: &Path) -> Result<()> {
        let here = dir.join(MANIFEST_FILE);
        let fail = |reason: String| Err(PipelineError::data(&here, reason));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema_version {:?}", self.schema_version));
        }
        if let Err(e) = self.plan.validate() {
            return fail(format!("invalid plan: {e}"));
        }
        if self.canvas.shape() != self.plan.canvas() {
            return fail(format!("canvas {:?} disagrees with plan {:?}", self.canvas.shape(), self.plan.canvas()));
        }
        if self.window != self.plan.window || self.window != self.probe_params.window {
            return fail("window disagrees with plan or probe_params".into());
        }
        for (&role, file) in &self.array_files {
            let (shape, kind) = role.expected(self);
            check_file(&dir.join(file), &shape, kind)?;
        }
        let (ch, cw) = self.canvas.shape();
        for p in &self.patches {
            let header = read_header(&dir.join(&p.amplitude))?;
            if header.shape.len() != 2 {
                return fail(format!("patch {} is not 2-d", p.amplitude));
            }
            let (h, w) = (header.shape[0], header.shape[1]);
            for f in [&p.amplitude, &p.phase, &p.mask] {
                check_file(&dir.join(f), &[h, w], ElementKind::Real)?;
            }
            if p.origin.0 + h > ch || p.origin.1 + w > cw {
                return fail(format!("patch {} at {:?} exceeds the canvas", p.amplitude, p.origin));
            }
        }
        for s in &self.input_sets {
            let (h, w) = s.size.shape();
            if s.indices.len() != s.placements.len() || s.indices.is_empty() || s.indices.len() > 9 {
                return fail(format!("input set {} has inconsistent indices", s.channels));
            }
            if s.indices.iter().any(|&i| i >= self.plan.len()) {
                return fail(format!("input set {} references a missing pattern", s.channels));
            }
            if s.origin.0 + h > ch || s.origin.1 + w > cw {
                return fail(format!("input set {} exceeds the canvas", s.channels));
            }
            check_file(&dir.join(&s.channels), &[s.indices.len(), h, w], ElementKind::Real)?;
            for f in [&s.label_amplitude, &s.label_phase, &s.label_mask] {
                check_file(&dir.join(f), &[h, w], ElementKind::Real)?;
            }
        }
        Ok(())
    }
}

fn check_file(path: &Path, shape: &[usize], kind: ElementKind) -> Result<()> {
    let header = read_header(path)?;
    if header.shape != shape || header.kind != kind {
        return Err(PipelineError::data(
            path,
            format!("expected {kind:?} array of shape {shape:?}, found {:?} {:?}", header.kind, header.shape),
        ));
    }
    Ok(())
}
