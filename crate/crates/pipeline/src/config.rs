//! JSON configuration for each command. Every field has a default, so `{}`
//! is a valid config; unknown keys are rejected.

use std::path::Path;

use ptycho_core::epie::EpieConfig;
use ptycho_core::forward::{make_alt_plan, make_grid_plan, AltPlanKind, PhantomKind, ProbeParams, ScanPlan};
use ptycho_core::stitch::{StitchConfig, TaperWidth};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))
}

fn invalid(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::InvalidConfig(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanSpec {
    Grid { rows: usize, cols: usize, offset: usize },
    Alt { kind: AltPlanKind },
}

impl Default for PlanSpec {
    fn default() -> Self {
        Self::Grid { rows: 3, cols: 3, offset: 20 }
    }
}

impl PlanSpec {
    pub fn build(&self, window: usize, seed: u64) -> Result<ScanPlan> {
        match *self {
            Self::Grid { rows, cols, offset } => make_grid_plan(rows, cols, offset, window),
            Self::Alt { kind } => make_alt_plan(kind, window, seed),
        }
        .map_err(invalid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub phantom: PhantomKind,
    pub probe: ProbeParams,
    pub plan: PlanSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phantom: PhantomKind::Blobs,
            probe: ProbeParams::default(),
            plan: PlanSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    StitchedPrediction,
    #[default]
    Cold,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpfConfig {
    pub epie: EpieConfig,
    pub init_source: InitSource,
}

impl EpfConfig {
    pub fn validate(&self) -> Result<()> {
        self.epie.validate().map_err(invalid)
    }
}

/// Stitching options; an unset crop margin follows the probe's taper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchSettings {
    pub crop_margin: Option<usize>,
    pub taper_width: TaperWidth,
}

impl Default for StitchSettings {
    fn default() -> Self {
        Self {
            crop_margin: None,
            taper_width: TaperWidth::Auto,
        }
    }
}

impl StitchSettings {
    pub fn resolve(&self, probe: &ProbeParams) -> Result<StitchConfig> {
        let base = StitchConfig::for_probe(probe);
        let cfg = StitchConfig {
            crop_margin: self.crop_margin.unwrap_or(base.crop_margin),
            taper_width: self.taper_width,
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Epie,
    Epf,
    StitchedOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Epie => "epie",
            Self::Epf => "epf",
            Self::StitchedOnly => "stitched-only",
        }
    }
}

/// How the stand-in "prediction" is derived from the ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPrediction {
    pub phase_nrmse: f64,
    pub amplitude_nrmse: f64,
    /// Gaussian smoothing of the corrupting noise, in pixels.
    pub noise_sigma: f64,
}

impl Default for SyntheticPrediction {
    fn default() -> Self {
        Self {
            phase_nrmse: 0.3,
            amplitude_nrmse: 0.1,
            noise_sigma: 4.0,
        }
    }
}

impl SyntheticPrediction {
    pub fn validate(&self) -> Result<()> {
        if !(self.phase_nrmse >= 0.0 && self.amplitude_nrmse >= 0.0 && self.noise_sigma > 0.0) {
            return Err(invalid(format!("bad synthetic prediction settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub offsets: Vec<usize>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub phantom: PhantomKind,
    pub probe: ProbeParams,
    pub epie: EpieConfig,
    pub stitch: StitchSettings,
    pub prediction: SyntheticPrediction,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            offsets: vec![20, 30, 40, 50, 60],
            methods: vec![Method::Epie, Method::Epf, Method::StitchedOnly],
            seeds: vec![0, 1, 2, 3, 4],
            grid_rows: 3,
            grid_cols: 3,
            phantom: PhantomKind::Blobs,
            probe: ProbeParams::default(),
            epie: EpieConfig::default(),
            stitch: StitchSettings::default(),
            prediction: SyntheticPrediction::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(invalid("sweep needs at least one offset, method and seed"));
        }
        self.epie.validate().map_err(invalid)?;
        self.prediction.validate()?;
        self.stitch.resolve(&self.probe)?;
        self.probe.build().map_err(invalid)?;
        for &offset in &self.offsets {
            make_grid_plan(self.grid_rows, self.grid_cols, offset, self.probe.window).map_err(invalid)?;
        }
        Ok(())
    }

    pub fn simulation(&self, offset: usize, seed: u64) -> SimulateConfig {
        SimulateConfig {
            seed,
            phantom: self.phantom,
            probe: self.probe,
            plan: PlanSpec::Grid {
                rows: self.grid_rows,
                cols: self.grid_cols,
                offset,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_objects_give_defaults() {
        let s: SimulateConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(s, SimulateConfig::default());
        let e: EpfConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(e.init_source, InitSource::Cold);
        assert_eq!(e.epie.max_iterations, 1500);
        let w: SweepConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(w.offsets, vec![20, 30, 40, 50, 60]);
        assert!(w.validate().is_ok());
    }

    #[test]
    fn plan_specs_parse() {
        let s: SimulateConfig =
            serde_json::from_str(r#"{"plan": {"type": "grid", "rows": 6, "cols": 6, "offset": 60}, "phantom": "text-like"}"#).unwrap();
        assert_eq!(s.plan, PlanSpec::Grid { rows: 6, cols: 6, offset: 60 });
        assert_eq!(s.plan.build(128, 0).unwrap().canvas(), (428, 428));
        let s: SimulateConfig = serde_json::from_str(r#"{"plan": {"type": "alt", "kind": "count7"}}"#).unwrap();
        assert_eq!(s.plan.build(128, 3).unwrap().len(), 7);
        assert!(serde_json::from_str::<SimulateConfig>(r#"{"plan": {"type": "spiral"}}"#).is_err());
        assert!(serde_json::from_str::<SimulateConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn stitch_margin_defaults_to_probe_taper() {
        let probe = ProbeParams { edge_smooth: 2.5, ..ProbeParams::default() };
        assert_eq!(StitchSettings::default().resolve(&probe).unwrap().crop_margin, 3);
        let fixed = StitchSettings { crop_margin: Some(0), taper_width: TaperWidth::Fixed(0) };
        assert!(matches!(fixed.resolve(&probe), Err(PipelineError::InvalidConfig(_))));
    }

    #[test]
    fn bad_sweeps_are_config_errors() {
        let bad = SweepConfig { seeds: vec![], ..SweepConfig::default() };
        assert!(matches!(bad.validate(), Err(PipelineError::InvalidConfig(_))));
        let bad = SweepConfig { offsets: vec![0], ..SweepConfig::default() };
        assert!(bad.validate().is_err());
        let methods: Vec<Method> = serde_json::from_str(r#"["epie", "epf", "stitched-only"]"#).unwrap();
        assert_eq!(methods, SweepConfig::default().methods);
    }
}
