//! Crop-and-feather stitching of local patch predictions.
//!
//! Each patch is first cropped to the bounding box of its support, shrunk by
//! a margin. Wherever another patch overlaps it, its weight ramps linearly
//! from 1 at the start of the overlap down towards 0 at its own cropped
//! edge. Weights are then renormalised per pixel so they sum to one on every
//! covered pixel, which also settles corners where several patches meet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::forward::ProbeParams;

/// A local amplitude/phase estimate placed at `origin` on the canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPrediction {
    pub amplitude: RealField,
    pub phase: RealField,
    pub support_mask: RealField,
    pub origin: (usize, usize),
}

impl PatchPrediction {
    /// Validates shapes and zeroes both planes outside the support.
    pub fn new(
        mut amplitude: RealField,
        mut phase: RealField,
        support_mask: RealField,
        origin: (usize, usize),
    ) -> Result<Self> {
        phase.ensure_shape(amplitude.shape())?;
        support_mask.ensure_shape(amplitude.shape())?;
        for ((a, p), m) in amplitude
            .data_mut()
            .iter_mut()
            .zip(phase.data_mut())
            .zip(support_mask.data())
        {
            if *m == 0.0 {
                *a = 0.0;
                *p = 0.0;
            }
        }
        Ok(Self {
            amplitude,
            phase,
            support_mask,
            origin,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.amplitude.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperWidth {
    /// Ramp across the whole pairwise overlap.
    Auto,
    #[serde(untagged)]
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchConfig {
    pub crop_margin: usize,
    pub taper_width: TaperWidth,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self::for_probe(&ProbeParams::default())
    }
}

impl StitchConfig {
    /// Crops away the tapered rim of the illumination disc.
    pub fn for_probe(params: &ProbeParams) -> Self {
        Self {
            crop_margin: params.edge_smooth.ceil() as usize,
            taper_width: TaperWidth::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taper_width == TaperWidth::Fixed(0) {
            return Err(Error::RangeViolation("taper_width must be >= 1".into()));
        }
        Ok(())
    }
}

fn support_bbox(mask: &RealField) -> Option<(usize, usize, usize, usize)> {
    let (h, w) = mask.shape();
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for r in 0..h {
        for c in 0..w {
            if mask[(r, c)] != 0.0 {
                bbox = Some(match bbox {
                    None => (r, r, c, c),
                    Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                });
            }
        }
    }
    bbox
}

/// Restricts a patch to the bounding box of its support shrunk by
/// `cfg.crop_margin` on every side.
pub fn crop_patch(p: &PatchPrediction, cfg: &StitchConfig) -> Result<PatchPrediction> {
    let m = cfg.crop_margin;
    let empty = Error::EmptyAfterCrop {
        origin: p.origin,
        margin: m,
    };
    let (r0, r1, c0, c1) = support_bbox(&p.support_mask).ok_or_else(|| empty.clone())?;
    if r0 + m > r1.saturating_sub(m) || c0 + m > c1.saturating_sub(m) || r1 < m || c1 < m {
        return Err(empty);
    }
    let (top, left) = (r0 + m, c0 + m);
    let (h, w) = (r1 - m - top + 1, c1 - m - left + 1);
    let support_mask = p.support_mask.crop(top, left, h, w)?;
    if support_mask.data().iter().all(|&v| v == 0.0) {
        return Err(empty);
    }
    Ok(PatchPrediction {
        amplitude: p.amplitude.crop(top, left, h, w)?,
        phase: p.phase.crop(top, left, h, w)?,
        support_mask,
        origin: (p.origin.0 + top, p.origin.1 + left),
    })
}

/// Ramp factor along one axis for pixel `x` of interval `[lo, hi)` against a
/// neighbour spanning `[nlo, nhi)`.
fn axis_factor(x: usize, (lo, hi): (usize, usize), (nlo, nhi): (usize, usize), taper: TaperWidth) -> f64 {
    let width = |overlap: usize| match taper {
        TaperWidth::Auto => overlap,
        TaperWidth::Fixed(t) => t.min(overlap),
    };
    if nlo > lo && nhi > hi && nlo < hi {
        // neighbour continues past our far edge
        let tau = width(hi - nlo);
        let start = hi - tau;
        if x < start {
            1.0
        } else {
            (tau as f64 - (x - start) as f64 - 0.5) / tau as f64
        }
    } else if nlo < lo && nhi < hi && nhi > lo {
        let tau = width(nhi - lo);
        if x >= lo + tau {
            1.0
        } else {
            ((x - lo) as f64 + 0.5) / tau as f64
        }
    } else {
        1.0
    }
}

fn check_fits(p: &PatchPrediction, canvas: (usize, usize)) -> Result<()> {
    let (h, w) = p.shape();
    if p.origin.0 + h > canvas.0 || p.origin.1 + w > canvas.1 {
        return Err(Error::NoCoverage {
            origin: p.origin,
            extent: (h, w),
            canvas,
        });
    }
    Ok(())
}

/// Per-patch blending weights (patch-local planes) for already cropped
/// patches. On every canvas pixel covered by at least one support the
/// weights sum to one; elsewhere they are zero.
pub fn feather_weights(
    patches: &[PatchPrediction],
    canvas: (usize, usize),
    taper: TaperWidth,
) -> Result<Vec<RealField>> {
    for p in patches {
        check_fits(p, canvas)?;
    }
    let rows = |p: &PatchPrediction| (p.origin.0, p.origin.0 + p.shape().0);
    let cols = |p: &PatchPrediction| (p.origin.1, p.origin.1 + p.shape().1);
    let covers = |p: &PatchPrediction, r: usize, c: usize| {
        let ((r0, r1), (c0, c1)) = (rows(p), cols(p));
        r >= r0 && r < r1 && c >= c0 && c < c1 && p.support_mask[(r - r0, c - c0)] != 0.0
    };

    let mut raw: Vec<RealField> = Vec::with_capacity(patches.len());
    for (i, p) in patches.iter().enumerate() {
        let neighbours: Vec<&PatchPrediction> = patches
            .iter()
            .enumerate()
            .filter(|&(j, q)| {
                let ((a0, a1), (b0, b1)) = (rows(p), rows(q));
                let ((c0, c1), (d0, d1)) = (cols(p), cols(q));
                j != i && a0 < b1 && b0 < a1 && c0 < d1 && d0 < c1
            })
            .map(|(_, q)| q)
            .collect();
        let (h, w) = p.shape();
        let plane = RealField::from_fn(h, w, |r, c| {
            if p.support_mask[(r, c)] == 0.0 {
                return 0.0;
            }
            let (gr, gc) = (p.origin.0 + r, p.origin.1 + c);
            neighbours
                .iter()
                .filter(|q| covers(q, gr, gc))
                .map(|q| axis_factor(gr, rows(p), rows(q), taper) * axis_factor(gc, cols(p), cols(q), taper))
                .product()
        });
        raw.push(plane);
    }

    let mut total = RealField::zeros(canvas.0, canvas.1);
    for (p, w) in patches.iter().zip(&raw) {
        let (h, wd) = p.shape();
        for r in 0..h {
            for c in 0..wd {
                total[(p.origin.0 + r, p.origin.1 + c)] += w[(r, c)];
            }
        }
    }
    Ok(patches
        .iter()
        .zip(raw)
        .map(|(p, mut w)| {
            let (h, wd) = p.shape();
            for r in 0..h {
                for c in 0..wd {
                    let t = total[(p.origin.0 + r, p.origin.1 + c)];
                    if t > 0.0 {
                        w[(r, c)] /= t;
                    }
                }
            }
            w
        })
        .collect())
}

/// Blended amplitude and phase, plus the per-pixel weight sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Stitched {
    pub amplitude: RealField,
    pub phase: RealField,
    pub coverage: RealField,
}

/// Crops, feathers and sums the patches onto a `canvas`-sized grid. Phase
/// is blended as plain values, so adjacent patches must agree on wrapping.
pub fn stitch(patches: &[PatchPrediction], canvas: (usize, usize), cfg: &StitchConfig) -> Result<Stitched> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(Error::Empty("no patches to stitch"));
    }
    let cropped = patches
        .iter()
        .map(|p| crop_patch(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let weights = feather_weights(&cropped, canvas, cfg.taper_width)?;
    let mut out = Stitched {
        amplitude: RealField::zeros(canvas.0, canvas.1),
        phase: RealField::zeros(canvas.0, canvas.1),
        coverage: RealField::zeros(canvas.0, canvas.1),
    };
    for (p, w) in cropped.iter().zip(&weights) {
        let (h, wd) = p.shape();
        for r in 0..h {
            for c in 0..wd {
                let weight = w[(r, c)];
                if weight == 0.0 {
                    continue;
                }
                let at = (p.origin.0 + r, p.origin.1 + c);
                out.amplitude[at] += weight * p.amplitude[(r, c)];
                out.phase[at] += weight * p.phase[(r, c)];
                out.coverage[at] += weight;
            }
        }
    }
    Ok(out)
}
