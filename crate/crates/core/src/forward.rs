//! Far-field diffraction simulation: probes, scan plans, phantoms and the
//! channel-stacked input sets consumed by learned reconstructors.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fftshift, split_transmission, ComplexField, Fft2, Grid, RealField};

/// Window of the default probe, in pixels.
pub const DEFAULT_WINDOW: usize = 128;
/// Support radius of the default probe. A 20 px lateral offset then shares
/// 68.7 % of the support between neighbouring positions.
pub const DEFAULT_RADIUS: f64 = 40.5;
/// Hard edge. A soft rim leaves support pixels so dimly lit that ePIE
/// barely updates them.
pub const DEFAULT_EDGE_SMOOTH: f64 = 0.0;
pub const DEFAULT_PHASE_CURVATURE: f64 = 1.0;

/// Maximum number of patterns in one input set.
pub const MAX_SET_CHANNELS: usize = 9;

/// Parameters of the disc probe family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeParams {
    pub window: usize,
    pub radius: f64,
    pub edge_smooth: f64,
    pub phase_curvature: f64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            radius: DEFAULT_RADIUS,
            edge_smooth: DEFAULT_EDGE_SMOOTH,
            phase_curvature: DEFAULT_PHASE_CURVATURE,
        }
    }
}

impl ProbeParams {
    pub fn build(&self) -> Result<Probe> {
        make_disc_probe(self.window, self.radius, self.edge_smooth, self.phase_curvature)
    }
}

/// Complex illumination with finite, disc-shaped support centred at
/// `(window/2, window/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    params: ProbeParams,
    field: ComplexField,
}

impl Probe {
    /// Wraps an arbitrary window-sized field, e.g. a reconstructed probe.
    pub fn from_field(params: ProbeParams, field: ComplexField) -> Result<Self> {
        field.ensure_shape((params.window, params.window))?;
        Ok(Self { params, field })
    }

    pub fn params(&self) -> &ProbeParams {
        &self.params
    }

    pub fn window(&self) -> usize {
        self.params.window
    }

    pub fn radius(&self) -> f64 {
        self.params.radius
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    /// `{0, 1}` plane marking samples where the probe is nonzero.
    pub fn support(&self) -> RealField {
        self.field.map(|z| if z.norm() > 0.0 { 1.0 } else { 0.0 })
    }
}

/// Disc probe: flat amplitude out to `radius - edge_smooth`, a raised-cosine
/// taper reaching zero at `radius`, and a quadratic phase
/// `phase_curvature * (r / radius)^2` inside the disc.
pub fn make_disc_probe(
    window: usize,
    radius: f64,
    edge_smooth: f64,
    phase_curvature: f64,
) -> Result<Probe> {
    if window == 0 || !(radius > 0.0 && radius <= window as f64 / 2.0) {
        return Err(Error::RangeViolation(format!(
            "probe radius {radius} must lie in (0, {}]",
            window as f64 / 2.0
        )));
    }
    if !(edge_smooth >= 0.0) || !phase_curvature.is_finite() {
        return Err(Error::RangeViolation(format!(
            "edge_smooth {edge_smooth} must be >= 0 and curvature finite"
        )));
    }
    let centre = (window / 2) as f64;
    let inner = radius - edge_smooth;
    let field = ComplexField::from_fn(window, window, |r, c| {
        let d = ((r as f64 - centre).powi(2) + (c as f64 - centre).powi(2)).sqrt();
        if d >= radius {
            return Complex64::new(0.0, 0.0);
        }
        let amp = if d <= inner {
            1.0
        } else {
            0.5 * (1.0 + (PI * (d - inner) / edge_smooth).cos())
        };
        Complex64::from_polar(amp, phase_curvature * (d / radius).powi(2))
    });
    Ok(Probe {
        params: ProbeParams {
            window,
            radius,
            edge_smooth,
            phase_curvature,
        },
        field,
    })
}

/// Fraction of a disc's area shared with a copy displaced by `distance`,
/// for ideal continuous circles.
pub fn circle_overlap_fraction(distance: f64, radius: f64) -> f64 {
    if distance >= 2.0 * radius {
        return 0.0;
    }
    let d = distance.max(0.0);
    let lens = 2.0 * radius * radius * (d / (2.0 * radius)).acos()
        - 0.5 * d * (4.0 * radius * radius - d * d).sqrt();
    lens / (PI * radius * radius)
}

/// Radius at which two ideal discs `offset` apart overlap by `percent`.
///
/// Overlap grows monotonically with radius, so plain bisection suffices.
pub fn calibrate_radius(offset: f64, percent: f64) -> f64 {
    let target = percent / 100.0;
    let (mut lo, mut hi) = (offset / 2.0, offset * 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if circle_overlap_fraction(offset, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Percentage of the probe support shared with a copy shifted by `offset`
/// pixels along the columns, by pixel counting.
pub fn overlap_percent(offset: usize, probe: &Probe) -> f64 {
    let support = probe.support();
    let n = probe.window();
    let total: usize = support.data().iter().filter(|&&v| v > 0.0).count();
    if total == 0 {
        return 0.0;
    }
    let mut shared = 0usize;
    for r in 0..n {
        for c in offset..n {
            if support[(r, c)] > 0.0 && support[(r, c - offset)] > 0.0 {
                shared += 1;
            }
        }
    }
    shared as f64 / total as f64 * 100.0
}

/// Ordered scan offsets on a canvas; each position is the top-left corner
/// `(row, col)` of a `window x window` probe window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub positions: Vec<(usize, usize)>,
    pub window: usize,
    pub canvas_height: usize,
    pub canvas_width: usize,
}

impl ScanPlan {
    /// Checks the plan's invariants: nonempty, unique, windows inside the canvas.
    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::Empty("scan plan has no positions"));
        }
        if self.window == 0 {
            return Err(Error::RangeViolation("window must be positive".into()));
        }
        for &(row, col) in &self.positions {
            if row + self.window > self.canvas_height || col + self.window > self.canvas_width {
                return Err(Error::PlanOutOfBounds {
                    row,
                    col,
                    canvas_height: self.canvas_height,
                    canvas_width: self.canvas_width,
                });
            }
        }
        let mut sorted = self.positions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::RangeViolation("duplicate scan positions".into()));
        }
        Ok(())
    }

    pub fn canvas(&self) -> (usize, usize) {
        (self.canvas_height, self.canvas_width)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Builds a plan whose canvas is the tight extent of `positions`,
    /// translated so the smallest row and column are zero.
    pub fn from_positions(positions: Vec<(usize, usize)>, window: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty("scan plan has no positions"));
        }
        let r0 = positions.iter().map(|p| p.0).min().unwrap_or(0);
        let c0 = positions.iter().map(|p| p.1).min().unwrap_or(0);
        let positions: Vec<_> = positions.into_iter().map(|(r, c)| (r - r0, c - c0)).collect();
        let h = positions.iter().map(|p| p.0).max().unwrap_or(0) + window;
        let w = positions.iter().map(|p| p.1).max().unwrap_or(0) + window;
        let plan = Self {
            positions,
            window,
            canvas_height: h,
            canvas_width: w,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Raster grid scan, row-major.
pub fn make_grid_plan(rows: usize, cols: usize, offset: usize, window: usize) -> Result<ScanPlan> {
    if rows == 0 || cols == 0 || offset == 0 || window == 0 {
        return Err(Error::RangeViolation(format!(
            "grid {rows}x{cols} with offset {offset} and window {window}"
        )));
    }
    let positions = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r * offset, c * offset)))
        .collect();
    Ok(ScanPlan {
        positions,
        window,
        canvas_height: window + (rows - 1) * offset,
        canvas_width: window + (cols - 1) * offset,
    })
}

/// Non-grid scan layouts with at most nine positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AltPlanKind {
    Diamond,
    Parallelogram,
    Random,
    Count5,
    Count6,
    Count7,
    Count8,
}

impl std::str::FromStr for AltPlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "diamond" => Self::Diamond,
            "parallelogram" => Self::Parallelogram,
            "random" => Self::Random,
            "count5" => Self::Count5,
            "count6" => Self::Count6,
            "count7" => Self::Count7,
            "count8" => Self::Count8,
            other => return Err(Error::RangeViolation(format!("unknown layout {other:?}"))),
        })
    }
}

/// Neighbour spacing used by the alternative layouts: 20 px for a 128 px window.
pub fn alt_plan_spacing(window: usize) -> usize {
    ((window as f64 * 0.16).round() as usize).max(1)
}

pub fn make_alt_plan(kind: AltPlanKind, window: usize, seed: u64) -> Result<ScanPlan> {
    let s = alt_plan_spacing(window);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<(usize, usize)> = match kind {
        AltPlanKind::Diamond => {
            // 3x3 lattice rotated by 45 degrees
            let h = ((s as f64) / 2f64.sqrt()).round().max(1.0) as usize;
            (0..3)
                .flat_map(|i| (0..3).map(move |j| ((i + j) * h, (i + 2 - j) * h)))
                .collect()
        }
        AltPlanKind::Parallelogram => (0..3)
            .flat_map(|i| (0..3).map(move |j| (i * s, j * s + i * s / 2)))
            .collect(),
        AltPlanKind::Random => {
            let span = 2 * s;
            let mut picked = Vec::with_capacity(MAX_SET_CHANNELS);
            while picked.len() < MAX_SET_CHANNELS {
                let p = (rng.random_range(0..=span), rng.random_range(0..=span));
                if !picked.contains(&p) {
                    picked.push(p);
                }
            }
            picked
        }
        AltPlanKind::Count5 | AltPlanKind::Count6 | AltPlanKind::Count7 | AltPlanKind::Count8 => {
            let n = match kind {
                AltPlanKind::Count5 => 5,
                AltPlanKind::Count6 => 6,
                AltPlanKind::Count7 => 7,
                _ => 8,
            };
            // keep the centre of a 3x3 grid plus a seeded subset of its ring
            let mut ring: Vec<(usize, usize)> = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i * s, j * s)))
                .filter(|&p| p != (s, s))
                .collect();
            ring.shuffle(&mut rng);
            let mut picked: Vec<_> = ring.into_iter().take(n - 1).collect();
            picked.push((s, s));
            picked.sort_unstable();
            picked
        }
    };
    ScanPlan::from_positions(positions, window)
}

/// Simulated far-field intensities, one centred pattern per scan position.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffractionStack {
    pub plan: ScanPlan,
    pub patterns: Vec<RealField>,
}

impl DiffractionStack {
    pub fn new(plan: ScanPlan, patterns: Vec<RealField>) -> Result<Self> {
        plan.validate()?;
        if patterns.len() != plan.len() {
            return Err(Error::IndexOutOfRange {
                index: patterns.len(),
                len: plan.len(),
            });
        }
        for p in &patterns {
            p.ensure_shape((plan.window, plan.window))?;
            if p.data().iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::RangeViolation("negative or NaN intensity".into()));
            }
        }
        Ok(Self { plan, patterns })
    }

    /// Sum over all patterns of the squared intensities.
    pub fn total_sq_intensity(&self) -> f64 {
        self.patterns
            .iter()
            .flat_map(|p| p.data())
            .map(|v| v * v)
            .sum()
    }
}

/// Computes `I_j = |DFT(T_j * P)|^2` for every scan position, where `T_j`
/// is the probe-sized crop of the object at the position.
pub fn simulate_stack(t: &ComplexField, probe: &Probe, plan: &ScanPlan) -> Result<DiffractionStack> {
    plan.validate()?;
    t.ensure_shape(plan.canvas())?;
    if probe.window() != plan.window {
        return Err(Error::ShapeMismatch {
            expected: (plan.window, plan.window),
            found: (probe.window(), probe.window()),
        });
    }
    let n = plan.window;
    let mut fft = Fft2::new(n, n);
    let patterns = plan
        .positions
        .iter()
        .map(|&(row, col)| {
            let mut exit = t.crop(row, col, n, n)?;
            exit.data_mut()
                .iter_mut()
                .zip(probe.field().data())
                .for_each(|(o, p)| *o *= p);
            fft.forward(exit.data_mut());
            // |z|^2 is nonnegative by construction, no clamping needed
            Ok(fftshift(&exit.intensity()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiffractionStack {
        plan: plan.clone(),
        patterns,
    })
}

/// Union of probe supports placed at `positions` on a canvas.
pub fn support_union(
    canvas: (usize, usize),
    probe: &Probe,
    positions: &[(usize, usize)],
) -> Result<RealField> {
    let (h, w) = canvas;
    let n = probe.window();
    let support = probe.support();
    let mut mask = RealField::zeros(h, w);
    for &(row, col) in positions {
        if row + n > h || col + n > w {
            return Err(Error::PlanOutOfBounds {
                row,
                col,
                canvas_height: h,
                canvas_width: w,
            });
        }
        for r in 0..n {
            for c in 0..n {
                if support[(r, c)] > 0.0 {
                    mask[(row + r, col + c)] = 1.0;
                }
            }
        }
    }
    Ok(mask)
}

/// Up to nine patterns placed at their relative scan offsets, one per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSet {
    pub channels: Vec<RealField>,
    /// Top-left corner of each channel's window inside the set canvas.
    pub placements: Vec<(usize, usize)>,
    pub support_mask: RealField,
    /// Offset of the set canvas inside the full scan canvas.
    pub origin: (usize, usize),
    pub indices: Vec<usize>,
}

impl InputSet {
    pub fn canvas(&self) -> (usize, usize) {
        self.support_mask.shape()
    }
}

pub fn assemble_input_set(
    stack: &DiffractionStack,
    probe: &Probe,
    group: &[usize],
) -> Result<InputSet> {
    if group.is_empty() {
        return Err(Error::Empty("input set group"));
    }
    if group.len() > MAX_SET_CHANNELS {
        return Err(Error::RangeViolation(format!(
            "{} patterns exceed the {MAX_SET_CHANNELS}-channel limit",
            group.len()
        )));
    }
    let positions = &stack.plan.positions;
    let placed = group
        .iter()
        .map(|&i| {
            positions.get(i).copied().ok_or(Error::IndexOutOfRange {
                index: i,
                len: positions.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r0 = placed.iter().map(|p| p.0).min().unwrap_or(0);
    let c0 = placed.iter().map(|p| p.1).min().unwrap_or(0);
    let n = stack.plan.window;
    let h = placed.iter().map(|p| p.0).max().unwrap_or(0) - r0 + n;
    let w = placed.iter().map(|p| p.1).max().unwrap_or(0) - c0 + n;
    let placements: Vec<_> = placed.iter().map(|&(r, c)| (r - r0, c - c0)).collect();
    let channels = group
        .iter()
        .zip(&placements)
        .map(|(&i, &(r, c))| {
            let mut ch = RealField::zeros(h, w);
            ch.paste(r, c, &stack.patterns[i])?;
            Ok(ch)
        })
        .collect::<Result<Vec<_>>>()?;
    let support_mask = support_union((h, w), probe, &placements)?;
    Ok(InputSet {
        channels,
        placements,
        support_mask,
        origin: (r0, c0),
        indices: group.to_vec(),
    })
}

/// Groups a `rows x cols` grid into 3x3 blocks whose starts step by two,
/// with the last block flush against the far edge. Smaller grids form a
/// single group.
pub fn grid_groups(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    fn starts(n: usize) -> Vec<usize> {
        if n <= 3 {
            return vec![0];
        }
        let mut s: Vec<usize> = (0..=n - 3).step_by(2).collect();
        if *s.last().unwrap_or(&0) != n - 3 {
            s.push(n - 3);
        }
        s
    }
    let mut groups = Vec::new();
    for &r0 in &starts(rows) {
        for &c0 in &starts(cols) {
            let group = (r0..(r0 + 3).min(rows))
                .flat_map(|r| (c0..(c0 + 3).min(cols)).map(move |c| r * cols + c))
                .collect();
            groups.push(group);
        }
    }
    groups
}

/// Amplitude and phase labels restricted to the illuminated region.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedLabel {
    pub amplitude: RealField,
    pub phase: RealField,
    pub mask: RealField,
}

pub fn make_masked_label(
    t: &ComplexField,
    probe: &Probe,
    positions: &[(usize, usize)],
) -> Result<MaskedLabel> {
    let mask = support_union(t.shape(), probe, positions)?;
    let (mut amplitude, mut phase) = split_transmission(t);
    for ((a, p), m) in amplitude
        .data_mut()
        .iter_mut()
        .zip(phase.data_mut())
        .zip(mask.data())
    {
        if *m == 0.0 {
            *a = 0.0;
            *p = 0.0;
        }
    }
    Ok(MaskedLabel {
        amplitude,
        phase,
        mask,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    Blobs,
    TextLike,
    Gradients,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Self::Blobs),
            "text-like" => Ok(Self::TextLike),
            "gradients" => Ok(Self::Gradients),
            other => Err(Error::RangeViolation(format!("unknown phantom kind {other:?}"))),
        }
    }
}

/// Separable Gaussian blur with clamped edges.
pub fn gaussian_blur(f: &RealField, sigma: f64) -> RealField {
    if sigma <= 0.0 {
        return f.clone();
    }
    let half = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (h, w) = f.shape();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let tmp = RealField::from_fn(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, g)| g * f[(r, clamp(c as isize + k as isize - half, w))])
            .sum::<f64>()
            / norm
    });
    RealField::from_fn(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, g)| g * tmp[(clamp(r as isize + k as isize - half, h), c)])
            .sum::<f64>()
            / norm
    })
}

fn normalize_to(f: &RealField, lo: f64, hi: f64) -> RealField {
    let (min, max) = (f.min(), f.max());
    let span = max - min;
    f.map(|v| {
        let x = if span > 0.0 { (v - min) / span } else { 0.5 };
        (lo + (hi - lo) * x).clamp(lo, hi)
    })
}

fn phantom_plane(h: usize, w: usize, kind: PhantomKind, rng: &mut ChaCha8Rng) -> RealField {
    let (hf, wf) = (h as f64, w as f64);
    match kind {
        PhantomKind::Blobs => {
            let count = rng.random_range(12..=24);
            let max_sigma = (hf.min(wf) / 6.0).max(6.0);
            let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(0.0..hf),
                        rng.random_range(0.0..wf),
                        rng.random_range(4.0..max_sigma),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            RealField::from_fn(h, w, |r, c| {
                blobs
                    .iter()
                    .map(|&(br, bc, s, a)| {
                        let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                        a * (-d2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            })
        }
        PhantomKind::TextLike => {
            let mut f = RealField::zeros(h, w);
            let strokes = rng.random_range(10..=20);
            for _ in 0..strokes {
                let thick = rng.random_range(4..=8usize);
                let len = rng.random_range((0.1 * wf.min(hf)).max(4.0)..(0.4 * wf.min(hf)).max(5.0))
                    as usize;
                let value = rng.random_range(0.3..1.0);
                let (sh, sw) = if rng.random_bool(0.5) { (thick, len) } else { (len, thick) };
                let r0 = rng.random_range(0..h);
                let c0 = rng.random_range(0..w);
                for r in r0..(r0 + sh).min(h) {
                    for c in c0..(c0 + sw).min(w) {
                        f[(r, c)] = value;
                    }
                }
            }
            gaussian_blur(&f, 1.5)
        }
        PhantomKind::Gradients => {
            let angle = rng.random_range(0.0..2.0 * PI);
            let (dr, dc) = (angle.sin(), angle.cos());
            let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let period = rng.random_range(16.0..(hf.max(wf)).max(17.0));
                    let theta = rng.random_range(0.0..PI);
                    (
                        2.0 * PI / period,
                        theta,
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.2..1.0),
                    )
                })
                .collect();
            RealField::from_fn(h, w, |r, c| {
                let (rf, cf) = (r as f64, c as f64);
                let ramp = (rf * dr + cf * dc) / hf.max(wf);
                ramp + waves
                    .iter()
                    .map(|&(k, th, ph, a)| a * (k * (rf * th.sin() + cf * th.cos()) + ph).cos())
                    .sum::<f64>()
                    * 0.5
            })
        }
    }
}

/// Seeded synthetic transmission with amplitude in `[0.05, 1]` and phase in
/// `[-pi, pi]`, both planes spanning their full range.
pub fn make_phantom(height: usize, width: usize, seed: u64, kind: PhantomKind) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = normalize_to(&phantom_plane(height, width, kind, &mut rng), 0.05, 1.0);
    let phase = normalize_to(&phantom_plane(height, width, kind, &mut rng), -PI, PI);
    Grid::new(
        height,
        width,
        amp.data()
            .iter()
            .zip(phase.data())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect(),
    )
    .expect("planes share the requested shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{dft2, make_transmission};

    fn count_disc_pixels(window: usize, radius: f64) -> usize {
        let c = (window / 2) as f64;
        let mut n = 0;
        for r in 0..window {
            for col in 0..window {
                if ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt() < radius {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn binary_disc_probe() {
        let p = make_disc_probe(64, 20.0, 0.0, 0.0).unwrap();
        assert!(p.field().data().iter().all(|z| z.norm() == 0.0 || (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(p.field()[(32, 32)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn centre_phase_is_zero_for_any_curvature() {
        for curv in [-3.0, 0.5, 7.0] {
            let p = make_disc_probe(32, 10.0, 2.0, curv).unwrap();
            assert_eq!(p.field()[(16, 16)].arg(), 0.0);
        }
    }

    #[test]
    fn probe_range_checks() {
        assert!(make_disc_probe(64, 33.0, 0.0, 0.0).is_err());
        assert!(make_disc_probe(64, 0.0, 0.0, 0.0).is_err());
        assert!(make_disc_probe(64, 10.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn default_support_area_matches_pixel_count() {
        let p = ProbeParams::default().build().unwrap();
        let support = p.support().sum() as usize;
        assert_eq!(support, count_disc_pixels(128, 40.5));
        let ideal = PI * 40.5 * 40.5;
        assert!((support as f64 - ideal).abs() <= 40.0, "{support} vs {ideal}");
    }

    #[test]
    fn default_radius_is_calibrated_against_twenty_pixel_overlap() {
        let r = calibrate_radius(20.0, 68.7);
        // continuous circles give ~40.3; pixel counting on the 40.5 disc lands on 68.7
        assert!((r - DEFAULT_RADIUS).abs() < 0.5, "calibrated radius {r}");
        let p = ProbeParams::default().build().unwrap();
        assert!((overlap_percent(20, &p) - 68.7).abs() < 1.5);
    }

    #[test]
    fn overlap_edge_cases_and_monotonicity() {
        let p = ProbeParams::default().build().unwrap();
        assert_eq!(overlap_percent(0, &p), 100.0);
        assert_eq!(overlap_percent(81, &p), 0.0);
        assert_eq!(overlap_percent(128, &p), 0.0);
        let values: Vec<f64> = (0..=81).map(|d| overlap_percent(d, &p)).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn overlap_table_reproduces_reference_pairs() {
        let p = ProbeParams::default().build().unwrap();
        for (offset, expected) in [(20, 68.7), (30, 53.6), (40, 39.4), (50, 26.3), (60, 14.9)] {
            let got = overlap_percent(offset, &p);
            assert!((got - expected).abs() <= 1.5, "{offset}: {got} vs {expected}");
        }
    }

    #[test]
    fn grid_plan_geometry() {
        let p = make_grid_plan(1, 1, 20, 128).unwrap();
        assert_eq!((p.canvas(), p.positions.clone()), ((128, 128), vec![(0, 0)]));
        let p = make_grid_plan(3, 3, 20, 128).unwrap();
        assert_eq!((p.canvas(), p.len()), ((168, 168), 9));
        let p = make_grid_plan(6, 6, 20, 128).unwrap();
        assert_eq!((p.canvas(), p.len()), ((228, 228), 36));
        assert_eq!(p.positions[7], (20, 20));
        assert!(make_grid_plan(0, 3, 20, 128).is_err());
        assert!(make_grid_plan(3, 3, 0, 128).is_err());
    }

    #[test]
    fn alt_plans_are_valid_and_seeded() {
        let kinds = [
            AltPlanKind::Diamond,
            AltPlanKind::Parallelogram,
            AltPlanKind::Random,
            AltPlanKind::Count5,
            AltPlanKind::Count6,
            AltPlanKind::Count7,
            AltPlanKind::Count8,
        ];
        for kind in kinds {
            for seed in 0..5 {
                let a = make_alt_plan(kind, 128, seed).unwrap();
                assert!(a.len() <= 9);
                a.validate().unwrap();
                assert_eq!(a, make_alt_plan(kind, 128, seed).unwrap());
            }
        }
        assert_eq!(make_alt_plan(AltPlanKind::Count5, 128, 3).unwrap().len(), 5);
        assert_eq!(make_alt_plan(AltPlanKind::Count8, 128, 3).unwrap().len(), 8);
    }

    #[test]
    fn random_plan_pairs_always_share_support() {
        let probe = ProbeParams::default().build().unwrap();
        let support = probe.support();
        for seed in 0..20 {
            let plan = make_alt_plan(AltPlanKind::Random, 128, seed).unwrap();
            for (i, a) in plan.positions.iter().enumerate() {
                for b in &plan.positions[i + 1..] {
                    let ma = support_union(plan.canvas(), &probe, &[*a]).unwrap();
                    let mb = support_union(plan.canvas(), &probe, &[*b]).unwrap();
                    let shared = ma.data().iter().zip(mb.data()).filter(|(x, y)| **x > 0.0 && **y > 0.0).count();
                    assert!(shared > 0, "seed {seed}: {a:?} {b:?}");
                }
            }
            let _ = &support;
        }
    }

    #[test]
    fn uniform_object_gives_probe_only_patterns() {
        let probe = make_disc_probe(32, 10.0, 2.0, 1.0).unwrap();
        let plan = make_grid_plan(2, 2, 6, 32).unwrap();
        let t = ComplexField::ones(38, 38);
        let stack = simulate_stack(&t, &probe, &plan).unwrap();
        let expected = dft2(probe.field()).intensity();
        for pat in &stack.patterns {
            for (a, b) in pat.data().iter().zip(expected.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pattern_energy_obeys_parseval() {
        let probe = make_disc_probe(32, 12.0, 2.0, 2.0).unwrap();
        let plan = make_grid_plan(2, 3, 7, 32).unwrap();
        let t = make_phantom(39, 46, 4, PhantomKind::Blobs);
        let stack = simulate_stack(&t, &probe, &plan).unwrap();
        for (pat, &(r, c)) in stack.patterns.iter().zip(&plan.positions) {
            let crop = t.crop(r, c, 32, 32).unwrap();
            let e: f64 = crop.data().iter().zip(probe.field().data()).map(|(a, b)| (a * b).norm_sqr()).sum();
            assert!((pat.sum() - 1024.0 * e).abs() / (1024.0 * e) < 1e-12);
        }
    }

    #[test]
    fn shift_equivariance() {
        let probe = make_disc_probe(32, 12.0, 2.0, 1.5).unwrap();
        let big = make_phantom(60, 60, 11, PhantomKind::Gradients);
        let plan = make_grid_plan(2, 2, 8, 32).unwrap();
        let (s, t) = (5, 9);
        let base = big.crop(0, 0, 40, 40).unwrap();
        let moved_plan = ScanPlan {
            positions: plan.positions.iter().map(|&(r, c)| (r + s, c + t)).collect(),
            window: 32,
            canvas_height: 60,
            canvas_width: 60,
        };
        let mut shifted = ComplexField::ones(60, 60);
        shifted.paste(s, t, &base).unwrap();
        let a = simulate_stack(&base, &probe, &plan).unwrap();
        let b = simulate_stack(&shifted, &probe, &moved_plan).unwrap();
        for (pa, pb) in a.patterns.iter().zip(&b.patterns) {
            for (x, y) in pa.data().iter().zip(pb.data()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn simulate_rejects_mismatches() {
        let probe = make_disc_probe(32, 10.0, 0.0, 0.0).unwrap();
        let plan = make_grid_plan(2, 2, 6, 32).unwrap();
        assert!(matches!(
            simulate_stack(&ComplexField::ones(30, 38), &probe, &plan),
            Err(Error::ShapeMismatch { .. })
        ));
        let bad = ScanPlan {
            positions: vec![(10, 0)],
            window: 32,
            canvas_height: 38,
            canvas_width: 38,
        };
        assert!(matches!(
            simulate_stack(&ComplexField::ones(38, 38), &probe, &bad),
            Err(Error::PlanOutOfBounds { .. })
        ));
    }

    #[test]
    fn input_set_geometry_and_zero_padding() {
        let probe = make_disc_probe(32, 12.0, 1.0, 1.0).unwrap();
        let plan = make_grid_plan(3, 3, 8, 32).unwrap();
        let t = make_phantom(48, 48, 2, PhantomKind::Blobs);
        let stack = simulate_stack(&t, &probe, &plan).unwrap();

        let single = assemble_input_set(&stack, &probe, &[4]).unwrap();
        assert_eq!(single.channels.len(), 1);
        assert_eq!(single.canvas(), (32, 32));
        assert_eq!(single.support_mask, probe.support());

        let full = assemble_input_set(&stack, &probe, &(0..9).collect::<Vec<_>>()).unwrap();
        assert_eq!(full.canvas(), (48, 48));
        assert_eq!(full.channels.len(), 9);
        for (ch, (&(r, c), &idx)) in full.channels.iter().zip(full.placements.iter().zip(&full.indices)) {
            for rr in 0..48 {
                for cc in 0..48 {
                    let inside = rr >= r && rr < r + 32 && cc >= c && cc < c + 32;
                    if !inside {
                        assert_eq!(ch[(rr, cc)], 0.0);
                    }
                }
            }
            let placed = ch.crop(r, c, 32, 32).unwrap().sum();
            assert!((placed - stack.patterns[idx].sum()).abs() <= 1e-12 * placed.abs());
        }
        assert!(matches!(
            assemble_input_set(&stack, &probe, &[0, 9]),
            Err(Error::IndexOutOfRange { index: 9, .. })
        ));
    }

    #[test]
    fn grid_groups_cover_larger_grids() {
        assert_eq!(grid_groups(3, 3), vec![(0..9).collect::<Vec<_>>()]);
        let g = grid_groups(6, 6);
        assert_eq!(g.len(), 9);
        assert!(g.iter().all(|grp| grp.len() == 9));
        let mut seen: Vec<usize> = g.into_iter().flatten().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 36);
    }

    #[test]
    fn masked_label_cases() {
        let probe = make_disc_probe(16, 8.0, 0.0, 0.0).unwrap();
        let t = make_phantom(24, 24, 3, PhantomKind::TextLike);
        let positions = [(0, 0), (8, 8)];
        let label = make_masked_label(&t, &probe, &positions).unwrap();
        // oracle: count pixels inside either disc directly
        let mut union = 0;
        for r in 0..24 {
            for c in 0..24 {
                let inside = positions.iter().any(|&(pr, pc)| {
                    ((r as f64 - (pr + 8) as f64).powi(2) + (c as f64 - (pc + 8) as f64).powi(2)).sqrt() < 8.0
                });
                if inside {
                    union += 1;
                } else {
                    assert_eq!((label.amplitude[(r, c)], label.phase[(r, c)]), (0.0, 0.0));
                }
            }
        }
        assert_eq!(label.mask.sum() as usize, union);

        let empty = make_masked_label(&t, &probe, &[]).unwrap();
        assert!(empty.amplitude.data().iter().chain(empty.phase.data()).chain(empty.mask.data()).all(|v| *v == 0.0));

        let relabel = make_masked_label(
            &make_transmission(&label.amplitude, &label.phase).unwrap(),
            &probe,
            &positions,
        )
        .unwrap();
        for (a, b) in relabel.amplitude.data().iter().zip(label.amplitude.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in relabel.phase.data().iter().zip(label.phase.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(relabel.mask, label.mask);
        assert!(make_masked_label(&t, &probe, &[(10, 0)]).is_err());
    }

    #[test]
    fn full_illumination_label_is_plain_split() {
        // single-pixel probe visiting every pixel illuminates the whole canvas
        let probe = make_disc_probe(1, 0.5, 0.0, 0.0).unwrap();
        let t = make_phantom(8, 8, 1, PhantomKind::Blobs);
        let positions: Vec<_> = (0..8).flat_map(|r| (0..8).map(move |c| (r, c))).collect();
        let label = make_masked_label(&t, &probe, &positions).unwrap();
        let (a, p) = split_transmission(&t);
        assert!(label.mask.data().iter().all(|m| *m == 1.0));
        assert_eq!((label.amplitude, label.phase), (a, p));
    }

    #[test]
    fn phantom_ranges_and_determinism() {
        for kind in [PhantomKind::Blobs, PhantomKind::TextLike, PhantomKind::Gradients] {
            for seed in 0..100 {
                let t = make_phantom(24, 20, seed, kind);
                let (a, p) = split_transmission(&t);
                assert!(a.min() >= 0.05 - 1e-12 && a.max() <= 1.0 + 1e-12);
                assert!(p.min() >= -PI && p.max() <= PI);
            }
            assert_eq!(make_phantom(32, 32, 7, kind), make_phantom(32, 32, 7, kind));
        }
    }

    #[test]
    fn different_seeds_give_different_phantoms() {
        for kind in [PhantomKind::Blobs, PhantomKind::TextLike, PhantomKind::Gradients] {
            for seed in 0..20u64 {
                let (a, _) = split_transmission(&make_phantom(64, 64, seed, kind));
                let (b, _) = split_transmission(&make_phantom(64, 64, seed + 1000, kind));
                let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
                let den: f64 = b.data().iter().map(|y| y * y).sum();
                assert!((num / den).sqrt() > 0.1, "{kind:?} seed {seed}");
            }
        }
    }
}
