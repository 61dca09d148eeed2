//! Extended ptychographic iterative engine.
//!
//! Each sweep visits every scan position once: form the exit wave inside the
//! probe support, replace its Fourier magnitudes with the measured ones, and
//! feed the exit-wave correction back into the object (and optionally the
//! probe). The sum of squared intensity residuals is accumulated from the
//! pre-projection spectra of the sweep.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ifftshift, ComplexField, Fft2, RealField};
use crate::forward::{DiffractionStack, Probe, ScanPlan};

pub use crate::unwrap::unwrap_phase;

/// SSE at or below this fraction of `sum(I^2)` counts as an exact fit.
///
/// Needed because the relative-change test is undefined on the first sweep
/// and degenerate once the residual reaches round-off.
pub const EXACT_FIT_SSE: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    Sequential,
    /// A fresh permutation per sweep, derived from the seed and sweep index.
    Shuffled(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpieConfig {
    /// Object step size.
    pub alpha: f64,
    /// Probe step size.
    pub beta: f64,
    pub max_iterations: usize,
    /// Stop once `|SSE_k - SSE_{k-1}| / SSE_{k-1}` drops below this.
    pub sse_rel_tol: f64,
    pub update_probe: bool,
    pub scan_order: ScanOrder,
}

impl Default for EpieConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            max_iterations: 1500,
            sse_rel_tol: 1e-6,
            update_probe: false,
            scan_order: ScanOrder::Sequential,
        }
    }
}

impl EpieConfig {
    pub fn validate(&self) -> Result<()> {
        let step = 0.0..=2.0;
        if !(step.contains(&self.alpha) && self.alpha > 0.0) {
            return Err(Error::RangeViolation(format!("alpha {} outside (0, 2]", self.alpha)));
        }
        if !(step.contains(&self.beta) && self.beta > 0.0) {
            return Err(Error::RangeViolation(format!("beta {} outside (0, 2]", self.beta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::RangeViolation("max_iterations must be >= 1".into()));
        }
        if !(self.sse_rel_tol > 0.0) {
            return Err(Error::RangeViolation(format!(
                "sse_rel_tol {} must be positive",
                self.sse_rel_tol
            )));
        }
        Ok(())
    }
}

/// Solver state. `sse_history[k]` is the SSE logged during sweep `k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub object: ComplexField,
    pub probe: ComplexField,
    /// Finite-support constraint, fixed by the initial probe estimate.
    pub support: RealField,
    pub iteration: usize,
    pub sse_history: Vec<f64>,
}

pub fn init_state(
    plan: &ScanPlan,
    probe_estimate: &Probe,
    object_init: Option<&ComplexField>,
) -> Result<ReconState> {
    plan.validate()?;
    let object = match object_init {
        Some(init) => {
            init.ensure_shape(plan.canvas())?;
            init.clone()
        }
        None => ComplexField::ones(plan.canvas_height, plan.canvas_width),
    };
    if probe_estimate.window() != plan.window {
        return Err(Error::ShapeMismatch {
            expected: (plan.window, plan.window),
            found: (probe_estimate.window(), probe_estimate.window()),
        });
    }
    Ok(ReconState {
        object,
        probe: probe_estimate.field().clone(),
        support: probe_estimate.support(),
        iteration: 0,
        sse_history: Vec::new(),
    })
}

/// Replaces spectrum magnitudes with `amplitudes`, keeping phases. Bins with
/// zero magnitude have no phase and are set to zero.
pub fn project_magnitudes(spectrum: &mut [Complex64], amplitudes: &[f64]) {
    for (z, &a) in spectrum.iter_mut().zip(amplitudes) {
        let m = z.norm();
        *z = if m > 0.0 { *z * (a / m) } else { Complex64::new(0.0, 0.0) };
    }
}

fn check_shapes(state: &ReconState, stack: &DiffractionStack) -> Result<()> {
    let n = stack.plan.window;
    state.object.ensure_shape(stack.plan.canvas())?;
    state.probe.ensure_shape((n, n))?;
    state.support.ensure_shape((n, n))?;
    Ok(())
}

/// Buffers and plans reused across sweeps.
struct Workspace {
    fft: Fft2,
    /// Measured moduli `sqrt(I_j)`, uncentred to match the raw FFT layout.
    moduli: Vec<Vec<f64>>,
    intensities: Vec<Vec<f64>>,
    exit: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    window_obj: Vec<Complex64>,
    inside: Vec<bool>,
}

impl Workspace {
    fn new(stack: &DiffractionStack, support: &RealField) -> Self {
        let n = stack.plan.window;
        let intensities: Vec<Vec<f64>> = stack
            .patterns
            .iter()
            .map(|p| ifftshift(p).into_data())
            .collect();
        let moduli = intensities
            .iter()
            .map(|p| p.iter().map(|v| v.max(0.0).sqrt()).collect())
            .collect();
        Self {
            fft: Fft2::new(n, n),
            moduli,
            intensities,
            exit: vec![Complex64::default(); n * n],
            spectrum: vec![Complex64::default(); n * n],
            window_obj: vec![Complex64::default(); n * n],
            inside: support.data().iter().map(|&s| s != 0.0).collect(),
        }
    }

    fn load_exit(&mut self, state: &ReconState, (row, col): (usize, usize), n: usize) {
        let width = state.object.width();
        let obj = state.object.data();
        for r in 0..n {
            let src = (row + r) * width + col;
            self.window_obj[r * n..(r + 1) * n].copy_from_slice(&obj[src..src + n]);
        }
        for i in 0..n * n {
            self.exit[i] = if self.inside[i] {
                self.window_obj[i] * state.probe.data()[i]
            } else {
                Complex64::default()
            };
        }
    }

    fn sweep(&mut self, state: &mut ReconState, stack: &DiffractionStack, cfg: &EpieConfig) -> Result<f64> {
        let n = stack.plan.window;
        let mut order: Vec<usize> = (0..stack.plan.len()).collect();
        if let ScanOrder::Shuffled(seed) = cfg.scan_order {
            let mix = (state.iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ mix));
        }
        let width = state.object.width();
        let mut sse = 0.0;
        for &j in &order {
            let (row, col) = stack.plan.positions[j];
            self.load_exit(state, (row, col), n);

            self.spectrum.copy_from_slice(&self.exit);
            self.fft.forward(&mut self.spectrum);
            sse += self.spectrum
                .iter()
                .zip(&self.intensities[j])
                .map(|(z, i)| (i - z.norm_sqr()).powi(2))
                .sum::<f64>();
            project_magnitudes(&mut self.spectrum, &self.moduli[j]);
            self.fft.inverse(&mut self.spectrum);
            // spectrum now holds the corrected exit wave; turn it into the correction
            for (d, e) in self.spectrum.iter_mut().zip(&self.exit) {
                *d -= e;
            }

            let probe_max = state.probe.data().iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
            if probe_max == 0.0 {
                return Err(Error::ZeroProbe);
            }
            let obj = state.object.data_mut();
            for r in 0..n {
                for c in 0..n {
                    let i = r * n + c;
                    if self.inside[i] {
                        let step = state.probe.data()[i].conj() * self.spectrum[i] * (cfg.alpha / probe_max);
                        obj[(row + r) * width + col + c] += step;
                    }
                }
            }

            if cfg.update_probe {
                let obj_max = (0..n * n)
                    .filter(|&i| self.inside[i])
                    .map(|i| self.window_obj[i].norm_sqr())
                    .fold(0.0, f64::max);
                if obj_max == 0.0 {
                    return Err(Error::ZeroObjectWindow(j));
                }
                let probe = state.probe.data_mut();
                for i in 0..n * n {
                    if self.inside[i] {
                        probe[i] += self.window_obj[i].conj() * self.spectrum[i] * (cfg.beta / obj_max);
                    }
                }
            }
        }
        state.iteration += 1;
        state.sse_history.push(sse);
        Ok(sse)
    }
}

/// One full ePIE sweep over the scan positions. Returns the SSE logged
/// during the sweep (also appended to `state.sse_history`).
pub fn epie_iteration(state: &mut ReconState, stack: &DiffractionStack, cfg: &EpieConfig) -> Result<f64> {
    cfg.validate()?;
    check_shapes(state, stack)?;
    Workspace::new(stack, &state.support).sweep(state, stack, cfg)
}

/// Exact residual `sum_j sum_uv (I_j - |DFT(T_j * P)|^2)^2` at the given state.
pub fn sse(stack: &DiffractionStack, state: &ReconState) -> Result<f64> {
    check_shapes(state, stack)?;
    let n = stack.plan.window;
    let mut ws = Workspace::new(stack, &state.support);
    let mut total = 0.0;
    for (j, &pos) in stack.plan.positions.iter().enumerate() {
        ws.load_exit(state, pos, n);
        ws.fft.forward(&mut ws.exit);
        total += ws
            .exit
            .iter()
            .zip(&ws.intensities[j])
            .map(|(z, i)| (i - z.norm_sqr()).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// Whether the latest logged SSE satisfies the stopping rule.
pub fn has_converged(history: &[f64], total_sq_intensity: f64, rel_tol: f64) -> bool {
    match history {
        [] => false,
        [.., last] if *last <= EXACT_FIT_SSE * total_sq_intensity => true,
        [.., prev, last] => *prev > 0.0 && (last - prev).abs() / prev < rel_tol,
        [_] => false,
    }
}

/// Iterates ePIE until the SSE settles or `max_iterations` sweeps have run.
///
/// The logged SSE usually falls but is not guaranteed to be monotone.
pub fn run_epie(
    stack: &DiffractionStack,
    probe_estimate: &Probe,
    cfg: &EpieConfig,
    object_init: Option<&ComplexField>,
) -> Result<(ReconState, bool)> {
    run_epie_with_observer(stack, probe_estimate, cfg, object_init, |_, _| {})
}

/// As [`run_epie`], calling `observer(k, SSE_k)` after every sweep.
pub fn run_epie_with_observer(
    stack: &DiffractionStack,
    probe_estimate: &Probe,
    cfg: &EpieConfig,
    object_init: Option<&ComplexField>,
    mut observer: impl FnMut(usize, f64),
) -> Result<(ReconState, bool)> {
    cfg.validate()?;
    let mut state = init_state(&stack.plan, probe_estimate, object_init)?;
    let mut ws = Workspace::new(stack, &state.support);
    let total = stack.total_sq_intensity();
    let mut converged = false;
    while state.iteration < cfg.max_iterations {
        let value = ws.sweep(&mut state, stack, cfg)?;
        observer(state.iteration, value);
        if has_converged(&state.sse_history, total, cfg.sse_rel_tol) {
            converged = true;
            break;
        }
    }
    Ok((state, converged))
}
