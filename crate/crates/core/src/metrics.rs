//! Reconstruction error metrics and Fourier ring correlation.
//!
//! Every masked metric only reads pixels where the mask is nonzero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dft2, ComplexField, RealField};

/// Resolution threshold for FRC curves.
pub const FRC_THRESHOLD: f64 = 1.0 / 7.0;

/// Constant phase offset between an estimate and its reference. Linear
/// phase terms are never fitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalPhaseFit {
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub amp_mae: f64,
    pub amp_nrmse: f64,
    pub phase_mae: f64,
    pub phase_nrmse: f64,
    pub phase_offset: GlobalPhaseFit,
    pub pixel_count: usize,
}

fn masked<'a>(
    estimate: &'a RealField,
    truth: &'a RealField,
    mask: &'a RealField,
) -> Result<impl Iterator<Item = (f64, f64)> + Clone + 'a> {
    truth.ensure_shape(estimate.shape())?;
    mask.ensure_shape(estimate.shape())?;
    if mask.data().iter().all(|&m| m == 0.0) {
        return Err(Error::EmptyMask);
    }
    Ok(estimate
        .data()
        .iter()
        .zip(truth.data())
        .zip(mask.data())
        .filter(|(_, &m)| m != 0.0)
        .map(|((&e, &t), _)| (e, t)))
}

/// Mean absolute difference over the mask.
pub fn mae(estimate: &RealField, truth: &RealField, mask: &RealField) -> Result<f64> {
    let pairs = masked(estimate, truth, mask)?;
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (e, t)| (s + (e - t).abs(), n + 1));
    Ok(sum / n as f64)
}

/// Mean of `estimate - truth` over the mask.
pub fn fit_constant_offset(estimate: &RealField, truth: &RealField, mask: &RealField) -> Result<GlobalPhaseFit> {
    let pairs = masked(estimate, truth, mask)?;
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (e, t)| (s + (e - t), n + 1));
    Ok(GlobalPhaseFit { a: sum / n as f64 })
}

/// `||(estimate - a) - truth|| / ||truth||` over the mask, where `a` is the
/// fitted constant offset when `correct_offset` is set and 0 otherwise.
pub fn nrmse(estimate: &RealField, truth: &RealField, mask: &RealField, correct_offset: bool) -> Result<f64> {
    let offset = if correct_offset {
        fit_constant_offset(estimate, truth, mask)?.a
    } else {
        0.0
    };
    let pairs = masked(estimate, truth, mask)?;
    let (err, norm) = pairs.fold((0.0, 0.0), |(err, norm), (e, t)| {
        (err + (e - offset - t).powi(2), norm + t * t)
    });
    if norm == 0.0 {
        return Err(Error::ZeroNormTruth);
    }
    Ok((err / norm).sqrt())
}

/// Multiplies every sample by `exp(i (a + b x + c y))`, with `x` the column
/// and `y` the row index.
pub fn apply_global_phase_shift(t: &ComplexField, a: f64, b: f64, c: f64) -> ComplexField {
    ComplexField::from_fn(t.height(), t.width(), |row, col| {
        t[(row, col)] * Complex64::from_polar(1.0, a + b * col as f64 + c * row as f64)
    })
}

pub fn report(
    est_amp: &RealField,
    est_phase: &RealField,
    true_amp: &RealField,
    true_phase: &RealField,
    mask: &RealField,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        amp_mae: mae(est_amp, true_amp, mask)?,
        amp_nrmse: nrmse(est_amp, true_amp, mask, false)?,
        phase_mae: mae(est_phase, true_phase, mask)?,
        phase_nrmse: nrmse(est_phase, true_phase, mask, true)?,
        phase_offset: fit_constant_offset(est_phase, true_phase, mask)?,
        pixel_count: mask.data().iter().filter(|&&m| m != 0.0).count(),
    })
}

/// One FRC curve: ring `r` sits at normalised frequency `r / (N/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrcCurve {
    pub frequencies: Vec<f64>,
    pub correlations: Vec<f64>,
    /// First frequency where the curve falls below [`FRC_THRESHOLD`] and
    /// stays there for at least two consecutive rings.
    pub crossing: Option<f64>,
}

/// Fourier ring correlation of two equally sized square images.
///
/// Rings are one pixel wide, indexed by rounded radius from the centred
/// zero frequency, and run from 0 to the Nyquist radius `N/2`. Rings with
/// no energy in either image report 0.
pub fn frc(img1: &RealField, img2: &RealField) -> Result<FrcCurve> {
    img2.ensure_shape(img1.shape())?;
    let (h, w) = img1.shape();
    if h != w {
        return Err(Error::NonSquare(h, w));
    }
    let n = h;
    let to_complex = |f: &RealField| f.map(|&v| Complex64::new(v, 0.0));
    let f1 = dft2(&to_complex(img1));
    let f2 = dft2(&to_complex(img2));
    let nyquist = n as f64 / 2.0;
    let rings = nyquist.floor() as usize + 1;
    let mut cross = vec![0.0; rings];
    let mut e1 = vec![0.0; rings];
    let mut e2 = vec![0.0; rings];
    let centre = (n / 2) as f64;
    for r in 0..n {
        for c in 0..n {
            let radius = ((r as f64 - centre).powi(2) + (c as f64 - centre).powi(2)).sqrt();
            let ring = radius.round() as usize;
            if ring >= rings {
                continue;
            }
            let (a, b) = (f1[(r, c)], f2[(r, c)]);
            // Re(a conj b), written symmetrically so frc(a, b) == frc(b, a) bitwise
            cross[ring] += a.re * b.re + a.im * b.im;
            e1[ring] += a.norm_sqr();
            e2[ring] += b.norm_sqr();
        }
    }
    let correlations: Vec<f64> = (0..rings)
        .map(|i| {
            let denom = (e1[i] * e2[i]).sqrt();
            if denom > 0.0 {
                cross[i] / denom
            } else {
                0.0
            }
        })
        .collect();
    let frequencies: Vec<f64> = (0..rings).map(|i| i as f64 / nyquist).collect();
    let crossing = correlations
        .windows(2)
        .position(|w| w[0] < FRC_THRESHOLD && w[1] < FRC_THRESHOLD)
        .map(|i| frequencies[i]);
    Ok(FrcCurve {
        frequencies,
        correlations,
        crossing,
    })
}
