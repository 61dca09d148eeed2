//! Two-dimensional sample grids and the centred DFT pair.
//!
//! Transforms are unnormalised in the forward direction and scaled by
//! `1/(H*W)` in the inverse direction. Spectra are always stored with the
//! zero-frequency bin at `(H/2, W/2)`.

use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Magnitudes below this are treated as exact zeros when extracting a phase.
pub const PHASE_MAGNITUDE_FLOOR: f64 = 1e-12;

/// Row-major grid of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

pub type ComplexField = Grid<Complex64>;
pub type RealField = Grid<f64>;

impl<T> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidDimensions {
                height,
                width,
                len: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a grid by evaluating `f(row, col)` at every sample.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&T> {
        if row < self.height && col < self.width {
            self.data.get(row * self.width + col)
        } else {
            None
        }
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: self.shape(),
            });
        }
        Ok(())
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Copies the `height x width` block whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::PlanOutOfBounds {
                row,
                col,
                canvas_height: self.height,
                canvas_width: self.width,
            });
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Grid::new(height, width, data)
    }

    /// Writes `block` into this grid with its top-left corner at `(row, col)`.
    pub fn paste(&mut self, row: usize, col: usize, block: &Grid<T>) -> Result<()> {
        if row + block.height > self.height || col + block.width > self.width {
            return Err(Error::PlanOutOfBounds {
                row,
                col,
                canvas_height: self.height,
                canvas_width: self.width,
            });
        }
        for r in 0..block.height {
            let dst = (row + r) * self.width + col;
            self.data[dst..dst + block.width].clone_from_slice(block.row(r));
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (row, col): (usize, usize)) -> &T {
        debug_assert!(row < self.height && col < self.width);
        &self.data[row * self.width + col]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        debug_assert!(row < self.height && col < self.width);
        &mut self.data[row * self.width + col]
    }
}

impl RealField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl ComplexField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex64::new(0.0, 0.0))
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex64::new(1.0, 0.0))
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn abs(&self) -> RealField {
        self.map(|z| z.norm())
    }

    pub fn intensity(&self) -> RealField {
        self.map(|z| z.norm_sqr())
    }
}

fn shift_by<T: Copy>(src: &[T], dst: &mut [T], height: usize, width: usize, dr: usize, dc: usize) {
    for r in 0..height {
        let rr = (r + dr) % height;
        for c in 0..width {
            dst[rr * width + (c + dc) % width] = src[r * width + c];
        }
    }
}

/// Moves the zero-frequency bin from `(0, 0)` to `(H/2, W/2)`.
pub fn fftshift<T: Copy>(f: &Grid<T>) -> Grid<T> {
    let mut data = f.data.clone();
    shift_by(&f.data, &mut data, f.height, f.width, f.height / 2, f.width / 2);
    Grid {
        height: f.height,
        width: f.width,
        data,
    }
}

/// Inverse of [`fftshift`], also for odd sizes.
pub fn ifftshift<T: Copy>(f: &Grid<T>) -> Grid<T> {
    let (h, w) = f.shape();
    let mut data = f.data.clone();
    shift_by(&f.data, &mut data, h, w, h - h / 2, w - w / 2);
    Grid {
        height: h,
        width: w,
        data,
    }
}

/// Planned 2-D FFT for a fixed grid shape, operating on uncentred buffers.
///
/// Used directly by the solver's inner loop; [`dft2`] and [`idft2`] wrap it
/// with the centring shifts.
pub struct Fft2 {
    height: usize,
    width: usize,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_forward = planner.plan_fft_forward(width);
        let row_inverse = planner.plan_fft_inverse(width);
        let col_forward = planner.plan_fft_forward(height);
        let col_inverse = planner.plan_fft_inverse(height);
        let scratch_len = [&row_forward, &row_inverse, &col_forward, &col_inverse]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            height,
            width,
            row_forward,
            row_inverse,
            col_forward,
            col_inverse,
            transposed: vec![Complex64::default(); height * width],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn run(&mut self, buf: &mut [Complex64], forward: bool) {
        assert_eq!(buf.len(), self.height * self.width, "buffer does not match plan");
        let (h, w) = (self.height, self.width);
        let (rows, cols) = if forward {
            (&self.row_forward, &self.col_forward)
        } else {
            (&self.row_inverse, &self.col_inverse)
        };
        rows.process_with_scratch(buf, &mut self.scratch);
        for r in 0..h {
            for c in 0..w {
                self.transposed[c * h + r] = buf[r * w + c];
            }
        }
        cols.process_with_scratch(&mut self.transposed, &mut self.scratch);
        for c in 0..w {
            for r in 0..h {
                buf[r * w + c] = self.transposed[c * h + r];
            }
        }
    }

    /// Unnormalised forward transform, zero frequency at index 0.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.run(buf, true);
    }

    /// Inverse transform scaled by `1/(H*W)`, zero frequency at index 0.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.run(buf, false);
        let scale = 1.0 / (self.height * self.width) as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

/// Forward 2-D DFT with the output centred on `(H/2, W/2)`.
pub fn dft2(f: &ComplexField) -> ComplexField {
    let mut plan = Fft2::new(f.height, f.width);
    let mut out = f.clone();
    plan.forward(&mut out.data);
    fftshift(&out)
}

/// Inverse of [`dft2`]: undoes the centring, then applies the scaled inverse DFT.
pub fn idft2(spectrum: &ComplexField) -> ComplexField {
    let mut plan = Fft2::new(spectrum.height, spectrum.width);
    let mut out = ifftshift(spectrum);
    plan.inverse(&mut out.data);
    out
}

/// Combines amplitude and phase planes into `A * exp(i * phi)`.
pub fn make_transmission(amplitude: &RealField, phase: &RealField) -> Result<ComplexField> {
    phase.ensure_shape(amplitude.shape())?;
    let pi = std::f64::consts::PI;
    if let Some(a) = amplitude.data.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::RangeViolation(format!("amplitude {a} outside [0, 1]")));
    }
    if let Some(p) = phase.data.iter().find(|p| !(-pi..=pi).contains(*p)) {
        return Err(Error::RangeViolation(format!("phase {p} outside [-pi, pi]")));
    }
    let data = amplitude
        .data
        .iter()
        .zip(&phase.data)
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    Grid::new(amplitude.height, amplitude.width, data)
}

/// Splits a field into `|T|` and `arg T`, reporting phase 0 where `|T|` is
/// below [`PHASE_MAGNITUDE_FLOOR`].
pub fn split_transmission(t: &ComplexField) -> (RealField, RealField) {
    let amplitude = t.abs();
    let phase = t.map(|z| {
        if z.norm() < PHASE_MAGNITUDE_FLOOR {
            0.0
        } else {
            z.arg()
        }
    });
    (amplitude, phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_field(h: usize, w: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(h, w, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn max_abs_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_at_centre_has_flat_spectrum() {
        let mut f = ComplexField::zeros(8, 8);
        f[(4, 4)] = Complex64::new(1.0, 0.0);
        let spectrum = dft2(&f);
        for z in spectrum.data() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_maps_to_centre_bin() {
        let spectrum = dft2(&ComplexField::ones(8, 8));
        for r in 0..8 {
            for c in 0..8 {
                let expected = if (r, c) == (4, 4) { 64.0 } else { 0.0 };
                assert!((spectrum[(r, c)].norm() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centre_bin_spectrum_inverts_to_constant() {
        let mut spectrum = ComplexField::zeros(8, 8);
        spectrum[(4, 4)] = Complex64::new(64.0, 0.0);
        let f = idft2(&spectrum);
        assert!(max_abs_diff(&f, &ComplexField::ones(8, 8)) < 1e-12);
    }

    #[test]
    fn zero_field_round_trips_to_zero() {
        let z = ComplexField::zeros(8, 8);
        assert_eq!(idft2(&z), z);
    }

    #[test]
    fn round_trip_8x8() {
        let f = random_field(8, 8, 1);
        assert!(max_abs_diff(&idft2(&dft2(&f)), &f) < 1e-10);
    }

    #[test]
    fn parseval_16x16() {
        let f = random_field(16, 16, 2);
        let lhs = dft2(&f).energy();
        let rhs = 256.0 * f.energy();
        assert!(((lhs - rhs) / rhs).abs() < 1e-10);
    }

    #[test]
    fn shifts_are_inverse_for_odd_sizes() {
        let f = Grid::from_fn(5, 7, |r, c| (r * 7 + c) as f64);
        assert_eq!(ifftshift(&fftshift(&f)), f);
        assert_eq!(fftshift(&f)[(2, 3)], 0.0);
    }

    #[test]
    fn transmission_examples() {
        let ones = make_transmission(&RealField::filled(2, 2, 1.0), &RealField::zeros(2, 2)).unwrap();
        assert!(ones.data().iter().all(|z| *z == Complex64::new(1.0, 0.0)));

        let t = make_transmission(&RealField::filled(1, 1, 0.5), &RealField::filled(1, 1, FRAC_PI_2))
            .unwrap();
        assert!((t[(0, 0)] - Complex64::new(0.0, 0.5)).norm() < 1e-15);

        let t = make_transmission(&RealField::zeros(1, 1), &RealField::filled(1, 1, 2.0)).unwrap();
        assert_eq!(t[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn transmission_rejects_bad_input() {
        let a = RealField::filled(2, 2, 1.0);
        assert!(matches!(
            make_transmission(&a, &RealField::zeros(2, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            make_transmission(&RealField::filled(2, 2, 1.5), &RealField::zeros(2, 2)),
            Err(Error::RangeViolation(_))
        ));
        assert!(matches!(
            make_transmission(&a, &RealField::filled(2, 2, 4.0)),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn split_conventions() {
        let t = Grid::new(1, 2, vec![Complex64::new(-1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        let (a, p) = split_transmission(&t);
        assert_eq!(a.data(), &[1.0, 0.0]);
        assert!((p[(0, 0)] - PI).abs() < 1e-15);
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn crop_and_paste() {
        let f = Grid::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
        let block = f.crop(1, 2, 2, 3).unwrap();
        assert_eq!(block.data(), &[7.0, 8.0, 9.0, 12.0, 13.0, 14.0]);
        assert!(f.crop(3, 0, 2, 1).is_err());
        let mut g = RealField::zeros(4, 5);
        g.paste(1, 2, &block).unwrap();
        assert_eq!(g[(2, 4)], 14.0);
        assert_eq!(g[(0, 0)], 0.0);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(Grid::new(0, 3, Vec::<f64>::new()).is_err());
        assert!(Grid::new(2, 2, vec![0.0; 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_and_round_trip(h in 1usize..=64, w in 1usize..=64, seed in any::<u64>()) {
            let f = random_field(h, w, seed);
            let spectrum = dft2(&f);
            let n = (h * w) as f64;
            let e = f.energy();
            prop_assert!(((spectrum.energy() - n * e) / (n * e)).abs() < 1e-10);
            let back = idft2(&spectrum);
            prop_assert!(max_abs_diff(&back, &f) / e.sqrt() < 1e-10);
        }

        #[test]
        fn linearity(seed in any::<u64>(), ar in -2.0..2.0f64, ai in -2.0..2.0f64, b in -2.0..2.0f64) {
            let f = random_field(12, 10, seed);
            let g = random_field(12, 10, seed ^ 0x55);
            let alpha = Complex64::new(ar, ai);
            let beta = Complex64::new(b, 0.0);
            let combo = Grid::new(12, 10, f.data().iter().zip(g.data()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            let lhs = dft2(&combo);
            let (df, dg) = (dft2(&f), dft2(&g));
            let rhs = Grid::new(12, 10, df.data().iter().zip(dg.data()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            let scale = lhs.energy().sqrt().max(1.0);
            prop_assert!(max_abs_diff(&lhs, &rhs) / scale < 1e-10);
        }

        #[test]
        fn transmission_round_trip(a in 0.05..=1.0f64, p in -PI..=PI) {
            let t = make_transmission(&RealField::filled(1, 1, a), &RealField::filled(1, 1, p)).unwrap();
            let (amp, phase) = split_transmission(&t);
            prop_assert!((amp[(0, 0)] - a).abs() < 1e-12);
            // -pi and pi are the same angle; arg reports pi
            let dp = (phase[(0, 0)] - p).abs();
            prop_assert!(dp < 1e-12 || (dp - 2.0 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn large_round_trip_256() {
        let f = random_field(256, 256, 9);
        let spectrum = dft2(&f);
        let e = f.energy();
        assert!(((spectrum.energy() - 65536.0 * e) / (65536.0 * e)).abs() < 1e-10);
        assert!(max_abs_diff(&idft2(&spectrum), &f) / e.sqrt() < 1e-10);
    }
}
