//! Fixed-scale PNG previews and the FRC plot.

use std::f64::consts::PI;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use ptycho_core::RealField;

use crate::error::{PipelineError, Result};

fn to_gray(field: &RealField, lo: f64, hi: f64) -> GrayImage {
    let (h, w) = field.shape();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let t = (field[(y as usize, x as usize)] - lo) / (hi - lo);
        Luma([(t.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

fn save(img: impl FnOnce(&Path) -> image::ImageResult<()>, path: &Path) -> Result<()> {
    img(path).map_err(|e| PipelineError::data(path, e.to_string()))
}

/// Amplitude mapped from [0, 1] to [0, 255].
pub fn save_amplitude(path: &Path, field: &RealField) -> Result<()> {
    save(|p| to_gray(field, 0.0, 1.0).save(p), path)
}

/// Phase mapped from [-pi, pi] to [0, 255]; values outside saturate.
pub fn save_phase(path: &Path, field: &RealField) -> Result<()> {
    save(|p| to_gray(field, -PI, PI).save(p), path)
}

const PLOT_W: u32 = 480;
const PLOT_H: u32 = 320;
const MARGIN: u32 = 32;
const Y_MIN: f64 = -0.25;
const Y_MAX: f64 = 1.05;

fn to_px(x: f64, y: f64) -> (i64, i64) {
    let span_w = (PLOT_W - 2 * MARGIN) as f64;
    let span_h = (PLOT_H - 2 * MARGIN) as f64;
    let px = MARGIN as f64 + x.clamp(0.0, 1.0) * span_w;
    let py = (PLOT_H - MARGIN) as f64 - (y.clamp(Y_MIN, Y_MAX) - Y_MIN) / (Y_MAX - Y_MIN) * span_h;
    (px.round() as i64, py.round() as i64)
}

fn put(img: &mut RgbImage, x: i64, y: i64, colour: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, colour);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), colour: Rgb<u8>, dash: Option<i64>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        if dash.is_some_and(|d| (s / d) % 2 == 1) {
            continue;
        }
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        put(img, x, y, colour);
    }
}

/// Plots FRC curves over normalised frequency [0, 1] with the threshold
/// drawn dashed.
pub fn save_frc_plot(path: &Path, frequencies: &[f64], curves: &[&[f64]], threshold: f64) -> Result<()> {
    const COLOURS: [Rgb<u8>; 3] = [Rgb([200, 40, 40]), Rgb([40, 80, 200]), Rgb([40, 150, 60])];
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    line(&mut img, to_px(0.0, Y_MIN), to_px(1.0, Y_MIN), axis, None);
    line(&mut img, to_px(0.0, Y_MIN), to_px(0.0, Y_MAX), axis, None);
    let grey = Rgb([150, 150, 150]);
    for y in [0.0, 1.0] {
        line(&mut img, to_px(0.0, y), to_px(1.0, y), grey, Some(2));
    }
    line(&mut img, to_px(0.0, threshold), to_px(1.0, threshold), axis, Some(6));
    for (curve, colour) in curves.iter().zip(COLOURS.iter().cycle()) {
        for (i, pair) in frequencies.windows(2).enumerate() {
            let a = to_px(pair[0], curve[i]);
            let b = to_px(pair[1], curve[i + 1]);
            line(&mut img, a, b, *colour, None);
        }
    }
    save(|p| img.save(p), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grey_levels_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let f = RealField::new(1, 4, vec![-0.5, 0.0, 0.5, 2.0]).unwrap();
        save_amplitude(&path, &f).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        let px: Vec<u8> = img.pixels().map(|p| p.0[0]).collect();
        assert_eq!(px, vec![0, 0, 128, 255]);

        let f = RealField::new(1, 3, vec![-PI, 0.0, PI]).unwrap();
        save_phase(&path, &f).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        let px: Vec<u8> = img.pixels().map(|p| p.0[0]).collect();
        assert_eq!(px, vec![0, 128, 255]);
    }

    #[test]
    fn frc_plot_draws_curve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frc.png");
        let freqs: Vec<f64> = (0..=8).map(|r| r as f64 / 8.0).collect();
        let curve = vec![1.0; 9];
        save_frc_plot(&path, &freqs, &[&curve], 1.0 / 7.0).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (PLOT_W, PLOT_H));
        let (x, y) = to_px(0.5, 1.0);
        assert_eq!(img.get_pixel(x as u32, y as u32), &Rgb([200, 40, 40]));
    }
}
