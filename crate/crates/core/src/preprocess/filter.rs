//! Gaussian bandpass with missing-data-aware (normalized) convolution.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::surface::Surface;

/// Bandpass cutoff wavelengths in µm. The band keeps structure between the
/// short and long cutoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub short_cutoff_um: f64,
    pub long_cutoff_um: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { short_cutoff_um: 20.0, long_cutoff_um: 150.0 }
    }
}

/// Gaussian kernel standard deviation for a 50%-amplitude cutoff wavelength:
/// σ = λ · √(ln 2 / 2) / π, in the same units as λ.
pub fn gaussian_sigma_for_cutoff(lambda: f64) -> f64 {
    lambda * (2f64.ln() / 2.0).sqrt() / std::f64::consts::PI
}

fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_px).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma_px * sigma_px)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn convolve_rows(src: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (rows, cols) = src.dim();
    let radius = (kernel.len() / 2) as i64;
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols as i64 {
            let mut acc = 0.0;
            let lo = (-radius).max(-c);
            let hi = radius.min(cols as i64 - 1 - c);
            for t in lo..=hi {
                acc += kernel[(t + radius) as usize] * src[(r, (c + t) as usize)];
            }
            out[(r, c as usize)] = acc;
        }
    }
    out
}

fn convolve_cols(src: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (rows, cols) = src.dim();
    let radius = (kernel.len() / 2) as i64;
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows as i64 {
        let lo = (-radius).max(-r);
        let hi = radius.min(rows as i64 - 1 - r);
        for c in 0..cols {
            let mut acc = 0.0;
            for t in lo..=hi {
                acc += kernel[(t + radius) as usize] * src[((r + t) as usize, c)];
            }
            out[(r as usize, c)] = acc;
        }
    }
    out
}

/// Normalized-convolution Gaussian low-pass: returns the smoothed values and
/// the per-cell mask weight (fraction of kernel mass over valid cells).
fn lowpass(values: &Array2<f64>, mask: &Array2<f64>, sigma_px: f64) -> (Array2<f64>, Array2<f64>) {
    let kernel = gaussian_kernel(sigma_px);
    let masked = values * mask;
    let num = convolve_cols(&convolve_rows(&masked, &kernel), &kernel);
    let den = convolve_cols(&convolve_rows(mask, &kernel), &kernel);
    (num, den)
}

/// Difference of Gaussian low-passes: output = L(λ_short) − L(λ_long), which
/// removes waviness above the long cutoff and roughness below the short one.
/// Missing cells are zero-filled and compensated by dividing with the
/// convolved mask; cells with less than half their kernel mass on valid data
/// (for either scale) become invalid.
pub fn bandpass(surface: &Surface, params: &FilterParams) -> Result<Surface> {
    let res = surface.resolution_um();
    if !(params.short_cutoff_um > 0.0 && params.short_cutoff_um < params.long_cutoff_um) {
        return Err(Error::param(format!(
            "cutoffs must satisfy 0 < short < long, got {} and {}",
            params.short_cutoff_um, params.long_cutoff_um
        )));
    }
    if params.short_cutoff_um <= 2.0 * res {
        return Err(Error::param(format!(
            "short cutoff {} µm is at or below the Nyquist wavelength {} µm",
            params.short_cutoff_um,
            2.0 * res
        )));
    }

    let sigma_s = gaussian_sigma_for_cutoff(params.short_cutoff_um) / res;
    let sigma_c = gaussian_sigma_for_cutoff(params.long_cutoff_um) / res;

    let mask_f = surface.mask().map(|&m| if m { 1.0 } else { 0.0 });
    let (num_s, den_s) = lowpass(surface.values(), &mask_f, sigma_s);
    let (num_c, den_c) = lowpass(surface.values(), &mask_f, sigma_c);

    let (rows, cols) = surface.values().dim();
    let mut values = Array2::zeros((rows, cols));
    let mut valid = Array2::from_elem((rows, cols), false);
    for r in 0..rows {
        for c in 0..cols {
            if !surface.is_valid(r, c) {
                continue;
            }
            let (ws, wc) = (den_s[(r, c)], den_c[(r, c)]);
            if ws.min(wc) < 0.5 {
                continue;
            }
            values[(r, c)] = num_s[(r, c)] / ws - num_c[(r, c)] / wc;
            valid[(r, c)] = true;
        }
    }
    Surface::new(values, valid, res, surface.id().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn sinusoid(rows: usize, cols: usize, res: f64, lambda_um: f64) -> Surface {
        let values = Array2::from_shape_fn((rows, cols), |(_, c)| {
            (2.0 * std::f64::consts::PI * c as f64 * res / lambda_um).sin()
        });
        Surface::from_values(values, res, "sin").unwrap()
    }

    fn interior_amplitude(s: &Surface, margin: usize) -> f64 {
        let mut amp = 0.0f64;
        for (r, c, v) in s.iter_valid() {
            if r >= margin && c >= margin && r + margin < s.rows() && c + margin < s.cols() {
                amp = amp.max(v.abs());
            }
        }
        amp
    }

    #[test]
    fn sigma_convention() {
        // At the cutoff wavelength a Gaussian with this σ transmits 50%:
        // exp(−2π²σ²/λ²) = 0.5.
        let lambda = 150.0;
        let sigma = gaussian_sigma_for_cutoff(lambda);
        let transmitted = (-2.0 * std::f64::consts::PI.powi(2) * sigma * sigma / (lambda * lambda)).exp();
        assert_abs_diff_eq!(transmitted, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_surface_maps_to_zero() {
        let s = Surface::from_values(Array2::from_elem((64, 64), 100.0), 6.25, "c").unwrap();
        let out = bandpass(&s, &FilterParams::default()).unwrap();
        for (_, _, v) in out.iter_valid() {
            assert!(v.abs() < 1e-6 * 100.0, "{v}");
        }
    }

    #[test]
    fn long_wavelength_is_suppressed() {
        // 500 µm ripple at 6.25 µm/px: 80 px per period over 5 periods.
        let s = sinusoid(400, 400, 6.25, 500.0);
        let out = bandpass(&s, &FilterParams::default()).unwrap();
        let amp = interior_amplitude(&out, 40);
        assert!(amp < 0.15, "long-wave amplitude {amp}");
    }

    #[test]
    fn in_band_wavelength_passes() {
        let s = sinusoid(201, 201, 6.25, 60.0);
        let out = bandpass(&s, &FilterParams::default()).unwrap();
        let amp = interior_amplitude(&out, 30);
        assert!(amp > 0.7, "in-band amplitude {amp}");
    }

    #[test]
    fn linear_on_fully_valid_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let a = Array2::from_shape_fn((80, 80), |_| rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_fn((80, 80), |_| rng.gen_range(-1.0..1.0));
        let combo = 2.5 * &a - 0.75 * &b;
        let params = FilterParams::default();
        let fa = bandpass(&Surface::from_values(a, 6.25, "a").unwrap(), &params).unwrap();
        let fb = bandpass(&Surface::from_values(b, 6.25, "b").unwrap(), &params).unwrap();
        let fc = bandpass(&Surface::from_values(combo, 6.25, "c").unwrap(), &params).unwrap();
        for ((r, c, vc), (_, _, va)) in fc.iter_valid().zip(fa.iter_valid()) {
            let vb = fb.values()[(r, c)];
            assert_abs_diff_eq!(vc, 2.5 * va - 0.75 * vb, epsilon = 1e-9);
        }
    }

    #[test]
    fn missing_region_does_not_leak_values() {
        // A large indent marked missing must not drag down its surroundings:
        // with normalized convolution the band output around a hole stays
        // near zero for a constant input.
        let values = Array2::from_elem((101, 101), 50.0);
        let mut valid = Array2::from_elem((101, 101), true);
        for r in 40..60 {
            for c in 40..60 {
                valid[(r, c)] = false;
            }
        }
        let s = Surface::new(values, valid, 6.25, "hole").unwrap();
        let out = bandpass(&s, &FilterParams::default()).unwrap();
        for (_, _, v) in out.iter_valid() {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn isolated_cells_become_invalid() {
        // A lone valid cell has almost no valid neighborhood mass at the
        // long scale, so it cannot be filtered.
        let values = Array2::from_elem((61, 61), 1.0);
        let mut valid = Array2::from_elem((61, 61), false);
        valid[(30, 30)] = true;
        let s = Surface::new(values, valid, 6.25, "lone").unwrap();
        let out = bandpass(&s, &FilterParams::default()).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn nyquist_violation_is_rejected() {
        let s = sinusoid(32, 32, 25.0, 60.0);
        // short cutoff 20 µm at 25 µm/px is far below 2·resolution.
        assert!(bandpass(&s, &FilterParams::default()).is_err());
        assert!(bandpass(&s, &FilterParams { short_cutoff_um: 150.0, long_cutoff_um: 20.0 }).is_err());
    }
}
