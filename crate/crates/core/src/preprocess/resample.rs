//! Downsampling to a common lateral resolution by area-weighted block means.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::surface::Surface;

/// Resamples to a coarser resolution. Each target cell covers a
/// `ratio × ratio` block of source pixels (ratio = target/source, possibly
/// fractional); its value is the area-weighted mean of the valid source
/// pixels under it. A target cell whose footprint is less than half covered
/// by valid source area (off-grid area counts as missing) becomes invalid.
pub fn resample(surface: &Surface, target_resolution_um: f64) -> Result<Surface> {
    let src_res = surface.resolution_um();
    if !(target_resolution_um > 0.0) || !target_resolution_um.is_finite() {
        return Err(Error::param(format!("target resolution must be positive, got {target_resolution_um}")));
    }
    if target_resolution_um < src_res {
        return Err(Error::param(format!(
            "upsampling requested: target {target_resolution_um} µm is finer than source {src_res} µm"
        )));
    }
    if target_resolution_um == src_res {
        return Ok(surface.clone());
    }

    let ratio = target_resolution_um / src_res;
    let rows_in = surface.rows();
    let cols_in = surface.cols();
    let rows_out = (rows_in as f64 / ratio).ceil() as usize;
    let cols_out = (cols_in as f64 / ratio).ceil() as usize;

    let mut values = Array2::zeros((rows_out, cols_out));
    let mut valid = Array2::from_elem((rows_out, cols_out), false);
    let footprint = ratio * ratio;

    for tr in 0..rows_out {
        let r_start = tr as f64 * ratio;
        let r_end = r_start + ratio;
        let r0 = r_start.floor() as usize;
        let r1 = (r_end.ceil() as usize).min(rows_in);
        for tc in 0..cols_out {
            let c_start = tc as f64 * ratio;
            let c_end = c_start + ratio;
            let c0 = c_start.floor() as usize;
            let c1 = (c_end.ceil() as usize).min(cols_in);

            let mut sum = 0.0;
            let mut support = 0.0;
            for r in r0..r1 {
                let rw = (r as f64 + 1.0).min(r_end) - (r as f64).max(r_start);
                if rw <= 0.0 {
                    continue;
                }
                for c in c0..c1 {
                    if !surface.is_valid(r, c) {
                        continue;
                    }
                    let cw = (c as f64 + 1.0).min(c_end) - (c as f64).max(c_start);
                    if cw <= 0.0 {
                        continue;
                    }
                    let w = rw * cw;
                    sum += w * surface.values()[(r, c)];
                    support += w;
                }
            }
            if support >= 0.5 * footprint {
                values[(tr, tc)] = sum / support;
                valid[(tr, tc)] = true;
            }
        }
    }

    Surface::new(values, valid, target_resolution_um, surface.id().to_string())
}
