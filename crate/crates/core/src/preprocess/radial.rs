//! Circularly symmetric structure: ring-mean basis coefficients and their
//! removal after loess smoothing.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::preprocess::loess::{loess_fit, LoessParams};
use crate::surface::Surface;

/// Ring-mean decomposition of a surface around its grid center.
#[derive(Debug, Clone)]
pub struct RadialFit {
    /// Distinct center distances with at least one valid cell, increasing.
    pub radii: Vec<f64>,
    /// Mean value over the valid cells of each ring.
    pub coefficients: Vec<f64>,
    /// Valid cells per ring.
    pub counts: Vec<usize>,
    /// Loess-smoothed coefficient per ring, filled by the removal step.
    pub smoothed: Option<Vec<f64>>,
    /// Total number of distinct radii the (padded) grid geometry supports,
    /// including rings with no valid cell.
    pub num_basis: usize,
}

/// Number of distinct Euclidean distances from the center cell of an
/// m×m grid, m odd.
pub fn count_distinct_radii(m: usize) -> Result<usize> {
    if m == 0 || m.is_multiple_of(2) {
        return Err(Error::param(format!("grid side must be odd and positive, got {m}")));
    }
    let c = (m / 2) as u64;
    let mut seen = vec![false; (2 * c * c + 1) as usize];
    let mut count = 0usize;
    for a in 0..=c {
        for b in a..=c {
            let d = (a * a + b * b) as usize;
            if !seen[d] {
                seen[d] = true;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Center and squared-distance key for every cell of a grid padded (at the
/// bottom/right) to odd dimensions.
fn center_of(rows: usize, cols: usize) -> (usize, usize) {
    let pr = if rows.is_multiple_of(2) { rows + 1 } else { rows };
    let pc = if cols.is_multiple_of(2) { cols + 1 } else { cols };
    (pr / 2, pc / 2)
}

fn squared_distance(r: usize, c: usize, center: (usize, usize)) -> u64 {
    let dr = r as i64 - center.0 as i64;
    let dc = c as i64 - center.1 as i64;
    (dr * dr + dc * dc) as u64
}

fn distinct_radii_of_grid(rows: usize, cols: usize) -> usize {
    let pr = if rows.is_multiple_of(2) { rows + 1 } else { rows };
    let pc = if cols.is_multiple_of(2) { cols + 1 } else { cols };
    let center = (pr / 2, pc / 2);
    let mut seen = std::collections::HashSet::new();
    for r in 0..pr {
        for c in 0..pc {
            seen.insert(squared_distance(r, c, center));
        }
    }
    seen.len()
}

/// Groups valid cells into rings of equal center distance and takes the mean
/// of each ring. Even dimensions are padded by one (missing) row/column so a
/// center cell exists.
pub fn radial_profile(surface: &Surface) -> Result<RadialFit> {
    if surface.valid_count() == 0 {
        return Err(Error::data("radial profile of a fully missing surface"));
    }
    let center = center_of(surface.rows(), surface.cols());
    let mut rings: HashMap<u64, (f64, usize)> = HashMap::new();
    for (r, c, v) in surface.iter_valid() {
        let key = squared_distance(r, c, center);
        let e = rings.entry(key).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let mut keys: Vec<u64> = rings.keys().copied().collect();
    keys.sort_unstable();
    let mut radii = Vec::with_capacity(keys.len());
    let mut coefficients = Vec::with_capacity(keys.len());
    let mut counts = Vec::with_capacity(keys.len());
    for key in keys {
        let (sum, count) = rings[&key];
        radii.push((key as f64).sqrt());
        coefficients.push(sum / count as f64);
        counts.push(count);
    }
    Ok(RadialFit {
        radii,
        coefficients,
        counts,
        smoothed: None,
        num_basis: distinct_radii_of_grid(surface.rows(), surface.cols()),
    })
}

/// Subtracts the smoothed circularly symmetric component: ring means are
/// loess-smoothed against ring radius and the smoothed value at each cell's
/// ring is removed. The validity mask is unchanged.
pub fn remove_circular_symmetry(surface: &Surface, params: &LoessParams) -> Result<(Surface, RadialFit)> {
    let mut fit = radial_profile(surface)?;
    let smoothed = loess_fit(&fit.radii, &fit.coefficients, params)?.fitted;

    let mut by_key: HashMap<u64, f64> = HashMap::with_capacity(fit.radii.len());
    for (radius, s) in fit.radii.iter().zip(&smoothed) {
        // Radii were produced from integer squared distances, so the key
        // reconstruction is exact.
        by_key.insert((radius * radius).round() as u64, *s);
    }
    fit.smoothed = Some(smoothed);

    let center = center_of(surface.rows(), surface.cols());
    let mut values = Array2::zeros(surface.values().dim());
    for (r, c, v) in surface.iter_valid() {
        values[(r, c)] = v - by_key[&squared_distance(r, c, center)];
    }
    let out = Surface::new(values, surface.mask().clone(), surface.resolution_um(), surface.id().to_string())?;
    Ok((out, fit))
}
