//! RANSAC plane fitting for breechface selection, and leveling.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::surface::Surface;

/// RANSAC configuration. Coordinates are in µm: x = column · resolution,
/// y = row · resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Points per minimal sample (a plane needs 3).
    pub sample_size: usize,
    /// Inlier residual threshold δ, µm.
    pub inlier_threshold_um: f64,
    /// Desired probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    /// Assumed outlier proportion.
    pub outlier_rate: f64,
    /// Number of sampling iterations.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            sample_size: 3,
            inlier_threshold_um: 10.0,
            confidence: 0.99,
            outlier_rate: 0.6,
            iterations: 75,
            seed: 0,
        }
    }
}

/// A fitted plane z = a·x + b·y + c (x, y in µm) with its inlier set.
#[derive(Debug, Clone)]
pub struct PlaneFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub inlier_mask: Array2<bool>,
    pub inlier_count: usize,
}

impl PlaneFit {
    pub fn evaluate(&self, x_um: f64, y_um: f64) -> f64 {
        self.a * x_um + self.b * y_um + self.c
    }
}

/// Smallest iteration count N with N ≥ log(1−p) / log(1−(1−e)ˢ), at least 1:
/// enough draws that an all-inlier sample appears with probability ≥ p when a
/// proportion e of the points are outliers.
pub fn required_ransac_iterations(p: f64, e: f64, s: usize) -> usize {
    assert!(p > 0.0 && p < 1.0, "confidence must be in (0, 1)");
    assert!((0.0..1.0).contains(&e), "outlier rate must be in [0, 1)");
    assert!(s >= 1, "sample size must be at least 1");
    let good = (1.0 - e).powi(s as i32);
    // e = 0 makes the denominator ln(0) = -inf and the ratio 0.
    let n = ((1.0 - p).ln() / (1.0 - good).ln()).ceil();
    (n.max(1.0)) as usize
}

fn plane_through(points: &[(usize, usize, f64)], res: f64) -> Option<(f64, f64, f64)> {
    let [(r1, c1, z1), (r2, c2, z2), (r3, c3, z3)] = points else {
        return None;
    };
    // Exact integer collinearity test on grid coordinates.
    let det = (*r2 as i64 - *r1 as i64) * (*c3 as i64 - *c1 as i64)
        - (*c2 as i64 - *c1 as i64) * (*r3 as i64 - *r1 as i64);
    if det == 0 {
        return None;
    }
    let m = nalgebra::Matrix3::new(
        *c1 as f64 * res, *r1 as f64 * res, 1.0,
        *c2 as f64 * res, *r2 as f64 * res, 1.0,
        *c3 as f64 * res, *r3 as f64 * res, 1.0,
    );
    let rhs = nalgebra::Vector3::new(*z1, *z2, *z3);
    let sol = m.lu().solve(&rhs)?;
    Some((sol[0], sol[1], sol[2]))
}

fn count_inliers(surface: &Surface, a: f64, b: f64, c: f64, delta: f64) -> usize {
    let res = surface.resolution_um();
    surface
        .iter_valid()
        .filter(|&(r, col, z)| (z - (a * col as f64 * res + b * r as f64 * res + c)).abs() <= delta)
        .count()
}

fn least_squares_plane(surface: &Surface, mask: &Array2<bool>) -> Result<(f64, f64, f64)> {
    let res = surface.resolution_um();
    let (mut sxx, mut sxy, mut sx, mut syy, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sxz, mut syz, mut sz) = (0.0, 0.0, 0.0);
    for (r, c, z) in surface.iter_valid() {
        if !mask[(r, c)] {
            continue;
        }
        let x = c as f64 * res;
        let y = r as f64 * res;
        sxx += x * x;
        sxy += x * y;
        sx += x;
        syy += y * y;
        sy += y;
        sxz += x * z;
        syz += y * z;
        sz += z;
        n += 1.0;
    }
    let m = nalgebra::Matrix3::new(sxx, sxy, sx, sxy, syy, sy, sx, sy, n);
    let rhs = nalgebra::Vector3::new(sxz, syz, sz);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::data("plane refit is singular: inliers are collinear"))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// Fits the dominant plane by random sample consensus.
///
/// Each iteration draws 3 distinct valid cells, fits the exact plane through
/// them, and counts inliers within δ. Collinear triples cannot define a plane
/// and are redrawn without consuming an iteration. The winning sample's
/// inliers are refit by ordinary least squares, and the final inlier mask is
/// taken against the refit plane.
pub fn ransac_plane(surface: &Surface, params: &RansacParams) -> Result<PlaneFit> {
    if params.sample_size != 3 {
        return Err(Error::param(format!(
            "plane fitting uses 3-point samples, got sample_size {}",
            params.sample_size
        )));
    }
    if !(params.inlier_threshold_um > 0.0) {
        return Err(Error::param("inlier threshold must be positive"));
    }
    if params.iterations == 0 {
        return Err(Error::param("iterations must be at least 1"));
    }
    let cells: Vec<(usize, usize, f64)> = surface.iter_valid().collect();
    if cells.len() < 3 {
        return Err(Error::data(format!(
            "plane fit needs at least 3 valid cells, surface has {}",
            cells.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let delta = params.inlier_threshold_um;
    let res = surface.resolution_um();

    let mut best: Option<(usize, (f64, f64, f64))> = None;
    let mut attempts_left = params.iterations.saturating_mul(100);
    let mut completed = 0;
    while completed < params.iterations {
        if attempts_left == 0 {
            return Err(Error::data("could not draw a non-collinear sample"));
        }
        attempts_left -= 1;
        let idx = rand::seq::index::sample(&mut rng, cells.len(), 3);
        let sample = [cells[idx.index(0)], cells[idx.index(1)], cells[idx.index(2)]];
        let Some((a, b, c)) = plane_through(&sample, res) else {
            continue; // degenerate triple: redraw, don't consume an iteration
        };
        completed += 1;
        let inliers = count_inliers(surface, a, b, c, delta);
        if best.as_ref().is_none_or(|(n, _)| inliers > *n) {
            best = Some((inliers, (a, b, c)));
        }
    }

    let (_, (a0, b0, c0)) = best.unwrap();
    let mut winner_mask = Array2::from_elem(surface.values().dim(), false);
    for &(r, c, z) in &cells {
        if (z - (a0 * c as f64 * res + b0 * r as f64 * res + c0)).abs() <= delta {
            winner_mask[(r, c)] = true;
        }
    }
    let (a, b, c) = least_squares_plane(surface, &winner_mask)?;

    let mut inlier_mask = Array2::from_elem(surface.values().dim(), false);
    let mut inlier_count = 0;
    for &(r, col, z) in &cells {
        if (z - (a * col as f64 * res + b * r as f64 * res + c)).abs() <= delta {
            inlier_mask[(r, col)] = true;
            inlier_count += 1;
        }
    }
    Ok(PlaneFit { a, b, c, inlier_mask, inlier_count })
}

/// Subtracts the fitted plane and keeps only its inliers as valid cells:
/// non-inliers (firing pin impression, flowback, edges) become missing.
pub fn level(surface: &Surface, plane: &PlaneFit) -> Result<Surface> {
    if plane.inlier_mask.dim() != surface.values().dim() {
        return Err(Error::param("plane inlier mask shape differs from surface"));
    }
    let res = surface.resolution_um();
    let mut values = Array2::zeros(surface.values().dim());
    let mut valid = Array2::from_elem(surface.values().dim(), false);
    for (r, c, z) in surface.iter_valid() {
        if plane.inlier_mask[(r, c)] {
            values[(r, c)] = z - plane.evaluate(c as f64 * res, r as f64 * res);
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

    fn plane_surface(rows: usize, cols: usize, res: f64, a: f64, b: f64, c: f64) -> Surface {
        let values = Array2::from_shape_fn((rows, cols), |(r, col)| {
            a * col as f64 * res + b * r as f64 * res + c
        });
        Surface::from_values(values, res, "plane").unwrap()
    }

    #[test]
    fn iteration_bound_matches_closed_form() {
        assert_eq!(required_ransac_iterations(0.99, 0.6, 3), 70);
        assert_eq!(required_ransac_iterations(0.99, 0.0, 3), 1);
        assert_eq!(required_ransac_iterations(0.5, 0.0, 3), 1);
        assert_eq!(required_ransac_iterations(0.99, 0.5, 3), 35);
    }

    #[test]
    fn recovers_exact_plane() {
        let s = plane_surface(20, 20, 2.0, 2.0, 3.0, 5.0);
        let fit = ransac_plane(&s, &RansacParams::default()).unwrap();
        assert_abs_diff_eq!(fit.a, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.b, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.c, 5.0, epsilon = 1e-9);
        assert_eq!(fit.inlier_count, 400);
    }

    #[test]
    fn excludes_indented_disc() {
        let res = 3.125;
        let (rows, cols) = (41, 41);
        let mut values = Array2::from_shape_fn((rows, cols), |(r, c)| {
            0.1 * c as f64 * res - 0.2 * r as f64 * res + 3.0
        });
        let mut in_disc = Array2::from_elem((rows, cols), false);
        for r in 0..rows {
            for c in 0..cols {
                let dr = r as f64 - 20.0;
                let dc = c as f64 - 20.0;
                if (dr * dr + dc * dc).sqrt() <= 8.0 {
                    values[(r, c)] -= 50.0;
                    in_disc[(r, c)] = true;
                }
            }
        }
        let s = Surface::from_values(values, res, "pin").unwrap();
        let fit = ransac_plane(&s, &RansacParams::default()).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                assert_eq!(fit.inlier_mask[(r, c)], !in_disc[(r, c)], "at ({r}, {c})");
            }
        }
    }

    #[test]
    fn small_noise_keeps_every_cell() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let res = 3.125;
        let values = Array2::from_shape_fn((30, 30), |(r, c)| {
            0.05 * c as f64 * res + 0.02 * r as f64 * res - 1.0 + rng.gen_range(-1.0..1.0)
        });
        let s = Surface::from_values(values, res, "noisy").unwrap();
        let fit = ransac_plane(&s, &RansacParams::default()).unwrap();
        assert_eq!(fit.inlier_count, 900);
    }

    #[test]
    fn deterministic_for_a_seed() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = Array2::from_shape_fn((25, 25), |(r, c)| {
            0.3 * c as f64 + 0.1 * r as f64 + rng.gen_range(-4.0..4.0)
        });
        let s = Surface::from_values(values, 1.0, "d").unwrap();
        let p = RansacParams { seed: 99, ..Default::default() };
        let f1 = ransac_plane(&s, &p).unwrap();
        let f2 = ransac_plane(&s, &p).unwrap();
        assert_eq!(f1.a, f2.a);
        assert_eq!(f1.b, f2.b);
        assert_eq!(f1.c, f2.c);
        assert_eq!(f1.inlier_mask, f2.inlier_mask);
    }

    #[test]
    fn widening_threshold_never_loses_inliers() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut values = Array2::from_shape_fn((30, 30), |(r, c)| {
            0.2 * c as f64 - 0.1 * r as f64 + rng.gen_range(-1.5..1.5)
        });
        for _ in 0..60 {
            let r = rng.gen_range(0..30);
            let c = rng.gen_range(0..30);
            values[(r, c)] += rng.gen_range(20.0..60.0);
        }
        let s = Surface::from_values(values, 1.0, "m").unwrap();
        let mut last = 0;
        for delta in [2.0, 5.0, 10.0, 20.0] {
            let p = RansacParams { inlier_threshold_um: delta, seed: 5, ..Default::default() };
            let fit = ransac_plane(&s, &p).unwrap();
            assert!(fit.inlier_count >= last, "delta {delta}: {} < {last}", fit.inlier_count);
            last = fit.inlier_count;
        }
    }

    #[test]
    fn needs_three_valid_cells() {
        let mut valid = Array2::from_elem((3, 3), false);
        valid[(0, 0)] = true;
        valid[(2, 2)] = true;
        let s = Surface::new(Array2::zeros((3, 3)), valid, 1.0, "few").unwrap();
        assert!(ransac_plane(&s, &RansacParams::default()).is_err());
    }

    #[test]
    fn collinear_surface_errors_out() {
        // Single-row surface: every triple is collinear.
        let values = Array2::from_shape_fn((1, 12), |(_, c)| c as f64);
        let s = Surface::from_values(values, 1.0, "line").unwrap();
        assert!(ransac_plane(&s, &RansacParams::default()).is_err());
    }

    #[test]
    fn leveling_zeroes_an_exact_plane() {
        let s = plane_surface(15, 17, 1.5, -0.4, 0.7, 12.0);
        let fit = ransac_plane(&s, &RansacParams::default()).unwrap();
        let leveled = level(&s, &fit).unwrap();
        for (_, _, v) in leveled.iter_valid() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn leveled_residuals_have_zero_mean_and_releveling_is_stable() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let values = Array2::from_shape_fn((28, 28), |(r, c)| {
            1.2 * c as f64 + 0.8 * r as f64 - 6.0 + rng.gen_range(-2.0..2.0)
        });
        let s = Surface::from_values(values, 1.0, "z").unwrap();
        let fit = ransac_plane(&s, &RansacParams::default()).unwrap();
        let leveled = level(&s, &fit).unwrap();
        assert_abs_diff_eq!(leveled.mean().unwrap(), 0.0, epsilon = 1e-9);

        let refit = ransac_plane(&leveled, &RansacParams::default()).unwrap();
        assert_abs_diff_eq!(refit.a, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(refit.b, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(refit.c, 0.0, epsilon = 1e-9);
        let again = level(&leveled, &refit).unwrap();
        for ((r, c, v1), (_, _, v2)) in leveled.iter_valid().zip(again.iter_valid()) {
            assert!((v1 - v2).abs() < 1e-9, "({r}, {c}): {v1} vs {v2}");
        }
    }
}
