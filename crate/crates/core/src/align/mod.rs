//! Pairwise alignment: rotation/translation grid search maximizing the
//! normalized cross-correlation, symmetrized into one similarity per pair.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::surface::Surface;

/// Best alignment of one surface against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignResult {
    /// Correlation attained at the reported pose.
    pub ccf_max: f64,
    /// Rotation from the reference to the moving surface, degrees.
    pub theta_star: f64,
    /// Vertical (row) and horizontal (column) lags, pixels.
    pub k_star: i64,
    pub l_star: i64,
}

/// Symmetric similarity for an id pair: both directed correlations and their
/// max. `id1` < `id2` lexicographically; `c12`/`align1` align surface 2 onto
/// surface 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub id1: String,
    pub id2: String,
    pub c12: f64,
    pub c21: f64,
    pub s_hat: f64,
    pub align1: AlignResult,
    pub align2: AlignResult,
}

/// Search configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    /// Lag search bound as a fraction of each grid dimension.
    pub lag_frac: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams { lag_frac: 0.2 }
    }
}

/// Centers the valid cells to mean 0 and scales them to unit sum of squares.
/// Invalid cells are set to 0 so correlation sums can run over the whole
/// grid while ignoring missing data.
pub fn standardize(surface: &Surface) -> Result<Surface> {
    if surface.valid_count() < 2 {
        return Err(Error::data("standardize needs at least 2 valid cells"));
    }
    let mean = surface.mean().unwrap();
    let mut sumsq = 0.0;
    for (_, _, v) in surface.iter_valid() {
        sumsq += (v - mean) * (v - mean);
    }
    if !(sumsq > 0.0) {
        return Err(Error::data("cannot standardize a constant surface"));
    }
    let norm = sumsq.sqrt();
    let mut values = Array2::zeros(surface.values().dim());
    for (r, c, v) in surface.iter_valid() {
        values[(r, c)] = (v - mean) / norm;
    }
    Surface::new(values, surface.mask().clone(), surface.resolution_um(), surface.id().to_string())
}

/// Rotates about the grid center with bilinear interpolation. An output cell
/// is invalid when any source cell it interpolates from is invalid or lies
/// outside the grid. Source coordinates within 1e-9 of a grid line snap to
/// it, so right-angle rotations reduce to exact index permutations.
pub fn rotate(surface: &Surface, theta_degrees: f64) -> Surface {
    let (rows, cols) = (surface.rows(), surface.cols());
    let cr = (rows as f64 - 1.0) / 2.0;
    let cc = (cols as f64 - 1.0) / 2.0;
    let theta = theta_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();

    let mut values = Array2::zeros((rows, cols));
    let mut valid = Array2::from_elem((rows, cols), false);
    for r in 0..rows {
        for c in 0..cols {
            let dy = r as f64 - cr;
            let dx = c as f64 - cc;
            let sr = cr + cos * dy + sin * dx;
            let sc = cc - sin * dy + cos * dx;
            if let Some(v) = sample_bilinear(surface, sr, sc) {
                values[(r, c)] = v;
                valid[(r, c)] = true;
            }
        }
    }
    Surface::new(values, valid, surface.resolution_um(), surface.id().to_string())
        .expect("rotation preserves surface invariants")
}

fn sample_bilinear(surface: &Surface, sr: f64, sc: f64) -> Option<f64> {
    const SNAP: f64 = 1e-9;
    let axis = |s: f64, len: usize| -> Option<(usize, usize, f64)> {
        // Returns (low index, high index, fraction); low == high when snapped.
        let f = s.floor();
        let frac = s - f;
        let (i0, i1, frac) = if frac < SNAP {
            (f, f, 0.0)
        } else if frac > 1.0 - SNAP {
            (f + 1.0, f + 1.0, 0.0)
        } else {
            (f, f + 1.0, frac)
        };
        if i0 < 0.0 || i1 > len as f64 - 1.0 {
            return None;
        }
        Some((i0 as usize, i1 as usize, frac))
    };
    let (r0, r1, fr) = axis(sr, surface.rows())?;
    let (c0, c1, fc) = axis(sc, surface.cols())?;
    for (r, c) in [(r0, c0), (r0, c1), (r1, c0), (r1, c1)] {
        if !surface.is_valid(r, c) {
            return None;
        }
    }
    let v = surface.values();
    let top = v[(r0, c0)] * (1.0 - fc) + v[(r0, c1)] * fc;
    let bottom = v[(r1, c0)] * (1.0 - fc) + v[(r1, c1)] * fc;
    Some(top * (1.0 - fr) + bottom * fr)
}

fn pad_to(surface: &Surface, rows: usize, cols: usize) -> Surface {
    if surface.rows() == rows && surface.cols() == cols {
        return surface.clone();
    }
    let mut values = Array2::zeros((rows, cols));
    let mut valid = Array2::from_elem((rows, cols), false);
    for r in 0..surface.rows() {
        for c in 0..surface.cols() {
            values[(r, c)] = surface.values()[(r, c)];
            valid[(r, c)] = surface.mask()[(r, c)];
        }
    }
    Surface::new(values, valid, surface.resolution_um(), surface.id().to_string()).unwrap()
}

fn check_lags(rows: usize, cols: usize, max_k: usize, max_l: usize) -> Result<()> {
    if max_k >= rows || max_l >= cols {
        return Err(Error::param(format!(
            "lag range ({max_k}, {max_l}) exceeds grid size ({rows}, {cols})"
        )));
    }
    Ok(())
}

/// Cross-correlation over integer lags |k| ≤ max_k, |l| ≤ max_l, computed by
/// direct summation: CCF(k,l) = Σ A(i,j)·B(i+k, j+l) with out-of-range and
/// missing cells contributing zero. Output is indexed `[(k + max_k, l + max_l)]`.
pub fn cross_correlation_direct(a: &Surface, b: &Surface, max_k: usize, max_l: usize) -> Result<Array2<f64>> {
    if a.values().dim() != b.values().dim() {
        return Err(Error::param("cross-correlation inputs must share a shape"));
    }
    let (rows, cols) = a.values().dim();
    check_lags(rows, cols, max_k, max_l)?;
    let mut out = Array2::zeros((2 * max_k + 1, 2 * max_l + 1));
    let av = a.values();
    let bv = b.values();
    for k in -(max_k as i64)..=max_k as i64 {
        for l in -(max_l as i64)..=max_l as i64 {
            let mut acc = 0.0;
            for i in 0..rows as i64 {
                let bi = i + k;
                if bi < 0 || bi >= rows as i64 {
                    continue;
                }
                for j in 0..cols as i64 {
                    let bj = j + l;
                    if bj < 0 || bj >= cols as i64 {
                        continue;
                    }
                    acc += av[(i as usize, j as usize)] * bv[(bi as usize, bj as usize)];
                }
            }
            out[((k + max_k as i64) as usize, (l + max_l as i64) as usize)] = acc;
        }
    }
    Ok(out)
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

struct Fft2d {
    rows: usize,
    cols: usize,
    row_fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2d {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            rows,
            cols,
            row_fft: planner.plan_fft_forward(cols),
            col_fft: planner.plan_fft_forward(rows),
            row_ifft: planner.plan_fft_inverse(cols),
            col_ifft: planner.plan_fft_inverse(rows),
        }
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (row_op, col_op) = if inverse {
            (&self.row_ifft, &self.col_ifft)
        } else {
            (&self.row_fft, &self.col_fft)
        };
        for r in 0..self.rows {
            row_op.process(&mut data[r * self.cols..(r + 1) * self.cols]);
        }
        let mut column = vec![Complex::default(); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            col_op.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
    }
}

fn surface_to_complex(s: &Surface, rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut data = vec![Complex::default(); rows * cols];
    for (r, c, v) in s.iter_valid() {
        data[r * cols + c] = Complex::new(v, 0.0);
    }
    data
}

/// FFT-accelerated version of [`cross_correlation_direct`]; the two agree to
/// numerical precision.
pub fn cross_correlation(a: &Surface, b: &Surface, max_k: usize, max_l: usize) -> Result<Array2<f64>> {
    if a.values().dim() != b.values().dim() {
        return Err(Error::param("cross-correlation inputs must share a shape"));
    }
    let (rows, cols) = a.values().dim();
    check_lags(rows, cols, max_k, max_l)?;
    let pr = next_pow2(rows + max_k);
    let pc = next_pow2(cols + max_l);
    let fft = Fft2d::new(pr, pc);
    let mut fa = surface_to_complex(a, pr, pc);
    fft.transform(&mut fa, false);
    let mut fb = surface_to_complex(b, pr, pc);
    fft.transform(&mut fb, false);
    for (x, y) in fb.iter_mut().zip(&fa) {
        *x *= y.conj();
    }
    fft.transform(&mut fb, true);
    let scale = 1.0 / (pr * pc) as f64;
    let mut out = Array2::zeros((2 * max_k + 1, 2 * max_l + 1));
    for k in -(max_k as i64)..=max_k as i64 {
        let rk = k.rem_euclid(pr as i64) as usize;
        for l in -(max_l as i64)..=max_l as i64 {
            let rl = l.rem_euclid(pc as i64) as usize;
            out[((k + max_k as i64) as usize, (l + max_l as i64) as usize)] = fb[rk * pc + rl].re * scale;
        }
    }
    Ok(out)
}

/// The coarse rotation grid: 5° steps everywhere except a denser 2.5° band
/// inside [−10°, 10°].
fn coarse_grid() -> Vec<f64> {
    let mut grid = Vec::with_capacity(76);
    let mut t = -175.0;
    while t <= -15.0 {
        grid.push(t);
        t += 5.0;
    }
    let mut t = -10.0;
    while t <= 10.0 {
        grid.push(t);
        t += 2.5;
    }
    let mut t = 15.0;
    while t <= 180.0 {
        grid.push(t);
        t += 5.0;
    }
    grid
}

/// The refinement grid around a coarse winner: ±2° at 0.5° steps inside the
/// dense band, ±4° at 1° steps outside it.
fn fine_grid(theta: f64) -> Vec<f64> {
    let (half_width, step): (f64, f64) = if theta.abs() <= 10.0 { (2.0, 0.5) } else { (4.0, 1.0) };
    let n = (2.0 * half_width / step).round() as usize;
    (0..=n).map(|i| theta - half_width + i as f64 * step).collect()
}

#[derive(Clone, Copy)]
struct Candidate {
    ccf: f64,
    theta: f64,
    k: i64,
    l: i64,
}

impl Candidate {
    /// Deterministic preference order: larger correlation, then smaller |θ|,
    /// then smaller |k|+|l|, then smaller θ, then (k, l).
    fn beats(&self, other: &Candidate) -> bool {
        if self.ccf != other.ccf {
            return self.ccf > other.ccf;
        }
        let a = (self.theta.abs(), self.k.abs() + self.l.abs(), self.theta, self.k, self.l);
        let b = (other.theta.abs(), other.k.abs() + other.l.abs(), other.theta, other.k, other.l);
        a.partial_cmp(&b) == Some(std::cmp::Ordering::Less)
    }
}

fn best_lag(ccf: &Array2<f64>, max_k: usize, max_l: usize, theta: f64) -> Candidate {
    let mut best: Option<Candidate> = None;
    for ((rk, rl), &v) in ccf.indexed_iter() {
        let cand = Candidate { ccf: v, theta, k: rk as i64 - max_k as i64, l: rl as i64 - max_l as i64 };
        if best.is_none_or(|b| cand.beats(&b)) {
            best = Some(cand);
        }
    }
    best.unwrap()
}

/// Aligns `i2` onto the reference `i1`: searches rotations (coarse grid, then
/// a refinement around the best coarse angle) and integer lags for the pose
/// maximizing the cross-correlation of the standardized surfaces. The
/// reported angle is the rotation carrying `i1`'s frame to `i2`, i.e. `i2` is
/// rotated by −θ before correlating.
pub fn align_with(i1: &Surface, i2: &Surface, params: &AlignParams) -> Result<AlignResult> {
    if !(params.lag_frac > 0.0 && params.lag_frac < 1.0) {
        return Err(Error::param(format!("lag fraction must be in (0, 1), got {}", params.lag_frac)));
    }
    let rows = i1.rows().max(i2.rows());
    let cols = i1.cols().max(i2.cols());
    let max_k = (params.lag_frac * rows as f64).floor() as usize;
    let max_l = (params.lag_frac * cols as f64).floor() as usize;
    check_lags(rows, cols, max_k, max_l)?;

    let a = standardize(&pad_to(i1, rows, cols))?;
    let pr = next_pow2(rows + max_k);
    let pc = next_pow2(cols + max_l);
    let fft = Fft2d::new(pr, pc);
    let mut fa = surface_to_complex(&a, pr, pc);
    fft.transform(&mut fa, false);
    let scale = 1.0 / (pr * pc) as f64;

    let evaluate = |theta: f64| -> Result<Option<Candidate>> {
        let rotated = rotate(i2, -theta);
        let b = match standardize(&pad_to(&rotated, rows, cols)) {
            Ok(b) => b,
            // A rotation can push the whole overlap out of frame on small
            // inputs; such angles simply drop out of the search.
            Err(_) => return Ok(None),
        };
        let mut fb = surface_to_complex(&b, pr, pc);
        fft.transform(&mut fb, false);
        for (x, y) in fb.iter_mut().zip(&fa) {
            *x *= y.conj();
        }
        fft.transform(&mut fb, true);
        let mut ccf = Array2::zeros((2 * max_k + 1, 2 * max_l + 1));
        for k in -(max_k as i64)..=max_k as i64 {
            let rk = k.rem_euclid(pr as i64) as usize;
            for l in -(max_l as i64)..=max_l as i64 {
                let rl = l.rem_euclid(pc as i64) as usize;
                ccf[((k + max_k as i64) as usize, (l + max_l as i64) as usize)] = fb[rk * pc + rl].re * scale;
            }
        }
        Ok(Some(best_lag(&ccf, max_k, max_l, theta)))
    };

    let mut tried: Vec<f64> = Vec::new();
    let mut best: Option<Candidate> = None;
    for theta in coarse_grid() {
        tried.push(theta);
        if let Some(cand) = evaluate(theta)? {
            if best.is_none_or(|b| cand.beats(&b)) {
                best = Some(cand);
            }
        }
    }
    let coarse_best = best.ok_or_else(|| Error::data("no rotation candidate produced a valid overlap"))?;

    for theta in fine_grid(coarse_best.theta) {
        if tried.iter().any(|t| (t - theta).abs() < 1e-9) {
            continue;
        }
        tried.push(theta);
        if let Some(cand) = evaluate(theta)? {
            if best.is_none_or(|b| cand.beats(&b)) {
                best = Some(cand);
            }
        }
    }

    let best = best.unwrap();
    Ok(AlignResult { ccf_max: best.ccf, theta_star: best.theta, k_star: best.k, l_star: best.l })
}

/// [`align_with`] under default parameters.
pub fn align(i1: &Surface, i2: &Surface) -> Result<AlignResult> {
    align_with(i1, i2, &AlignParams::default())
}

/// Runs the alignment in both directions and takes the larger correlation as
/// the pair's similarity. Ids are ordered lexicographically; swapping the
/// argument order returns an identical result.
pub fn similarity_with(s1: &Surface, s2: &Surface, params: &AlignParams) -> Result<PairScore> {
    let (first, second) = if s1.id() <= s2.id() { (s1, s2) } else { (s2, s1) };
    let align1 = align_with(first, second, params)?;
    let align2 = align_with(second, first, params)?;
    let c12 = align1.ccf_max;
    let c21 = align2.ccf_max;
    Ok(PairScore {
        id1: first.id().to_string(),
        id2: second.id().to_string(),
        c12,
        c21,
        s_hat: c12.max(c21),
        align1,
        align2,
    })
}

/// [`similarity_with`] under default parameters.
pub fn similarity(s1: &Surface, s2: &Surface) -> Result<PairScore> {
    similarity_with(s1, s2, &AlignParams::default())
}
