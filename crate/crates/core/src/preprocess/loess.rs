//! Locally weighted polynomial regression with a tricube kernel.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Loess smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoessParams {
    /// Proportion of points entering each local fit.
    pub span: f64,
    /// Local polynomial degree, 1 or 2.
    pub degree: usize,
}

impl Default for LoessParams {
    fn default() -> Self {
        LoessParams { span: 0.75, degree: 2 }
    }
}

impl LoessParams {
    fn validate(&self) -> Result<()> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(Error::param(format!("loess span must be in (0, 1], got {}", self.span)));
        }
        if self.degree != 1 && self.degree != 2 {
            return Err(Error::param(format!("loess degree must be 1 or 2, got {}", self.degree)));
        }
        Ok(())
    }
}

/// Result of a loess fit: fitted value at every input x, plus the effective
/// degrees of freedom (trace of the smoother matrix).
#[derive(Debug, Clone)]
pub struct LoessFit {
    pub fitted: Vec<f64>,
    pub edf: f64,
}

/// Fits y against strictly increasing x by local weighted least squares.
///
/// At each x₀ the ⌈span·n⌉ nearest points (never fewer than degree + 2)
/// enter a degree-`degree` polynomial fit with tricube weights
/// w = (1 − (d/h₀)³)³, where h₀ is the largest distance inside the
/// neighborhood; the farthest point therefore carries zero weight.
pub fn loess_fit(x: &[f64], y: &[f64], params: &LoessParams) -> Result<LoessFit> {
    params.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::param(format!("x and y lengths differ: {} vs {}", n, y.len())));
    }
    if n < params.degree + 2 {
        return Err(Error::param(format!("need at least {} points, got {n}", params.degree + 2)));
    }
    for w in x.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::param("x must be strictly increasing"));
        }
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite value in loess input"));
    }

    let q = ((params.span * n as f64).ceil() as usize).max(params.degree + 2).min(n);

    let mut fitted = vec![0.0; n];
    let mut edf = 0.0;
    for i in 0..n {
        // Nearest q points form a contiguous window in sorted x.
        let (mut lo, mut hi) = (i, i);
        while hi - lo + 1 < q {
            let left = if lo > 0 { x[i] - x[lo - 1] } else { f64::INFINITY };
            let right = if hi + 1 < n { x[hi + 1] - x[i] } else { f64::INFINITY };
            if left <= right {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let h0 = (x[i] - x[lo]).max(x[hi] - x[i]);

        // Weighted design moments with dx scaled by h0 for conditioning;
        // the intercept estimate and its variance entry are scale-invariant.
        let (mut s0, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
        for j in lo..=hi {
            let d = (x[j] - x[i]).abs();
            let u = d / h0;
            if u >= 1.0 {
                continue;
            }
            let w = (1.0 - u * u * u).powi(3);
            let dx = (x[j] - x[i]) / h0;
            s0 += w;
            s1 += w * dx;
            s2 += w * dx * dx;
            s3 += w * dx * dx * dx;
            s4 += w * dx * dx * dx * dx;
            t0 += w * y[j];
            t1 += w * dx * y[j];
            t2 += w * dx * dx * y[j];
        }

        let (beta0, inv00) = if params.degree == 1 {
            let m = Matrix2::new(s0, s1, s1, s2);
            let inv = m.try_inverse().ok_or_else(|| Error::data("degenerate local design in loess"))?;
            let b = inv * Vector2::new(t0, t1);
            (b[0], inv[(0, 0)])
        } else {
            let m = Matrix3::new(s0, s1, s2, s1, s2, s3, s2, s3, s4);
            let inv = m.try_inverse().ok_or_else(|| Error::data("degenerate local design in loess"))?;
            let b = inv * Vector3::new(t0, t1, t2);
            (b[0], inv[(0, 0)])
        };
        fitted[i] = beta0;
        // Self-influence of point i: its tricube weight is 1 and its design
        // row is e₁, so the hat-matrix diagonal is [(XᵀWX)⁻¹]₀₀.
        edf += inv00;
    }

    Ok(LoessFit { fitted, edf })
}
