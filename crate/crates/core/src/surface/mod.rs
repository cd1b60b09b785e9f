//! Core surface data model: a rectangular grid of measured values with a
//! validity mask and a lateral resolution.
//!
//! Depth maps carry heights in µm; reflectance images carry gray levels in
//! 0–255. Cells flagged invalid (non-breechface regions, dropouts) are
//! excluded from every statistic computed downstream; their stored value is
//! meaningless and must never be read.

mod io;

pub use io::{
    load_depth_grid, load_grayscale_png, read_manifest, save_depth_grid, write_manifest,
    SurfaceMeta, DEFAULT_REFLECTANCE_RESOLUTION_UM,
};

use ndarray::Array2;

use crate::error::{Error, Result};

/// A measured surface: `values` on a row-major grid, a same-shape validity
/// mask, and the lateral resolution in µm per pixel.
#[derive(Debug, Clone)]
pub struct Surface {
    values: Array2<f64>,
    valid: Array2<bool>,
    resolution_um: f64,
    id: String,
}

impl Surface {
    /// Builds a surface from a value grid and mask. Fails on shape mismatch,
    /// empty grids, non-positive resolution, or a non-finite valid cell.
    pub fn new(
        values: Array2<f64>,
        valid: Array2<bool>,
        resolution_um: f64,
        id: impl Into<String>,
    ) -> Result<Self> {
        if values.dim() != valid.dim() {
            return Err(Error::data(format!(
                "values {:?} and mask {:?} differ in shape",
                values.dim(),
                valid.dim()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::data("surface must be at least 1x1"));
        }
        if !(resolution_um > 0.0) {
            return Err(Error::param(format!("resolution must be positive, got {resolution_um}")));
        }
        for ((r, c), &v) in values.indexed_iter() {
            if valid[(r, c)] && !v.is_finite() {
                return Err(Error::data(format!("valid cell ({r}, {c}) holds non-finite value {v}")));
            }
        }
        Ok(Surface { values, valid, resolution_um, id: id.into() })
    }

    /// Builds a fully valid surface from a value grid.
    pub fn from_values(values: Array2<f64>, resolution_um: f64, id: impl Into<String>) -> Result<Self> {
        let valid = Array2::from_elem(values.dim(), true);
        Surface::new(values, valid, resolution_um, id)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn resolution_um(&self) -> f64 {
        self.resolution_um
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }

    /// Value at a valid cell; `None` when the cell is invalid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if self.valid[(row, col)] {
            Some(self.values[(row, col)])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Iterates `(row, col, value)` over valid cells in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .indexed_iter()
            .filter(move |((r, c), _)| self.valid[(*r, *c)])
            .map(|((r, c), &v)| (r, c, v))
    }

    /// Mean over valid cells; `None` when everything is invalid.
    pub fn mean(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (_, _, v) in self.iter_valid() {
            sum += v;
            n += 1;
        }
        if n == 0 {
            None
        } else {
            Some(sum / n as f64)
        }
    }

    pub(crate) fn from_parts_unchecked(
        values: Array2<f64>,
        valid: Array2<bool>,
        resolution_um: f64,
        id: String,
    ) -> Self {
        Surface { values, valid, resolution_um, id }
    }
}

/// Crops to the minimal bounding box containing every valid cell.
/// Values, mask, and resolution are untouched apart from the crop.
pub fn crop_to_valid(surface: &Surface) -> Result<Surface> {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for ((r, c), &v) in surface.valid.indexed_iter() {
        if v {
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
    }
    if r0 == usize::MAX {
        return Err(Error::data(format!("surface {} has no valid cells", surface.id)));
    }
    let values = surface.values.slice(ndarray::s![r0..=r1, c0..=c1]).to_owned();
    let valid = surface.valid.slice(ndarray::s![r0..=r1, c0..=c1]).to_owned();
    Ok(Surface::from_parts_unchecked(values, valid, surface.resolution_um, surface.id.clone()))
}
