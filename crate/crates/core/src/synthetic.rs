//! Synthetic breechface-like surfaces for tests, demos, and benchmarks.
//!
//! Phantoms are built from parts with known ground truth: a tilted plane, a
//! shallow circular bowl, a deep firing-pin pit (marked by depth, not by
//! mask), a band-limited surface texture, and measurement noise. The texture
//! is a sum of randomly oriented plane waves, so its spectral content is
//! controlled exactly and independently of any filtering code.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::surface::{save_depth_grid, write_manifest, Surface, SurfaceMeta};

/// Derives an independent stream seed from a base seed and a label.
pub fn mix_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Sum of `components` plane waves with wavelengths drawn uniformly from
/// `lambda_um`, random orientation and phase, rescaled so the grid standard
/// deviation equals `amplitude_um`.
pub fn band_limited_texture(
    rows: usize,
    cols: usize,
    resolution_um: f64,
    lambda_um: (f64, f64),
    components: usize,
    amplitude_um: f64,
    seed: u64,
) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64)> = (0..components)
        .map(|_| {
            let lambda = rng.gen_range(lambda_um.0..=lambda_um.1);
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (lambda, dir, phase)
        })
        .collect();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        let y = r as f64 * resolution_um;
        for c in 0..cols {
            let x = c as f64 * resolution_um;
            let mut v = 0.0;
            for &(lambda, dir, phase) in &waves {
                let proj = x * dir.cos() + y * dir.sin();
                v += (std::f64::consts::TAU * proj / lambda + phase).sin();
            }
            out[(r, c)] = v;
        }
    }
    let n = (rows * cols) as f64;
    let mean = out.sum() / n;
    let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = amplitude_um / var.sqrt();
    out.mapv_inplace(|v| (v - mean) * scale);
    out
}

/// Knobs for [`phantom`].
#[derive(Debug, Clone, Copy)]
pub struct PhantomOptions {
    /// Texture standard deviation, µm.
    pub texture_amplitude_um: f64,
    /// Texture wavelength band, µm.
    pub texture_lambda_um: (f64, f64),
    pub texture_components: usize,
    /// Plane slope in µm per µm along x (columns) and y (rows).
    pub tilt: (f64, f64),
    pub offset_um: f64,
    /// Bowl depth at the corner radius, µm (shallow dome curvature).
    pub bowl_depth_um: f64,
    /// Firing-pin pit radius as a fraction of the smaller grid side, and its
    /// depth in µm; `None` for no pit.
    pub pit: Option<(f64, f64)>,
    /// Uniform measurement noise half-width, µm.
    pub noise_um: f64,
}

impl Default for PhantomOptions {
    fn default() -> Self {
        PhantomOptions {
            texture_amplitude_um: 1.2,
            texture_lambda_um: (40.0, 130.0),
            texture_components: 48,
            tilt: (0.02, -0.015),
            offset_um: 10.0,
            bowl_depth_um: 5.0,
            pit: Some((0.12, 50.0)),
            noise_um: 0.1,
        }
    }
}

/// A phantom surface plus the texture that was injected into it.
pub struct Phantom {
    pub surface: Surface,
    /// The texture component alone, on the same grid, µm.
    pub texture: Array2<f64>,
}

/// Builds a raw synthetic topography: plane + bowl + pit + texture + noise.
pub fn phantom(rows: usize, cols: usize, resolution_um: f64, seed: u64, opts: &PhantomOptions) -> Phantom {
    let texture = band_limited_texture(
        rows,
        cols,
        resolution_um,
        opts.texture_lambda_um,
        opts.texture_components,
        opts.texture_amplitude_um,
        mix_seed(seed, "texture"),
    );
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "noise"));
    let cr = (rows as f64 - 1.0) / 2.0;
    let cc = (cols as f64 - 1.0) / 2.0;
    let corner_r2 = cr * cr + cc * cc;
    let pit_radius_px = opts.pit.map(|(frac, _)| frac * rows.min(cols) as f64);

    let values = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let x = c as f64 * resolution_um;
        let y = r as f64 * resolution_um;
        let dr = r as f64 - cr;
        let dc = c as f64 - cc;
        let r2 = dr * dr + dc * dc;
        let mut v = opts.offset_um + opts.tilt.0 * x + opts.tilt.1 * y;
        v += opts.bowl_depth_um * r2 / corner_r2;
        if let (Some(pr), Some((_, depth))) = (pit_radius_px, opts.pit) {
            if r2.sqrt() <= pr {
                v -= depth;
            }
        }
        v += texture[(r, c)];
        v += noise_rng.gen_range(-opts.noise_um..opts.noise_um);
        v
    });
    let surface = Surface::from_values(values, resolution_um, format!("phantom-{seed}")).unwrap();
    Phantom { surface, texture }
}

/// Layout of a synthetic multi-firearm study.
#[derive(Debug, Clone, Copy)]
pub struct StudySpec {
    pub guns: usize,
    pub firings_per_gun: usize,
    pub rows: usize,
    pub cols: usize,
    pub resolution_um: f64,
    pub seed: u64,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec { guns: 3, firings_per_gun: 5, rows: 320, cols: 320, resolution_um: 3.125, seed: 1 }
    }
}

/// Writes a full synthetic study under `dir`: one depth grid per firing in
/// `dir/scans/` and a `manifest.csv`. Firings from the same gun share that
/// gun's texture; each firing adds its own weaker texture, noise, and a
/// slightly different mounting tilt.
pub fn write_study(dir: &Path, spec: &StudySpec) -> Result<Vec<SurfaceMeta>> {
    let scan_dir = dir.join("scans");
    std::fs::create_dir_all(&scan_dir).map_err(|e| crate::error::Error::io(&scan_dir, e))?;

    let mut rows = Vec::new();
    for g in 0..spec.guns {
        let gun_texture = band_limited_texture(
            spec.rows,
            spec.cols,
            spec.resolution_um,
            (55.0, 130.0),
            48,
            1.5,
            mix_seed(spec.seed, &format!("gun-{g}")),
        );
        for f in 0..spec.firings_per_gun {
            let id = format!("g{g}c{f}");
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &format!("firing-{g}-{f}")));
            let firing_texture = band_limited_texture(
                spec.rows,
                spec.cols,
                spec.resolution_um,
                (55.0, 130.0),
                48,
                0.35,
                mix_seed(spec.seed, &format!("firing-texture-{g}-{f}")),
            );
            let tilt = (0.02 + rng.gen_range(-0.005..0.005), -0.015 + rng.gen_range(-0.005..0.005));
            let cr = (spec.rows as f64 - 1.0) / 2.0;
            let cc = (spec.cols as f64 - 1.0) / 2.0;
            let corner_r2 = cr * cr + cc * cc;
            let pit_radius = 0.12 * spec.rows.min(spec.cols) as f64;
            let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &format!("noise-{g}-{f}")));
            let values = Array2::from_shape_fn((spec.rows, spec.cols), |(r, c)| {
                let x = c as f64 * spec.resolution_um;
                let y = r as f64 * spec.resolution_um;
                let dr = r as f64 - cr;
                let dc = c as f64 - cc;
                let r2 = dr * dr + dc * dc;
                let mut v = 10.0 + tilt.0 * x + tilt.1 * y + 5.0 * r2 / corner_r2;
                if r2.sqrt() <= pit_radius {
                    v -= 50.0;
                }
                v + gun_texture[(r, c)] + firing_texture[(r, c)] + noise_rng.gen_range(-0.1..0.1)
            });
            let surface = Surface::from_values(values, spec.resolution_um, id.clone())?;
            let path = scan_dir.join(format!("{id}.c3dp"));
            save_depth_grid(&surface, &path)?;
            rows.push(SurfaceMeta {
                id,
                path,
                study: "synthetic".into(),
                firearm: format!("gun-{g}"),
                slide: String::new(),
                ammunition: "mock".into(),
            });
        }
    }
    write_manifest(&rows, dir.join("manifest.csv"))?;
    Ok(rows)
}
