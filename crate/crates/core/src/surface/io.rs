//! File I/O: the C3DP binary depth-grid container, 8-bit grayscale PNG
//! ingestion, and the manifest CSV.
//!
//! C3DP layout (little-endian): magic `C3DP`, u32 version = 1, u32 rows,
//! u32 cols, f64 resolution in µm/px, then rows×cols f32 values in row-major
//! order with NaN marking missing cells.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::Surface;

const MAGIC: &[u8; 4] = b"C3DP";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 4 + 4 + 8;

/// Lateral resolution of the reflectance microscope captures, µm per pixel.
pub const DEFAULT_REFLECTANCE_RESOLUTION_UM: f64 = 2.53;

/// Reads a C3DP depth grid. NaN cells become invalid mask entries.
pub fn load_depth_grid(path: impl AsRef<Path>) -> Result<Surface> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}, expected {VERSION}")));
    }
    let rows = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("empty grid {rows}x{cols}")));
    }
    let resolution = r.read_f64::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::format(path, format!("non-positive resolution {resolution}")));
    }

    let expected = HEADER_LEN + 4 * rows as u64 * cols as u64;
    if file_len != expected {
        return Err(Error::format(
            path,
            format!("payload size mismatch: header says {rows}x{cols} ({expected} bytes), file has {file_len}"),
        ));
    }

    let mut values = Array2::zeros((rows, cols));
    let mut valid = Array2::from_elem((rows, cols), false);
    let mut buf = vec![0u8; cols * 4];
    for row in 0..rows {
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        for col in 0..cols {
            let v = f32::from_le_bytes(buf[col * 4..col * 4 + 4].try_into().unwrap());
            if v.is_nan() {
                valid[(row, col)] = false;
            } else if v.is_finite() {
                values[(row, col)] = v as f64;
                valid[(row, col)] = true;
            } else {
                return Err(Error::format(path, format!("infinite value at ({row}, {col})")));
            }
        }
    }

    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Surface::new(values, valid, resolution, id)
}

/// Writes a C3DP depth grid. Invalid cells are stored as NaN. The file is
/// written to a temporary sibling and renamed into place.
pub fn save_depth_grid(surface: &Surface, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::Builder::new()
        .prefix(".c3dp-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(VERSION).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(surface.rows() as u32).map_err(|e| Error::io(path, e))?;
        w.write_u32::<LittleEndian>(surface.cols() as u32).map_err(|e| Error::io(path, e))?;
        w.write_f64::<LittleEndian>(surface.resolution_um()).map_err(|e| Error::io(path, e))?;
        for row in 0..surface.rows() {
            for col in 0..surface.cols() {
                let v = match surface.get(row, col) {
                    Some(v) => v as f32,
                    None => f32::NAN,
                };
                w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Loads an 8-bit single-channel PNG as a fully valid surface with the given
/// lateral resolution. Anything other than 8-bit grayscale is rejected.
pub fn load_grayscale_png(path: impl AsRef<Path>, resolution_um: f64) -> Result<Surface> {
    let path = path.as_ref();
    if !(resolution_um > 0.0) {
        return Err(Error::param(format!("resolution must be positive, got {resolution_um}")));
    }
    let img = image::open(path).map_err(|e| Error::format(path, format!("cannot decode: {e}")))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::format(
                path,
                format!("expected 8-bit single-channel PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = gray.dimensions();
    let values = Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        gray.get_pixel(c as u32, r as u32)[0] as f64
    });
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Surface::from_values(values, resolution_um, id)
}

/// One manifest row. The ground-truth source key is `(study, firearm, slide)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub id: String,
    pub path: PathBuf,
    pub study: String,
    pub firearm: String,
    #[serde(default)]
    pub slide: String,
    pub ammunition: String,
}

impl SurfaceMeta {
    /// Two scans share a source when study, firearm, and slide all agree.
    pub fn source_key(&self) -> (&str, &str, &str) {
        (&self.study, &self.firearm, &self.slide)
    }
}

/// Reads a manifest CSV (`id,path,study,firearm,slide,ammunition`).
/// Relative paths are resolved against the manifest's directory.
/// Duplicate ids are rejected.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SurfaceMeta>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows: Vec<SurfaceMeta> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.deserialize() {
        let mut meta: SurfaceMeta = record.map_err(|e| Error::format(path, e.to_string()))?;
        if meta.id.is_empty() {
            return Err(Error::format(path, "manifest row with empty id"));
        }
        if !seen.insert(meta.id.clone()) {
            return Err(Error::format(path, format!("duplicate id {:?}", meta.id)));
        }
        if meta.path.is_relative() {
            meta.path = base.join(&meta.path);
        }
        rows.push(meta);
    }
    Ok(rows)
}

/// Writes a manifest CSV with the standard header.
pub fn write_manifest(rows: &[SurfaceMeta], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn depth_grid_round_trip() {
        let dir = tmpdir();
        let path = dir.path().join("s.c3dp");
        let values = array![[1.5, -2.25, 0.0], [3.75, 0.125, -8.0], [0.5, 100.0, -0.001953125]];
        let mut valid = Array2::from_elem((3, 3), true);
        valid[(1, 1)] = false;
        let s = Surface::new(values, valid, 3.125, "s").unwrap();
        save_depth_grid(&s, &path).unwrap();
        let loaded = load_depth_grid(&path).unwrap();
        assert_eq!(loaded.values()[(0, 0)], 1.5);
        assert_eq!(loaded.mask(), s.mask());
        assert_eq!(loaded.resolution_um(), 3.125);
        assert_eq!(loaded.id(), "s");
        // Every valid cell round-trips bit-exactly (values chosen f32-exact).
        for (r, c, v) in s.iter_valid() {
            assert_eq!(loaded.get(r, c), Some(v));
        }
    }

    #[test]
    fn nan_cells_load_as_invalid() {
        let dir = tmpdir();
        let path = dir.path().join("nan.c3dp");
        let values = array![[1.0, 2.0, 3.0], [4.0, 0.0, 6.0], [7.0, 8.0, 9.0]];
        let mut valid = Array2::from_elem((3, 3), true);
        valid[(1, 1)] = false;
        save_depth_grid(&Surface::new(values, valid, 1.0, "n").unwrap(), &path).unwrap();
        let loaded = load_depth_grid(&path).unwrap();
        assert_eq!(loaded.valid_count(), 8);
        assert!(!loaded.is_valid(1, 1));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("bad.c3dp");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"C3DP");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        for i in 0..99u32 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let err = load_depth_grid(&path).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("magic.c3dp");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load_depth_grid(&path).is_err());

        let path = dir.path().join("ver.c3dp");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"C3DP");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_depth_grid(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn png_decodes_bytes_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("g.png");
        let img = image::GrayImage::from_raw(2, 2, vec![0, 255, 128, 64]).unwrap();
        img.save(&path).unwrap();
        let s = load_grayscale_png(&path, DEFAULT_REFLECTANCE_RESOLUTION_UM).unwrap();
        assert_eq!(s.values(), &array![[0.0, 255.0], [128.0, 64.0]]);
        assert_eq!(s.valid_count(), 4);
        assert_eq!(s.resolution_um(), 2.53);
    }

    #[test]
    fn full_size_reflectance_capture() {
        let dir = tmpdir();
        let path = dir.path().join("full.png");
        let img = image::GrayImage::from_pixel(2592, 1944, image::Luma([7u8]));
        img.save(&path).unwrap();
        let s = load_grayscale_png(&path, DEFAULT_REFLECTANCE_RESOLUTION_UM).unwrap();
        assert_eq!((s.rows(), s.cols()), (1944, 2592));
        assert_eq!(s.resolution_um(), 2.53);
    }

    #[test]
    fn truncated_png_is_a_format_error() {
        let dir = tmpdir();
        let path = dir.path().join("t.png");
        let img = image::GrayImage::from_raw(8, 8, vec![9; 64]).unwrap();
        img.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_grayscale_png(&path, 2.53) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn non_grayscale_png_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("rgb.png");
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]));
        img.save(&path).unwrap();
        assert!(load_grayscale_png(&path, 2.53).is_err());

        let path16 = dir.path().join("g16.png");
        let img16 = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(2, 2, image::Luma([1000u16]));
        img16.save(&path16).unwrap();
        assert!(load_grayscale_png(&path16, 2.53).is_err());
    }

    #[test]
    fn manifest_round_trip_and_duplicate_id() {
        let dir = tmpdir();
        let path = dir.path().join("manifest.csv");
        let rows = vec![
            SurfaceMeta {
                id: "a1".into(),
                path: "scans/a1.c3dp".into(),
                study: "nbide".into(),
                firearm: "ruger-1".into(),
                slide: "".into(),
                ammunition: "pmc".into(),
            },
            SurfaceMeta {
                id: "a2".into(),
                path: "/abs/a2.c3dp".into(),
                study: "nbide".into(),
                firearm: "ruger-1".into(),
                slide: "".into(),
                ammunition: "pmc".into(),
            },
        ];
        write_manifest(&rows, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        // Relative path resolved against the manifest directory.
        assert_eq!(back[0].path, dir.path().join("scans/a1.c3dp"));
        assert_eq!(back[1].path, PathBuf::from("/abs/a2.c3dp"));

        let dup = vec![rows[0].clone(), rows[0].clone()];
        write_manifest(&dup, &path).unwrap();
        assert!(read_manifest(&path).is_err());
    }
}
