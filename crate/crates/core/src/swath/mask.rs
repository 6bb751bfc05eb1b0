use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceClass {
    Ocean = 0,
    Land = 1,
}

impl SurfaceClass {
    pub const ALL: [SurfaceClass; 2] = [SurfaceClass::Land, SurfaceClass::Ocean];

    pub fn label(self) -> &'static str {
        match self {
            SurfaceClass::Land => "LAND",
            SurfaceClass::Ocean => "OCEAN",
        }
    }
}

/// Land/ocean raster on a regular lat/lon grid covering the whole globe.
///
/// Cell `(row, col)` spans `[origin_lat + row*cell, origin_lat + (row+1)*cell)`
/// in latitude and likewise in longitude; rows increase northward.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMask {
    origin_lat: f64,
    origin_lon: f64,
    cell_deg: f64,
    rows: usize,
    cols: usize,
    classes: Vec<SurfaceClass>,
}

impl SurfaceMask {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        cell_deg: f64,
        rows: usize,
        cols: usize,
        classes: Vec<SurfaceClass>,
    ) -> Result<Self> {
        if !(cell_deg > 0.0) {
            return Err(Error::invalid("mask cell size", format!("{cell_deg} must be > 0")));
        }
        if classes.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "mask {rows}x{cols} with {} classes",
                classes.len()
            )));
        }
        let eps = 1e-9;
        let covers = origin_lat <= -90.0 + eps
            && origin_lat + rows as f64 * cell_deg >= 90.0 - eps
            && origin_lon <= -180.0 + eps
            && origin_lon + cols as f64 * cell_deg >= 180.0 - eps;
        if !covers {
            return Err(Error::invalid(
                "mask extent",
                "raster must cover [-90, 90] x [-180, 180)",
            ));
        }
        Ok(SurfaceMask {
            origin_lat,
            origin_lon,
            cell_deg,
            rows,
            cols,
            classes,
        })
    }

    /// Global mask of a single class.
    pub fn uniform(class: SurfaceClass, cell_deg: f64) -> Result<Self> {
        let rows = (180.0 / cell_deg).ceil() as usize;
        let cols = (360.0 / cell_deg).ceil() as usize;
        SurfaceMask::new(-90.0, -180.0, cell_deg, rows, cols, vec![class; rows * cols])
    }

    /// Global mask built by evaluating `f(lat_center, lon_center)` per cell.
    pub fn from_fn(cell_deg: f64, f: impl Fn(f64, f64) -> SurfaceClass) -> Result<Self> {
        let rows = (180.0 / cell_deg).ceil() as usize;
        let cols = (360.0 / cell_deg).ceil() as usize;
        let mut classes = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let lat = -90.0 + (r as f64 + 0.5) * cell_deg;
            for c in 0..cols {
                classes.push(f(lat, -180.0 + (c as f64 + 0.5) * cell_deg));
            }
        }
        SurfaceMask::new(-90.0, -180.0, cell_deg, rows, cols, classes)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_deg(&self) -> f64 {
        self.cell_deg
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_lat, self.origin_lon)
    }

    pub fn classes(&self) -> &[SurfaceClass] {
        &self.classes
    }

    /// Cell containing the point: `floor((coord - origin) / cell)`, clamped
    /// onto the raster so the closing edges (lat = 90) stay in range.
    pub fn cell_index(&self, lat: f64, lon: f64) -> (usize, usize) {
        let r = ((lat - self.origin_lat) / self.cell_deg).floor();
        let c = ((lon - self.origin_lon) / self.cell_deg).floor();
        let r = (r.max(0.0) as usize).min(self.rows - 1);
        let c = (c.max(0.0) as usize).min(self.cols - 1);
        (r, c)
    }

    pub fn lookup(&self, lat: f64, lon: f64) -> SurfaceClass {
        let (r, c) = self.cell_index(lat, lon);
        self.classes[r * self.cols + c]
    }
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SurfaceMask) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(4 + 8 + 24 + mask.classes.len());
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(&(mask.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(mask.cols as u32).to_le_bytes());
    buf.extend_from_slice(&mask.origin_lat.to_le_bytes());
    buf.extend_from_slice(&mask.origin_lon.to_le_bytes());
    buf.extend_from_slice(&mask.cell_deg.to_le_bytes());
    buf.extend(mask.classes.iter().map(|c| *c as u8));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SurfaceMask> {
    let path = path.as_ref();
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < 4 || &b[..4] != MASK_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "MSK1",
            found: String::from_utf8_lossy(&b[..b.len().min(4)]).into_owned(),
        });
    }
    const HEADER: usize = 4 + 4 + 4 + 8 * 3;
    if b.len() < HEADER {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER,
            found: b.len(),
        });
    }
    let rows = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
    let f = |at: usize| f64::from_le_bytes(b[at..at + 8].try_into().unwrap());
    let (origin_lat, origin_lon, cell) = (f(12), f(20), f(28));
    let expected = HEADER + rows * cols;
    if b.len() != expected {
        return Err(if b.len() < expected {
            Error::Truncated {
                path: path.to_path_buf(),
                expected,
                found: b.len(),
            }
        } else {
            Error::DimensionMismatch(format!("{}: trailing bytes after mask", path.display()))
        });
    }
    let classes = b[HEADER..]
        .iter()
        .map(|v| match v {
            0 => Ok(SurfaceClass::Ocean),
            1 => Ok(SurfaceClass::Land),
            other => Err(Error::invalid("surface class", format!("byte {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    SurfaceMask::new(origin_lat, origin_lon, cell, rows, cols, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn checkerboard(cell: f64) -> SurfaceMask {
        SurfaceMask::from_fn(cell, |lat, lon| {
            let r = ((lat + 90.0) / cell).floor() as i64;
            let c = ((lon + 180.0) / cell).floor() as i64;
            if (r + c) % 2 == 0 {
                SurfaceClass::Land
            } else {
                SurfaceClass::Ocean
            }
        })
        .unwrap()
    }

    #[test]
    fn all_ocean_center_point() {
        let m = SurfaceMask::uniform(SurfaceClass::Ocean, 1.0).unwrap();
        assert_eq!(m.lookup(0.5, 0.5), SurfaceClass::Ocean);
    }

    #[test]
    fn edge_goes_to_lower_index_cell_floor() {
        // the point on the boundary between rows 90 and 91 belongs to row 91,
        // the cell whose lower edge it is; floor((0 - -90) / 1) = 90
        let m = checkerboard(1.0);
        assert_eq!(m.cell_index(0.0, 0.0), (90, 180));
        assert_eq!(m.cell_index(90.0, 179.999), (179, 359));
        assert_eq!(m.cell_index(-90.0, -180.0), (0, 0));
    }

    #[test]
    fn checkerboard_matches_index_arithmetic() {
        let cell = 2.5;
        let m = checkerboard(cell);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let lat: f64 = rng.random_range(-90.0..90.0);
            let lon: f64 = rng.random_range(-180.0..180.0);
            let r = ((lat + 90.0) / cell) as i64;
            let c = ((lon + 180.0) / cell) as i64;
            let expect = if (r + c) % 2 == 0 { SurfaceClass::Land } else { SurfaceClass::Ocean };
            assert_eq!(m.lookup(lat, lon), expect, "({lat}, {lon})");
        }
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = checkerboard(10.0);
        let p = dir.path().join("m.msk");
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
        fs::write(&p, b"XXXXabc").unwrap();
        assert!(matches!(read_mask(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn partial_coverage_rejected() {
        assert!(SurfaceMask::new(-90.0, -180.0, 1.0, 10, 10, vec![SurfaceClass::Land; 100]).is_err());
        assert!(SurfaceMask::new(-90.0, -180.0, 0.0, 1, 1, vec![SurfaceClass::Land]).is_err());
    }
}
