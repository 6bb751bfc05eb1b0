use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLonBox;

/// Geometry of a regular lat/lon grid. Origin is the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_deg: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn global(cell_deg: f64) -> Result<Self> {
        GridSpec::covering(
            &LatLonBox {
                lat_min: -90.0,
                lat_max: 90.0,
                lon_min: -180.0,
                lon_max: 180.0,
            },
            cell_deg,
        )
    }

    /// Smallest grid anchored at the box's south-west corner covering the box.
    pub fn covering(b: &LatLonBox, cell_deg: f64) -> Result<Self> {
        if !(cell_deg > 0.0) {
            return Err(Error::invalid("grid cell size", format!("{cell_deg} must be > 0")));
        }
        if !b.is_valid() {
            return Err(Error::invalid("grid box", format!("{b:?}")));
        }
        // round before ceil so 180/0.2 does not become 901 rows
        let n = |span: f64| (((span / cell_deg) * 1e9).round() / 1e9).ceil().max(1.0) as usize;
        Ok(GridSpec {
            origin_lat: b.lat_min,
            origin_lon: b.lon_min,
            cell_deg,
            rows: n(b.lat_max - b.lat_min),
            cols: n(b.lon_max - b.lon_min),
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell holding the point, or `None` outside the grid.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<usize> {
        let r = ((lat - self.origin_lat) / self.cell_deg).floor();
        let c = ((lon - self.origin_lon) / self.cell_deg).floor();
        if r < 0.0 || c < 0.0 {
            return None;
        }
        let (mut r, mut c) = (r as usize, c as usize);
        // the closing edge of the grid belongs to the last row/column
        if r == self.rows && lat <= self.origin_lat + self.rows as f64 * self.cell_deg {
            r -= 1;
        }
        if c == self.cols && lon <= self.origin_lon + self.cols as f64 * self.cell_deg {
            c -= 1;
        }
        (r < self.rows && c < self.cols).then_some(r * self.cols + c)
    }

    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lat + (row as f64 + 0.5) * self.cell_deg,
            self.origin_lon + (col as f64 + 0.5) * self.cell_deg,
        )
    }
}

/// Per-cell mean and contributor count. `mean` is NaN exactly where `count == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub mean: Vec<f64>,
    pub count: Vec<u64>,
}

impl GridField {
    pub fn from_sums(spec: GridSpec, sums: Vec<f64>, count: Vec<u64>) -> Self {
        let mean = sums
            .iter()
            .zip(&count)
            .map(|(s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
            .collect();
        GridField { spec, mean, count }
    }

    pub fn nonempty_cells(&self) -> impl Iterator<Item = (usize, usize, f64, u64)> + '_ {
        let cols = self.spec.cols;
        self.mean
            .iter()
            .zip(&self.count)
            .enumerate()
            .filter(|(_, (m, _))| !m.is_nan())
            .map(move |(i, (m, n))| (i / cols, i % cols, *m, *n))
    }

    /// CSV with header `row,col,lat_center,lon_center,mean,count`; only cells
    /// with a finite mean are listed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,lat_center,lon_center,mean,count\n");
        for (r, c, m, n) in self.nonempty_cells() {
            let (lat, lon) = self.spec.center(r, c);
            writeln!(s, "{r},{c},{lat:.4},{lon:.4},{m:.6},{n}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_dims() {
        let g = GridSpec::global(0.2).unwrap();
        assert_eq!((g.rows, g.cols), (900, 1800));
        let g = GridSpec::global(1.0).unwrap();
        assert_eq!((g.rows, g.cols), (180, 360));
    }

    #[test]
    fn cell_lookup_edges() {
        let g = GridSpec::covering(&LatLonBox::FRANCE_MOSAIC, 0.2).unwrap();
        assert_eq!((g.rows, g.cols), (75, 100));
        assert_eq!(g.cell_of(39.0, -8.0), Some(0));
        assert_eq!(g.cell_of(54.0, 12.0), Some(g.len() - 1));
        assert_eq!(g.cell_of(38.99, 0.0), None);
        assert_eq!(g.cell_of(45.0, 12.01), None);
    }

    #[test]
    fn csv_lists_only_nonempty() {
        let spec = GridSpec::covering(
            &LatLonBox { lat_min: 0.0, lat_max: 2.0, lon_min: 0.0, lon_max: 2.0 },
            1.0,
        )
        .unwrap();
        let f = GridField::from_sums(spec, vec![4.0, 0.0, 0.0, 1.5], vec![2, 0, 0, 1]);
        assert!(f.mean[1].is_nan());
        let csv = f.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0,0.5000,0.5000,2.000000,2");
        assert_eq!(lines[2], "1,1,1.5000,1.5000,1.500000,1");
    }
}
