//! Swath data model: brightness-temperature scenes, rain fields and quantile
//! fields sharing one pixel geolocation, plus the surface mask and regular
//! lat/lon grids used for stratification and mapping.
//!
//! Every pixel-valued container stores `n_planes` row-major planes of
//! `n_scan * n_pix` `f32` values, scan-major, exactly as they sit in an SWT1
//! file. Missing values are NaN.

mod grid;
mod io;
mod mask;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;

pub use grid::{GridField, GridSpec};
pub use io::{
    read_quantiles, read_rain, read_swath, read_tb, write_planes, write_swath, SwathFile,
    SwathKind, SWATH_MAGIC,
};
pub use mask::{read_mask, write_mask, SurfaceClass, SurfaceMask, MASK_MAGIC};

/// Number of radiometer input channels.
pub const N_TB_CHANNELS: usize = 4;

/// Number of retrieved quantile levels (1 %, 2 %, ..., 99 %).
pub const N_QUANTILES: usize = 99;

/// Valid range for finite brightness temperatures, kelvin.
pub const TB_RANGE_K: (f32, f32) = (50.0, 350.0);

/// Radiometer input channels in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    V37,
    H37,
    V89,
    H89,
}

impl Channel {
    pub const ALL: [Channel; N_TB_CHANNELS] = [Channel::V37, Channel::H37, Channel::V89, Channel::H89];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::V37 => "37V",
            Channel::H37 => "37H",
            Channel::V89 => "89V",
            Channel::H89 => "89H",
        }
    }
}

/// Per-pixel latitude/longitude and per-scan time of a swath tile.
#[derive(Debug, Clone, PartialEq)]
pub struct Geolocation {
    n_scan: usize,
    n_pix: usize,
    lat: Vec<f32>,
    lon: Vec<f32>,
    scan_time: Vec<f64>,
}

impl Geolocation {
    pub fn new(
        n_scan: usize,
        n_pix: usize,
        lat: Vec<f32>,
        lon: Vec<f32>,
        scan_time: Vec<f64>,
    ) -> Result<Self> {
        if n_scan == 0 || n_pix == 0 {
            return Err(Error::invalid("geolocation", "n_scan and n_pix must be >= 1"));
        }
        let n = n_scan * n_pix;
        if lat.len() != n || lon.len() != n || scan_time.len() != n_scan {
            return Err(Error::DimensionMismatch(format!(
                "geolocation {n_scan}x{n_pix}: lat {}, lon {}, scan_time {}",
                lat.len(),
                lon.len(),
                scan_time.len()
            )));
        }
        if let Some(bad) = lat.iter().find(|v| !(-90.0..=90.0).contains(*v)) {
            return Err(Error::invalid("latitude", format!("{bad} outside [-90, 90]")));
        }
        if let Some(bad) = lon.iter().find(|v| !(-180.0..180.0).contains(*v)) {
            return Err(Error::invalid("longitude", format!("{bad} outside [-180, 180)")));
        }
        Ok(Geolocation {
            n_scan,
            n_pix,
            lat,
            lon,
            scan_time,
        })
    }

    pub fn n_scan(&self) -> usize {
        self.n_scan
    }

    pub fn n_pix(&self) -> usize {
        self.n_pix
    }

    pub fn len(&self) -> usize {
        self.n_scan * self.n_pix
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lat(&self) -> &[f32] {
        &self.lat
    }

    pub fn lon(&self) -> &[f32] {
        &self.lon
    }

    pub fn scan_time(&self) -> &[f64] {
        &self.scan_time
    }

    /// Position of flat pixel index `i`.
    pub fn position(&self, i: usize) -> LatLon {
        LatLon::new(self.lat[i] as f64, self.lon[i] as f64)
    }

    /// Time of flat pixel index `i` (the time of its scan).
    pub fn pixel_time(&self, i: usize) -> f64 {
        self.scan_time[i / self.n_pix]
    }

    /// Overpass "middle" time: mean of the first and last scan times.
    pub fn mid_time(&self) -> f64 {
        0.5 * (self.scan_time[0] + self.scan_time[self.n_scan - 1])
    }

    fn crop(&self, n_scan: usize, n_pix: usize) -> Geolocation {
        Geolocation {
            n_scan,
            n_pix,
            lat: crop_plane(&self.lat, self.n_pix, n_scan, n_pix),
            lon: crop_plane(&self.lon, self.n_pix, n_scan, n_pix),
            scan_time: self.scan_time[..n_scan].to_vec(),
        }
    }
}

fn crop_plane<T: Copy>(plane: &[T], src_pix: usize, n_scan: usize, n_pix: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n_scan * n_pix);
    for s in 0..n_scan {
        out.extend_from_slice(&plane[s * src_pix..s * src_pix + n_pix]);
    }
    out
}

/// Shared behaviour of the plane-stacked swath containers.
pub trait SwathData: Sized {
    const KIND: SwathKind;

    fn geo(&self) -> &Arc<Geolocation>;

    /// All planes, plane-major.
    fn data(&self) -> &[f32];

    fn n_planes(&self) -> usize;

    /// Same metadata, new geometry and values.
    fn rebuild(&self, geo: Arc<Geolocation>, data: Vec<f32>) -> Result<Self>;

    fn plane(&self, k: usize) -> &[f32] {
        let n = self.geo().len();
        &self.data()[k * n..(k + 1) * n]
    }

    fn shape(&self) -> (usize, usize) {
        (self.geo().n_scan(), self.geo().n_pix())
    }
}

/// Largest multiple of `multiple` not exceeding `n`, or an error when `n < multiple`.
pub fn tile_len(n: usize, multiple: usize, axis: &'static str) -> Result<usize> {
    if multiple == 0 {
        return Err(Error::invalid("tile multiple", "must be >= 1"));
    }
    if n < multiple {
        return Err(Error::TileTooSmall {
            axis,
            got: n,
            multiple,
        });
    }
    Ok(n - n % multiple)
}

/// Crop a swath to dims that are multiples of `multiple`, dropping the
/// highest scan and pixel indices.
pub fn crop_to_tile<S: SwathData>(swath: &S, multiple: usize) -> Result<S> {
    let geo = swath.geo();
    let n_scan = tile_len(geo.n_scan(), multiple, "scan")?;
    let n_pix = tile_len(geo.n_pix(), multiple, "pixel")?;
    if n_scan == geo.n_scan() && n_pix == geo.n_pix() {
        return swath.rebuild(geo.clone(), swath.data().to_vec());
    }
    let new_geo = Arc::new(geo.crop(n_scan, n_pix));
    let mut data = Vec::with_capacity(swath.n_planes() * n_scan * n_pix);
    for k in 0..swath.n_planes() {
        data.extend(crop_plane(swath.plane(k), geo.n_pix(), n_scan, n_pix));
    }
    swath.rebuild(new_geo, data)
}

/// Radiometer scene: four brightness-temperature planes in [`Channel`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TbScene {
    pub granule_id: String,
    geo: Arc<Geolocation>,
    tb: Vec<f32>,
}

impl TbScene {
    pub fn new(granule_id: impl Into<String>, geo: Arc<Geolocation>, tb: Vec<f32>) -> Result<Self> {
        if tb.len() != N_TB_CHANNELS * geo.len() {
            return Err(Error::DimensionMismatch(format!(
                "TB planes hold {} values, expected {}",
                tb.len(),
                N_TB_CHANNELS * geo.len()
            )));
        }
        let (lo, hi) = TB_RANGE_K;
        if let Some(bad) = tb.iter().find(|v| !v.is_nan() && !(lo..=hi).contains(*v)) {
            return Err(Error::invalid("brightness temperature", format!("{bad} K outside [50, 350]")));
        }
        Ok(TbScene {
            granule_id: granule_id.into(),
            geo,
            tb,
        })
    }

    pub fn channel(&self, c: Channel) -> &[f32] {
        self.plane(c.index())
    }
}

impl SwathData for TbScene {
    const KIND: SwathKind = SwathKind::Tb;

    fn geo(&self) -> &Arc<Geolocation> {
        &self.geo
    }

    fn data(&self) -> &[f32] {
        &self.tb
    }

    fn n_planes(&self) -> usize {
        N_TB_CHANNELS
    }

    fn rebuild(&self, geo: Arc<Geolocation>, data: Vec<f32>) -> Result<Self> {
        TbScene::new(self.granule_id.clone(), geo, data)
    }
}

/// Where a rain field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Reference,
    Retrieval,
    ExternalEstimator,
}

/// Surface rain rate in mm/hr on a swath grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RainField {
    geo: Arc<Geolocation>,
    values: Vec<f32>,
    pub provenance: Provenance,
}

impl RainField {
    pub fn new(geo: Arc<Geolocation>, values: Vec<f32>, provenance: Provenance) -> Result<Self> {
        if values.len() != geo.len() {
            return Err(Error::DimensionMismatch(format!(
                "rain field holds {} values, geolocation {}",
                values.len(),
                geo.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::invalid("rain rate", format!("{bad} mm/hr is negative")));
        }
        Ok(RainField {
            geo,
            values,
            provenance,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn same_shape(&self, other: &RainField) -> bool {
        self.shape() == other.shape()
    }
}

impl SwathData for RainField {
    const KIND: SwathKind = SwathKind::Rain;

    fn geo(&self) -> &Arc<Geolocation> {
        &self.geo
    }

    fn data(&self) -> &[f32] {
        &self.values
    }

    fn n_planes(&self) -> usize {
        1
    }

    fn rebuild(&self, geo: Arc<Geolocation>, data: Vec<f32>) -> Result<Self> {
        RainField::new(geo, data, self.provenance)
    }
}

/// Level of quantile plane `k` (0-based): (k + 1) / 100.
pub fn quantile_level(k: usize) -> f64 {
    (k + 1) as f64 / 100.0
}

/// 99 rain-rate quantiles per pixel, plane `k` holding level (k+1)/100.
///
/// Raw network output may cross or go negative; see
/// [`crate::quantiles::monotonize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileField {
    geo: Arc<Geolocation>,
    values: Vec<f32>,
}

impl QuantileField {
    pub fn new(geo: Arc<Geolocation>, values: Vec<f32>) -> Result<Self> {
        if values.len() != N_QUANTILES * geo.len() {
            return Err(Error::DimensionMismatch(format!(
                "quantile field holds {} values, expected {}",
                values.len(),
                N_QUANTILES * geo.len()
            )));
        }
        Ok(QuantileField { geo, values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// The 99 values of flat pixel `i`, in level order.
    pub fn pixel(&self, i: usize) -> Vec<f32> {
        let n = self.geo.len();
        (0..N_QUANTILES).map(|k| self.values[k * n + i]).collect()
    }
}

impl SwathData for QuantileField {
    const KIND: SwathKind = SwathKind::Quantile;

    fn geo(&self) -> &Arc<Geolocation> {
        &self.geo
    }

    fn data(&self) -> &[f32] {
        &self.values
    }

    fn n_planes(&self) -> usize {
        N_QUANTILES
    }

    fn rebuild(&self, geo: Arc<Geolocation>, data: Vec<f32>) -> Result<Self> {
        QuantileField::new(geo, data)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// A small regular geolocation starting at (lat0, lon0) with `step` degree spacing.
    pub fn grid_geo(n_scan: usize, n_pix: usize, lat0: f32, lon0: f32, step: f32) -> Arc<Geolocation> {
        let mut lat = Vec::new();
        let mut lon = Vec::new();
        for s in 0..n_scan {
            for p in 0..n_pix {
                lat.push(lat0 + s as f32 * step);
                lon.push(lon0 + p as f32 * step);
            }
        }
        let times = (0..n_scan).map(|s| 1.5e9 + s as f64 * 1.9).collect();
        Arc::new(Geolocation::new(n_scan, n_pix, lat, lon, times).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::grid_geo;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crop_full_swath_dims() {
        assert_eq!(tile_len(221, 16, "pixel").unwrap(), 208);
        assert_eq!(tile_len(2963, 16, "scan").unwrap(), 2960);
        assert_eq!(tile_len(64, 16, "pixel").unwrap(), 64);
    }

    #[test]
    fn crop_rejects_small_tiles() {
        let geo = grid_geo(15, 20, 0.0, 0.0, 0.05);
        let rain = RainField::new(geo, vec![0.0; 300], Provenance::Reference).unwrap();
        assert!(matches!(
            crop_to_tile(&rain, 16),
            Err(Error::TileTooSmall { axis: "scan", got: 15, .. })
        ));
    }

    #[test]
    fn tb_range_enforced() {
        let geo = grid_geo(1, 1, 0.0, 0.0, 0.05);
        assert!(TbScene::new("g", geo.clone(), vec![200.0, 200.0, f32::NAN, 49.0]).is_err());
        assert!(TbScene::new("g", geo, vec![200.0, 200.0, f32::NAN, 350.0]).is_ok());
    }

    #[test]
    fn negative_rain_rejected() {
        let geo = grid_geo(1, 2, 0.0, 0.0, 0.05);
        assert!(RainField::new(geo.clone(), vec![0.0, -0.1], Provenance::Reference).is_err());
        assert!(RainField::new(geo, vec![f32::NAN, 1.0], Provenance::Reference).is_ok());
    }

    #[test]
    fn geolocation_validates_ranges() {
        assert!(Geolocation::new(1, 1, vec![91.0], vec![0.0], vec![0.0]).is_err());
        assert!(Geolocation::new(1, 1, vec![0.0], vec![180.0], vec![0.0]).is_err());
        assert!(Geolocation::new(0, 1, vec![], vec![], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn crop_keeps_leading_pixels(n_scan in 16usize..70, n_pix in 16usize..70, mult in prop::sample::select(vec![1usize, 2, 8, 16])) {
            let geo = grid_geo(n_scan, n_pix, -10.0, 20.0, 0.05);
            let values: Vec<f32> = (0..n_scan * n_pix).map(|i| i as f32).collect();
            let rain = RainField::new(geo, values.clone(), Provenance::Reference).unwrap();
            let cropped = crop_to_tile(&rain, mult).unwrap();
            let (s, p) = cropped.shape();
            prop_assert_eq!(s % mult, 0);
            prop_assert_eq!(p % mult, 0);
            prop_assert!(s > n_scan - mult && p > n_pix - mult);
            for i in 0..s {
                for j in 0..p {
                    prop_assert_eq!(cropped.values()[i * p + j], values[i * n_pix + j]);
                    prop_assert_eq!(cropped.geo().lat()[i * p + j], rain.geo().lat()[i * n_pix + j]);
                }
            }
        }
    }
}
