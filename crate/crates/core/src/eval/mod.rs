//! Verification of rain estimators against a reference: detection scores,
//! conditional errors, interval coverage, histograms, scatter regression,
//! gridded difference maps and time series, optionally split by surface.
//!
//! Metrics operate on paired slices `(est, reference)`; NaN on either side
//! drops the pair. [`MatchedPixels`] accumulates those pairs across scenes
//! together with their position and time.

mod contingency;
mod continuous;
mod coverage;
mod histogram;
mod maps;
pub mod tables;

use chrono::{DateTime, Datelike};

use crate::error::{Error, Result};
use crate::swath::{RainField, SurfaceClass, SurfaceMask, SwathData};

pub use contingency::{contingency, scores, ContingencyTable, ScoreSet};
pub use continuous::{
    conditional_bias_rmse, density_scatter, error_conditional_stats, mae_by_time, AxisScale,
    BiasRmse, DensityScatter, ErrorStats, MaeBucket, ScatterAxes, TimeBucketing,
};
pub use coverage::{CoverageAccumulator, CoverageRow, CoverageTable, DEFAULT_COVERAGE_BINS};
pub use histogram::{intensity_histogram, light_rain_edges, IntensityHistogram};
pub use maps::{grid_difference, pixel_difference_grid};

/// Paired estimator/reference pixels with geolocation and time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchedPixels {
    pub est: Vec<f64>,
    pub reference: Vec<f64>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub time: Vec<f64>,
}

impl MatchedPixels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.est.len()
    }

    pub fn is_empty(&self) -> bool {
        self.est.is_empty()
    }

    /// Append every pixel of an aligned estimator/reference pair.
    pub fn push_fields(&mut self, est: &RainField, reference: &RainField) -> Result<()> {
        if !est.same_shape(reference) {
            return Err(Error::DimensionMismatch(format!(
                "estimator {:?} vs reference {:?}",
                est.shape(),
                reference.shape()
            )));
        }
        let geo = reference.geo();
        for i in 0..geo.len() {
            self.est.push(est.values()[i] as f64);
            self.reference.push(reference.values()[i] as f64);
            self.lat.push(geo.lat()[i] as f64);
            self.lon.push(geo.lon()[i] as f64);
            self.time.push(geo.pixel_time(i));
        }
        Ok(())
    }

    pub fn from_fields(est: &RainField, reference: &RainField) -> Result<Self> {
        let mut m = Self::new();
        m.push_fields(est, reference)?;
        Ok(m)
    }

    pub fn extend(&mut self, other: &MatchedPixels) {
        self.est.extend_from_slice(&other.est);
        self.reference.extend_from_slice(&other.reference);
        self.lat.extend_from_slice(&other.lat);
        self.lon.extend_from_slice(&other.lon);
        self.time.extend_from_slice(&other.time);
    }

    /// Pixels for which `keep(i)` holds, in order.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> MatchedPixels {
        let mut out = MatchedPixels::new();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.est.push(self.est[i]);
            out.reference.push(self.reference[i]);
            out.lat.push(self.lat[i]);
            out.lon.push(self.lon[i]);
            out.time.push(self.time[i]);
        }
        out
    }

    /// Pixels where both sides are finite.
    pub fn colocated(&self) -> MatchedPixels {
        self.filter(|i| !self.est[i].is_nan() && !self.reference[i].is_nan())
    }

    pub fn surface_classes(&self, mask: &SurfaceMask) -> Vec<SurfaceClass> {
        self.lat
            .iter()
            .zip(&self.lon)
            .map(|(lat, lon)| mask.lookup(*lat, *lon))
            .collect()
    }
}

/// A metric computed on land pixels, ocean pixels and all pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratified<T> {
    pub land: T,
    pub ocean: T,
    pub total: T,
}

impl<T> Stratified<T> {
    /// Rows in LAND / OCEAN / TOTAL order.
    pub fn rows(&self) -> [(&'static str, &T); 3] {
        [("LAND", &self.land), ("OCEAN", &self.ocean), ("TOTAL", &self.total)]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Stratified<U> {
        Stratified {
            land: f(&self.land),
            ocean: f(&self.ocean),
            total: f(&self.total),
        }
    }
}

/// Run `metric` on the land partition, the ocean partition and everything.
///
/// The mask is applied to pixel positions only, after retrieval.
pub fn stratify_by_surface<T>(
    pixels: &MatchedPixels,
    mask: &SurfaceMask,
    metric: impl Fn(&MatchedPixels) -> T,
) -> Stratified<T> {
    let classes = pixels.surface_classes(mask);
    let land = pixels.filter(|i| classes[i] == SurfaceClass::Land);
    let ocean = pixels.filter(|i| classes[i] == SurfaceClass::Ocean);
    Stratified {
        land: metric(&land),
        ocean: metric(&ocean),
        total: metric(pixels),
    }
}

/// Calendar month `YYYY-MM` (UTC) of a time in seconds since epoch.
pub fn month_label(t: f64) -> String {
    let dt = DateTime::from_timestamp(t.floor() as i64, 0).unwrap_or_default();
    format!("{:04}-{:02}", dt.year(), dt.month())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swath::test_support::grid_geo;
    use crate::swath::Provenance;

    #[test]
    fn stratification_partitions_pixels() {
        let geo = grid_geo(4, 4, -1.0, -1.0, 0.5);
        let est = RainField::new(geo.clone(), (0..16).map(|i| i as f32).collect(), Provenance::Retrieval).unwrap();
        let rf = RainField::new(geo, vec![1.0; 16], Provenance::Reference).unwrap();
        let px = MatchedPixels::from_fields(&est, &rf).unwrap();
        let mask = SurfaceMask::from_fn(1.0, |lat, _| if lat > 0.0 { SurfaceClass::Land } else { SurfaceClass::Ocean }).unwrap();
        let counts = stratify_by_surface(&px, &mask, |p| p.len());
        assert_eq!(counts.land + counts.ocean, counts.total);
        assert!(counts.land > 0 && counts.ocean > 0);

        let ocean = SurfaceMask::uniform(SurfaceClass::Ocean, 1.0).unwrap();
        let sums = stratify_by_surface(&px, &ocean, |p| p.est.iter().sum::<f64>());
        assert_eq!(sums.ocean, sums.total);
        assert_eq!(sums.land, 0.0);
    }

    #[test]
    fn month_labels() {
        assert_eq!(month_label(1_546_300_800.0), "2019-01");
        assert_eq!(month_label(1_577_836_799.0), "2019-12");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = RainField::new(grid_geo(2, 2, 0.0, 0.0, 0.1), vec![0.0; 4], Provenance::Retrieval).unwrap();
        let b = RainField::new(grid_geo(1, 4, 0.0, 0.0, 0.1), vec![0.0; 4], Provenance::Reference).unwrap();
        assert!(MatchedPixels::from_fields(&a, &b).is_err());
    }
}
