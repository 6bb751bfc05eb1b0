//! Spatial and temporal co-location of reference rain with radiometer pixels.
//!
//! Radar samples are radius-averaged onto pixel centers through a fixed
//! lat/lon bucket index. Ground mosaics are matched to an overpass by time,
//! converted from 5-minute accumulations to rates, and treated as point
//! samples at their cell centers.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, LatLon, LatLonBox, EARTH_RADIUS_KM};
use crate::swath::{Geolocation, GridField, GridSpec, Provenance, RainField};

/// Default co-location radius.
pub const DEFAULT_RADIUS_KM: f64 = 5.0;

/// 5-minute accumulation (mm) to rate (mm/hr).
pub const MOSAIC_RATE_FACTOR: f32 = 12.0;

/// Minimum mosaic quality (percent) kept by default.
pub const DEFAULT_QUALITY_MIN: u8 = 80;

/// A geolocated reference observation, e.g. one radar surface-rain pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub lat: f64,
    pub lon: f64,
    /// mm/hr, or NaN when missing
    pub value: f64,
    pub time: f64,
}

impl PointSample {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Bucket index answering "which samples lie within `radius_km` of a point".
///
/// Buckets are square in degrees with side `radius_km / KM_PER_DEG`, so a
/// query touches the 3 latitude rows around the target and as many longitude
/// columns as the radius spans at that latitude.
pub struct RadiusIndex<'a> {
    samples: &'a [PointSample],
    radius_km: f64,
    bucket_deg: f64,
    n_cols: i64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> RadiusIndex<'a> {
    pub fn new(samples: &'a [PointSample], radius_km: f64) -> Result<Self> {
        if !(radius_km > 0.0) {
            return Err(Error::invalid("co-location radius", format!("{radius_km} km must be > 0")));
        }
        let bucket_deg = (radius_km / EARTH_RADIUS_KM).to_degrees();
        let n_cols = (360.0 / bucket_deg).ceil() as i64;
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            buckets.entry(Self::key(bucket_deg, n_cols, s.lat, s.lon)).or_default().push(i);
        }
        Ok(RadiusIndex {
            samples,
            radius_km,
            bucket_deg,
            n_cols,
            buckets,
        })
    }

    fn key(bucket_deg: f64, n_cols: i64, lat: f64, lon: f64) -> (i64, i64) {
        let r = ((lat + 90.0) / bucket_deg).floor() as i64;
        let c = (((lon + 180.0) / bucket_deg).floor() as i64).clamp(0, n_cols - 1);
        (r, c)
    }

    /// Indices of samples within the radius of `p` (inclusive), ascending.
    pub fn within(&self, p: LatLon) -> Vec<usize> {
        let delta = self.radius_km / EARTH_RADIUS_KM;
        let delta_deg = delta.to_degrees();
        let cos_lat = p.lat.to_radians().cos();
        // widest longitude offset of any point within angular distance delta
        let dlon_deg = if cos_lat <= delta.sin() {
            180.0
        } else {
            (delta.sin() / cos_lat).min(1.0).asin().to_degrees()
        };
        let (r0, _) = Self::key(self.bucket_deg, self.n_cols, p.lat - delta_deg, p.lon);
        let (r1, _) = Self::key(self.bucket_deg, self.n_cols, p.lat + delta_deg, p.lon);
        let col = |lon: f64| (((lon + 180.0) / self.bucket_deg).floor() as i64).clamp(0, self.n_cols - 1);
        let (lo, hi) = (p.lon - dlon_deg, p.lon + dlon_deg);
        let mut cols: Vec<i64> = if hi - lo >= 360.0 {
            (0..self.n_cols).collect()
        } else if lo < -180.0 {
            (col(lo + 360.0)..self.n_cols).chain(0..=col(hi)).collect()
        } else if hi >= 180.0 {
            (col(lo)..self.n_cols).chain(0..=col(hi - 360.0)).collect()
        } else {
            (col(lo)..=col(hi)).collect()
        };
        cols.sort_unstable();
        cols.dedup();
        let mut out = Vec::new();
        for r in r0..=r1 {
            for &c in &cols {
                if let Some(ids) = self.buckets.get(&(r, c)) {
                    out.extend(
                        ids.iter()
                            .copied()
                            .filter(|&i| haversine_km(p, self.samples[i].position()) <= self.radius_km),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Mean of finite values at `ids`, summed in ascending index order; NaN when none.
fn mean_of(samples: &[PointSample], ids: &[usize]) -> f64 {
    let (sum, n) = ids
        .iter()
        .map(|&i| samples[i].value)
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Average every sample within `radius_km` of each pixel center.
///
/// Pixels without a finite contributor are NaN.
pub fn colocate_radius_mean(
    samples: &[PointSample],
    targets: &Arc<Geolocation>,
    radius_km: f64,
) -> Result<RainField> {
    let index = RadiusIndex::new(samples, radius_km)?;
    let values = (0..targets.len())
        .map(|i| mean_of(samples, &index.within(targets.position(i))) as f32)
        .collect();
    RainField::new(targets.clone(), values, Provenance::Reference)
}

/// Ground-radar mosaic frame of 5-minute accumulations.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicFrame {
    pub spec: GridSpec,
    /// seconds since epoch
    pub time: f64,
    /// mm per 5 minutes, NaN when missing
    pub accumulation: Vec<f32>,
    /// reliability in percent
    pub quality: Vec<u8>,
}

pub const MOSAIC_MAGIC: &[u8; 4] = b"MOS1";

impl MosaicFrame {
    pub fn new(spec: GridSpec, time: f64, accumulation: Vec<f32>, quality: Vec<u8>) -> Result<Self> {
        if accumulation.len() != spec.len() || quality.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "mosaic {}x{} with {} accumulations and {} quality values",
                spec.rows,
                spec.cols,
                accumulation.len(),
                quality.len()
            )));
        }
        if let Some(bad) = accumulation.iter().find(|v| **v < 0.0) {
            return Err(Error::invalid("mosaic accumulation", format!("{bad} mm is negative")));
        }
        if let Some(bad) = quality.iter().find(|q| **q > 100) {
            return Err(Error::invalid("mosaic quality", format!("{bad} exceeds 100")));
        }
        Ok(MosaicFrame {
            spec,
            time,
            accumulation,
            quality,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut b = Vec::with_capacity(44 + 5 * self.spec.len());
        b.extend_from_slice(MOSAIC_MAGIC);
        b.extend_from_slice(&(self.spec.rows as u32).to_le_bytes());
        b.extend_from_slice(&(self.spec.cols as u32).to_le_bytes());
        for v in [self.spec.origin_lat, self.spec.origin_lon, self.spec.cell_deg, self.time] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.accumulation {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.quality);
        fs::write(path, b).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let b = fs::read(path).map_err(|e| Error::io(path, e))?;
        if b.len() < 4 || &b[..4] != MOSAIC_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "MOS1",
                found: String::from_utf8_lossy(&b[..b.len().min(4)]).into_owned(),
            });
        }
        const HEADER: usize = 4 + 8 + 32;
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
        let spec = GridSpec {
            origin_lat: f(12),
            origin_lon: f(20),
            cell_deg: f(28),
            rows,
            cols,
        };
        let time = f(36);
        let n = rows * cols;
        let expected = HEADER + 5 * n;
        if b.len() < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                found: b.len(),
            });
        }
        if b.len() > expected {
            return Err(Error::DimensionMismatch(format!(
                "{}: trailing bytes after mosaic planes",
                path.display()
            )));
        }
        let accumulation = b[HEADER..HEADER + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let quality = b[HEADER + 4 * n..].to_vec();
        MosaicFrame::new(spec, time, accumulation, quality)
    }
}

/// Frame closest in time to `overpass_mid`; ties go to the earlier frame.
pub fn nearest_time_frame(frames: &[MosaicFrame], overpass_mid: f64) -> Result<&MosaicFrame> {
    if frames.is_empty() {
        return Err(Error::Empty("mosaic frame list"));
    }
    if frames.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::invalid("mosaic frames", "not sorted by time"));
    }
    let after = frames.partition_point(|f| f.time < overpass_mid);
    Ok(match after {
        0 => &frames[0],
        n if n == frames.len() => &frames[n - 1],
        n => {
            let (before, next) = (&frames[n - 1], &frames[n]);
            if overpass_mid - before.time <= next.time - overpass_mid {
                before
            } else {
                next
            }
        }
    })
}

/// Gridded rain rates derived from a mosaic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedRates {
    pub spec: GridSpec,
    pub time: f64,
    /// mm/hr, NaN where missing or unreliable
    pub rates: Vec<f32>,
}

impl GriddedRates {
    /// Finite cells as point samples at their cell centers.
    pub fn to_samples(&self) -> Vec<PointSample> {
        let cols = self.spec.cols;
        self.rates
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(i, v)| {
                let (lat, lon) = self.spec.center(i / cols, i % cols);
                PointSample {
                    lat,
                    lon,
                    value: *v as f64,
                    time: self.time,
                }
            })
            .collect()
    }
}

/// Rate = accumulation x 12 where quality >= `quality_min`, NaN elsewhere.
pub fn mosaic_to_rate(frame: &MosaicFrame, quality_min: u8) -> GriddedRates {
    let rates = frame
        .accumulation
        .iter()
        .zip(&frame.quality)
        .map(|(&a, &q)| if q >= quality_min { a * MOSAIC_RATE_FACTOR } else { f32::NAN })
        .collect();
    GriddedRates {
        spec: frame.spec,
        time: frame.time,
        rates,
    }
}

/// Mean per grid cell over values strictly above `min_value`.
///
/// Points outside the grid and NaN values are ignored. Sums run in input order.
pub fn grid_average<I>(pixels: I, spec: &GridSpec, min_value: f64) -> GridField
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut sums = vec![0.0; spec.len()];
    let mut count = vec![0u64; spec.len()];
    for (lat, lon, v) in pixels {
        if !(v > min_value) {
            continue;
        }
        if let Some(cell) = spec.cell_of(lat, lon) {
            sums[cell] += v;
            count[cell] += 1;
        }
    }
    GridField::from_sums(*spec, sums, count)
}

/// `(lat, lon, value)` triples of a rain field, for [`grid_average`].
pub fn field_pixels(field: &RainField) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    use crate::swath::SwathData;
    let geo = field.geo();
    field
        .values()
        .iter()
        .enumerate()
        .map(move |(i, v)| (geo.lat()[i] as f64, geo.lon()[i] as f64, *v as f64))
}

/// Number of pixel centers inside the closed box.
pub fn overpass_coverage(geo: &Geolocation, domain: &LatLonBox) -> usize {
    geo.lat()
        .iter()
        .zip(geo.lon())
        .filter(|(lat, lon)| domain.contains(**lat as f64, **lon as f64))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swath::test_support::grid_geo;
    use crate::swath::SwathData;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(lat: f64, lon: f64, value: f64) -> PointSample {
        PointSample { lat, lon, value, time: 0.0 }
    }

    fn brute_within(samples: &[PointSample], p: LatLon, r: f64) -> Vec<usize> {
        (0..samples.len())
            .filter(|&i| haversine_km(p, samples[i].position()) <= r)
            .collect()
    }

    #[test]
    fn mean_of_three_nearby_samples() {
        let geo = grid_geo(1, 1, 45.0, 3.0, 0.1);
        let s = [sample(45.01, 3.0, 1.0), sample(45.0, 3.02, 2.0), sample(44.99, 2.99, 3.0)];
        let f = colocate_radius_mean(&s, &geo, 5.0).unwrap();
        assert_eq!(f.values()[0], 2.0);
    }

    #[test]
    fn empty_neighbourhood_is_nan() {
        let geo = grid_geo(1, 1, 45.0, 3.0, 0.1);
        let s = [sample(46.0, 3.0, 1.0)];
        let f = colocate_radius_mean(&s, &geo, 5.0).unwrap();
        assert!(f.values()[0].is_nan());
    }

    #[test]
    fn nan_samples_excluded() {
        let geo = grid_geo(1, 1, 0.0, 0.0, 0.1);
        let s = [sample(0.0, 0.0, f64::NAN), sample(0.01, 0.0, 4.0)];
        let f = colocate_radius_mean(&s, &geo, 5.0).unwrap();
        assert_eq!(f.values()[0], 4.0);
    }

    #[test]
    fn radius_is_inclusive() {
        let p = LatLon::new(0.0, 0.0);
        let q = sample(1.0, 0.0, 1.0);
        let d = haversine_km(p, q.position());
        let s = [q];
        let idx = RadiusIndex::new(&s, d).unwrap();
        assert_eq!(idx.within(p), vec![0]);
    }

    #[test]
    fn index_matches_brute_force_near_poles_and_dateline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(lat0, lon0) in &[(89.97, 0.0), (-89.9, 120.0), (10.0, 179.98), (60.0, -179.99)] {
            let samples: Vec<_> = (0..400)
                .map(|_| {
                    let lat: f64 = (lat0 + rng.random_range(-0.2..0.2f64)).clamp(-90.0, 90.0);
                    let lon = crate::geo::wrap_lon(lon0 + rng.random_range(-2.0..2.0));
                    sample(lat, lon, rng.random_range(0.0..5.0))
                })
                .collect();
            let idx = RadiusIndex::new(&samples, 5.0).unwrap();
            for s in samples.iter().take(100) {
                let p = s.position();
                assert_eq!(idx.within(p), brute_within(&samples, p, 5.0));
            }
        }
    }

    #[test]
    fn random_configuration_matches_all_pairs_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..500)
            .map(|_| sample(rng.random_range(40.0..40.5), rng.random_range(5.0..5.5), rng.random_range(0.0..20.0)))
            .collect();
        let mut lat = Vec::new();
        let mut lon = Vec::new();
        for _ in 0..100 {
            lat.push(rng.random_range(40.0..40.5f32));
            lon.push(rng.random_range(5.0..5.5f32));
        }
        let geo = Arc::new(Geolocation::new(10, 10, lat, lon, vec![0.0; 10]).unwrap());
        let f = colocate_radius_mean(&samples, &geo, 5.0).unwrap();
        for i in 0..geo.len() {
            let ids = brute_within(&samples, geo.position(i), 5.0);
            let expect = if ids.is_empty() {
                f32::NAN
            } else {
                (ids.iter().map(|&j| samples[j].value).sum::<f64>() / ids.len() as f64) as f32
            };
            assert!(
                (f.values()[i].is_nan() && expect.is_nan()) || f.values()[i] == expect,
                "pixel {i}"
            );
        }
    }

    fn frame(time: f64) -> MosaicFrame {
        let spec = GridSpec { origin_lat: 0.0, origin_lon: 0.0, cell_deg: 1.0, rows: 1, cols: 1 };
        MosaicFrame::new(spec, time, vec![0.0], vec![100]).unwrap()
    }

    #[test]
    fn nearest_frame_rules() {
        let frames: Vec<_> = [0.0, 300.0, 600.0].into_iter().map(frame).collect();
        assert_eq!(nearest_time_frame(&frames, 300.0).unwrap().time, 300.0);
        assert_eq!(nearest_time_frame(&frames, 150.0).unwrap().time, 0.0);
        assert_eq!(nearest_time_frame(&frames, 151.0).unwrap().time, 300.0);
        assert_eq!(nearest_time_frame(&frames, -50.0).unwrap().time, 0.0);
        assert_eq!(nearest_time_frame(&frames, 9e9).unwrap().time, 600.0);
        assert!(nearest_time_frame(&[], 0.0).is_err());
    }

    #[test]
    fn nearest_frame_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut times: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1e4f64).round()).collect();
        times.sort_by(f64::total_cmp);
        let frames: Vec<_> = times.iter().copied().map(frame).collect();
        for _ in 0..500 {
            let t: f64 = rng.random_range(-100.0..1.01e4f64).round();
            let mut best = 0;
            for (i, f) in frames.iter().enumerate() {
                if (f.time - t).abs() < (frames[best].time - t).abs() {
                    best = i;
                }
            }
            assert_eq!(nearest_time_frame(&frames, t).unwrap().time, frames[best].time);
        }
    }

    #[test]
    fn mosaic_conversion_and_quality_threshold() {
        let spec = GridSpec { origin_lat: 45.0, origin_lon: 0.0, cell_deg: 0.01, rows: 1, cols: 4 };
        let f = MosaicFrame::new(spec, 0.0, vec![1.0, 0.5, 0.5, 0.0], vec![100, 79, 80, 100]).unwrap();
        let r = mosaic_to_rate(&f, DEFAULT_QUALITY_MIN);
        assert_eq!(r.rates[0], 12.0);
        assert!(r.rates[1].is_nan());
        assert_eq!(r.rates[2], 6.0);
        assert_eq!(r.rates[3], 0.0);
        assert_eq!(r.to_samples().len(), 3);
    }

    #[test]
    fn mosaic_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec { origin_lat: 39.0, origin_lon: -8.0, cell_deg: 0.01, rows: 2, cols: 3 };
        let f = MosaicFrame::new(spec, 1.5e9, vec![0.0, 0.1, f32::NAN, 2.0, 0.0, 0.3], vec![0, 50, 80, 100, 99, 81]).unwrap();
        let p = dir.path().join("f.mos");
        f.write(&p).unwrap();
        let back = MosaicFrame::read(&p).unwrap();
        assert_eq!(back.spec, f.spec);
        assert_eq!(back.quality, f.quality);
        assert!(back.accumulation[2].is_nan());
        fs::write(&p, b"MOS1").unwrap();
        assert!(matches!(MosaicFrame::read(&p), Err(Error::Truncated { .. })));
    }

    #[test]
    fn grid_average_threshold_and_constancy() {
        let spec = GridSpec { origin_lat: 0.0, origin_lon: 0.0, cell_deg: 1.0, rows: 2, cols: 2 };
        let g = grid_average([(0.5, 0.5, 2.0)], &spec, 1e-3);
        assert_eq!((g.mean[0], g.count[0]), (2.0, 1));
        let g = grid_average([(0.5, 0.5, 0.0005), (0.6, 0.6, 3.0)], &spec, 1e-3);
        assert_eq!((g.mean[0], g.count[0]), (3.0, 1));
        assert!(g.mean[3].is_nan());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..300).map(|_| (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 0.7)).collect();
        let g = grid_average(pts, &spec, 1e-3);
        for (_, _, m, _) in g.nonempty_cells() {
            assert!((m - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_counts() {
        let geo = grid_geo(4, 5, 45.0, 0.0, 0.1);
        assert_eq!(overpass_coverage(&geo, &LatLonBox::FRANCE_MOSAIC), 20);
        let geo = grid_geo(4, 5, -10.0, 0.0, 0.1);
        assert_eq!(overpass_coverage(&geo, &LatLonBox::FRANCE_MOSAIC), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lat: Vec<f32> = (0..400).map(|_| rng.random_range(35.0..58.0)).collect();
        let lon: Vec<f32> = (0..400).map(|_| rng.random_range(-12.0..16.0)).collect();
        let geo = Geolocation::new(20, 20, lat.clone(), lon.clone(), vec![0.0; 20]).unwrap();
        let b = LatLonBox::FRANCE_MOSAIC;
        let direct = lat
            .iter()
            .zip(&lon)
            .filter(|(a, o)| **a as f64 >= 39.0 && **a as f64 <= 54.0 && **o as f64 >= -8.0 && **o as f64 <= 12.0)
            .count();
        assert_eq!(overpass_coverage(&geo, &b), direct);
    }

    #[test]
    fn field_pixels_feed_grid_average() {
        let geo = grid_geo(2, 2, 0.1, 0.1, 0.5);
        let rain = RainField::new(geo, vec![1.0, 2.0, 3.0, f32::NAN], Provenance::Reference).unwrap();
        let spec = GridSpec { origin_lat: 0.0, origin_lon: 0.0, cell_deg: 1.0, rows: 1, cols: 1 };
        let g = grid_average(field_pixels(&rain), &spec, 1e-3);
        assert_eq!((g.mean[0], g.count[0]), (2.0, 3));
        assert_eq!(rain.shape(), (2, 2));
    }
}
