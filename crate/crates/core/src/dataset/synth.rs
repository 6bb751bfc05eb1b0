//! Synthetic scenes: elliptical Gaussian rain cells observed by a toy
//! radiometer forward model and by a gridded "radar" that is co-located onto
//! the swath pixels like real ground validation data.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::colocation::{colocate_radius_mean, PointSample};
use crate::error::{Error, Result};
use crate::geo::{wrap_lon, KM_PER_DEG};
use crate::swath::{
    Geolocation, Provenance, RainField, SurfaceClass, SurfaceMask, SwathData, TbScene, N_TB_CHANNELS,
    TB_RANGE_K,
};

/// 2019-01-01T00:00:00Z and 2020-01-01T00:00:00Z.
const YEAR_START: f64 = 1_546_300_800.0;
const YEAR_END: f64 = 1_577_836_800.0;
/// Time between consecutive scans, seconds.
const SCAN_PERIOD_S: f64 = 1.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_scan: usize,
    pub n_pix: usize,
    /// along- and cross-track pixel spacing
    pub pixel_km: f64,
    /// mean number of rain cells per scene (Poisson)
    pub cell_rate: f64,
    /// log-space mean and std of the cell peak intensity (mm/hr)
    pub peak_log_mu: f64,
    pub peak_log_sigma: f64,
    /// Gaussian std of each ellipse axis, drawn uniformly in this range
    pub radius_km: (f64, f64),
    /// cells are zero beyond this Mahalanobis distance
    pub cutoff_sigma: f64,
    pub tb0: [f64; N_TB_CHANNELS],
    pub a: [f64; N_TB_CHANNELS],
    pub b: [f64; N_TB_CHANNELS],
    pub noise_k: [f64; N_TB_CHANNELS],
    pub land_offset_k: [f64; N_TB_CHANNELS],
    pub ocean_offset_k: [f64; N_TB_CHANNELS],
    pub radar_spacing_km: f64,
    pub colocation_radius_km: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_scan: 64,
            n_pix: 64,
            pixel_km: 5.0,
            cell_rate: 5.0,
            peak_log_mu: 3f64.ln(),
            peak_log_sigma: 0.9,
            radius_km: (8.0, 30.0),
            cutoff_sigma: 3.0,
            tb0: [270.0, 265.0, 280.0, 275.0],
            a: [4.0, 4.0, 12.0, 12.0],
            b: [0.6; N_TB_CHANNELS],
            noise_k: [1.0; N_TB_CHANNELS],
            land_offset_k: [0.0, 10.0, 0.0, 10.0],
            ocean_offset_k: [0.0; N_TB_CHANNELS],
            radar_spacing_km: 4.7,
            colocation_radius_km: 5.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid("synth config", format!("{what} must be positive")));
        if self.n_scan == 0 || self.n_pix == 0 {
            return bad("image size");
        }
        for (name, v) in [
            ("pixel_km", self.pixel_km),
            ("peak_log_sigma", self.peak_log_sigma),
            ("radius_km.0", self.radius_km.0),
            ("cutoff_sigma", self.cutoff_sigma),
            ("radar_spacing_km", self.radar_spacing_km),
            ("colocation_radius_km", self.colocation_radius_km),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name);
            }
        }
        if !(self.cell_rate >= 0.0) || !(self.radius_km.1 >= self.radius_km.0) {
            return Err(Error::invalid("synth config", "cell_rate >= 0 and radius_km ordered"));
        }
        if self.a.iter().chain(&self.b).any(|v| !(*v > 0.0)) || self.noise_k.iter().any(|v| !(*v >= 0.0)) {
            return bad("forward coefficients");
        }
        let extent_deg = self.n_scan as f64 * self.pixel_km / KM_PER_DEG;
        if extent_deg > 20.0 {
            return Err(Error::invalid("synth config", "scene spans more than 20 degrees of latitude"));
        }
        Ok(())
    }

    fn offset(&self, surface: SurfaceClass) -> &[f64; N_TB_CHANNELS] {
        match surface {
            SurfaceClass::Land => &self.land_offset_k,
            SurfaceClass::Ocean => &self.ocean_offset_k,
        }
    }
}

/// Noise-free brightness temperature over `surface` for rain rate `rain`.
pub fn forward_tb(cfg: &SynthConfig, channel: usize, surface: SurfaceClass, rain: f64) -> f64 {
    cfg.tb0[channel] + cfg.offset(surface)[channel] - cfg.a[channel] * rain.max(0.0).powf(cfg.b[channel])
}

/// Closed-form inverse of [`forward_tb`] (negative depressions give 0).
pub fn invert_tb(cfg: &SynthConfig, channel: usize, surface: SurfaceClass, tb: f64) -> f64 {
    let dep = (cfg.tb0[channel] + cfg.offset(surface)[channel] - tb) / cfg.a[channel];
    dep.max(0.0).powf(1.0 / cfg.b[channel])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainCell {
    pub lat: f64,
    pub lon: f64,
    pub peak: f64,
    /// Gaussian std along the rotated axes, km
    pub sigma_u_km: f64,
    pub sigma_v_km: f64,
    /// rotation of the u axis from east, radians
    pub theta: f64,
}

impl RainCell {
    fn rate_at(&self, lat: f64, lon: f64, cutoff: f64) -> f64 {
        let dx = wrap_lon(lon - self.lon) * KM_PER_DEG * self.lat.to_radians().cos();
        let dy = (lat - self.lat) * KM_PER_DEG;
        let (s, c) = self.theta.sin_cos();
        let u = (c * dx + s * dy) / self.sigma_u_km;
        let v = (-s * dx + c * dy) / self.sigma_v_km;
        let m2 = u * u + v * v;
        if m2 > cutoff * cutoff {
            0.0
        } else {
            self.peak * (-0.5 * m2).exp()
        }
    }
}

/// The continuous rain field of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RainCells {
    pub cells: Vec<RainCell>,
    pub cutoff_sigma: f64,
}

impl RainCells {
    pub fn rate_at(&self, lat: f64, lon: f64) -> f64 {
        self.cells.iter().map(|c| c.rate_at(lat, lon, self.cutoff_sigma)).sum()
    }
}

/// A regular swath tile somewhere between 60S and 60N during 2019.
pub fn synth_geolocation(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Arc<Geolocation>> {
    let dlat = cfg.pixel_km / KM_PER_DEG;
    let extent = cfg.n_scan as f64 * dlat;
    let lat0 = rng.random_range(-60.0..60.0 - extent);
    let lon0 = rng.random_range(-180.0..180.0);
    let t0 = rng.random_range(YEAR_START..YEAR_END - cfg.n_scan as f64 * SCAN_PERIOD_S);
    let mut lat = Vec::with_capacity(cfg.n_scan * cfg.n_pix);
    let mut lon = Vec::with_capacity(cfg.n_scan * cfg.n_pix);
    for s in 0..cfg.n_scan {
        let la = lat0 + s as f64 * dlat;
        let dlon = cfg.pixel_km / (KM_PER_DEG * la.to_radians().cos());
        for p in 0..cfg.n_pix {
            lat.push(la as f32);
            // f32 rounding can land exactly on +180
            let lo = wrap_lon(lon0 + p as f64 * dlon) as f32;
            lon.push(if lo >= 180.0 { -180.0 } else { lo });
        }
    }
    let times = (0..cfg.n_scan).map(|s| t0 + s as f64 * SCAN_PERIOD_S).collect();
    Ok(Arc::new(Geolocation::new(cfg.n_scan, cfg.n_pix, lat, lon, times)?))
}

fn draw_cells(cfg: &SynthConfig, geo: &Geolocation, rng: &mut ChaCha8Rng) -> Result<RainCells> {
    let n = if cfg.cell_rate > 0.0 {
        let p = Poisson::new(cfg.cell_rate).map_err(|e| Error::invalid("cell_rate", e.to_string()))?;
        p.sample(rng) as usize
    } else {
        0
    };
    let peak = LogNormal::new(cfg.peak_log_mu, cfg.peak_log_sigma)
        .map_err(|e| Error::invalid("peak intensity", e.to_string()))?;
    let mut cells = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..geo.len());
        let c = geo.position(i);
        let mut r = || {
            if cfg.radius_km.1 > cfg.radius_km.0 {
                rng.random_range(cfg.radius_km.0..cfg.radius_km.1)
            } else {
                cfg.radius_km.0
            }
        };
        let (su, sv) = (r(), r());
        cells.push(RainCell {
            lat: c.lat,
            lon: c.lon,
            peak: peak.sample(rng),
            sigma_u_km: su,
            sigma_v_km: sv,
            theta: rng.random_range(0.0..std::f64::consts::PI),
        });
    }
    Ok(RainCells {
        cells,
        cutoff_sigma: cfg.cutoff_sigma,
    })
}

/// Draw rain cells and sample them at the pixel centers.
pub fn synth_rain(cfg: &SynthConfig, geo: &Arc<Geolocation>, rng: &mut ChaCha8Rng) -> Result<(RainCells, RainField)> {
    let cells = draw_cells(cfg, geo, rng)?;
    let values = (0..geo.len())
        .map(|i| {
            let p = geo.position(i);
            cells.rate_at(p.lat, p.lon) as f32
        })
        .collect();
    let field = RainField::new(geo.clone(), values, Provenance::Reference)?;
    Ok((cells, field))
}

/// Brightness temperatures seen over `rain`, with Gaussian noise, clamped to
/// the valid range.
pub fn synth_tb(
    granule_id: &str,
    rain: &RainField,
    mask: &SurfaceMask,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TbScene> {
    let geo = rain.geo();
    let n = geo.len();
    let surface: Vec<SurfaceClass> = (0..n)
        .map(|i| {
            let p = geo.position(i);
            mask.lookup(p.lat, p.lon)
        })
        .collect();
    let mut tb = vec![0f32; N_TB_CHANNELS * n];
    for c in 0..N_TB_CHANNELS {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            let r = rain.values()[i] as f64;
            let t = if r.is_nan() {
                f32::NAN
            } else {
                (forward_tb(cfg, c, surface[i], r) + cfg.noise_k[c] * z)
                    .clamp(TB_RANGE_K.0 as f64, TB_RANGE_K.1 as f64) as f32
            };
            tb[c * n + i] = t;
        }
    }
    TbScene::new(granule_id, geo.clone(), tb)
}

/// Radar-like point samples on a regular km grid covering the tile plus a
/// margin, at the tile's mid time.
pub fn radar_samples(cells: &RainCells, geo: &Geolocation, spacing_km: f64, margin_km: f64) -> Vec<PointSample> {
    let lat_min = geo.lat().iter().fold(f64::INFINITY, |m, v| m.min(*v as f64));
    let lat_max = geo.lat().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v as f64));
    // longitudes relative to the first pixel so the dateline does not split the box
    let lon_ref = geo.lon()[0] as f64;
    let rel = |v: f32| wrap_lon(v as f64 - lon_ref);
    let rlo_min = geo.lon().iter().fold(f64::INFINITY, |m, v| m.min(rel(*v)));
    let rlo_max = geo.lon().iter().fold(f64::NEG_INFINITY, |m, v| m.max(rel(*v)));
    let margin_deg = margin_km / KM_PER_DEG;
    let dlat = spacing_km / KM_PER_DEG;
    let t = geo.mid_time();
    let mut out = Vec::new();
    let mut lat = lat_min - margin_deg;
    while lat <= lat_max + margin_deg {
        let cosl = lat.to_radians().cos().max(1e-6);
        let dlon = dlat / cosl;
        let mut rl = rlo_min - margin_deg / cosl;
        while rl <= rlo_max + margin_deg / cosl {
            let lon = wrap_lon(lon_ref + rl);
            out.push(PointSample {
                lat,
                lon,
                value: cells.rate_at(lat, lon),
                time: t,
            });
            rl += dlon;
        }
        lat += dlat;
    }
    out
}

/// A fixed land/ocean pattern of irregular continents, resolution `cell_deg`.
pub fn synthetic_mask(cell_deg: f64) -> Result<SurfaceMask> {
    SurfaceMask::from_fn(cell_deg, |lat, lon| {
        let (a, b) = (lat.to_radians(), lon.to_radians());
        let f = (3.0 * a).sin() * (2.0 * b).cos() + 0.5 * (5.0 * b + 1.0).sin() * (4.0 * a).cos();
        if f > 0.3 {
            SurfaceClass::Land
        } else {
            SurfaceClass::Ocean
        }
    })
}

/// One generated scene.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub cells: RainCells,
    /// rain at the pixel centers, which drives the radiometer
    pub truth: RainField,
    /// radar samples radius-averaged onto the pixels
    pub reference: RainField,
    pub tb: TbScene,
}

/// Scene `index` of the dataset seeded by `cfg.seed`. Each index has its own
/// ChaCha stream, so scenes can be produced in any order.
pub fn generate_scene(cfg: &SynthConfig, mask: &SurfaceMask, index: u64, granule_id: &str) -> Result<SynthScene> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let geo = synth_geolocation(cfg, &mut rng)?;
    let (cells, truth) = synth_rain(cfg, &geo, &mut rng)?;
    let tb = synth_tb(granule_id, &truth, mask, cfg, &mut rng)?;
    let samples = radar_samples(&cells, &geo, cfg.radar_spacing_km, 2.0 * cfg.colocation_radius_km);
    let reference = colocate_radius_mean(&samples, &geo, cfg.colocation_radius_km)?;
    Ok(SynthScene {
        cells,
        truth,
        reference,
        tb,
    })
}
