//! Post-processing of the 99-quantile output: crossing repair, point
//! estimates, confidence bands and numerically differentiated densities.

use std::path::Path;

use crate::error::{Error, Result};
use crate::swath::{
    quantile_level, write_planes, Provenance, QuantileField, RainField, SwathData, SwathKind,
    N_QUANTILES,
};

/// Default rain/no-rain threshold, mm/hr.
pub const RAIN_THRESHOLD: f64 = 1e-4;

/// Sort one pixel's quantile values ascending, then clamp negatives to zero.
pub fn monotonize_levels(values: &mut [f32]) {
    values.sort_by(f32::total_cmp);
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Repair quantile crossing by per-pixel rearrangement (sorting).
pub fn monotonize(qf: &QuantileField) -> QuantileField {
    let n = qf.geo().len();
    let mut out = qf.clone();
    let mut px = vec![0f32; N_QUANTILES];
    let data = out.values_mut();
    for i in 0..n {
        for (k, v) in px.iter_mut().enumerate() {
            *v = data[k * n + i];
        }
        monotonize_levels(&mut px);
        for (k, v) in px.iter().enumerate() {
            data[k * n + i] = *v;
        }
    }
    out
}

/// True when every pixel's quantiles are non-decreasing (NaN pixels ignored).
pub fn is_monotone(qf: &QuantileField) -> bool {
    let n = qf.geo().len();
    let v = qf.values();
    (0..n).all(|i| (1..N_QUANTILES).all(|k| !(v[k * n + i] < v[(k - 1) * n + i])))
}

/// 0-based plane index for a level in {0.01, ..., 0.99}.
pub fn level_plane(level: f64) -> Result<usize> {
    let j = (level * 100.0).round();
    if !(1.0..=99.0).contains(&j) || (level * 100.0 - j).abs() > 1e-6 {
        return Err(Error::invalid("quantile level", format!("{level} is not one of 0.01..0.99")));
    }
    Ok(j as usize - 1)
}

/// The quantile plane at `level` as a rain field (the median by default).
pub fn point_estimate(qf: &QuantileField, level: f64) -> Result<RainField> {
    let k = level_plane(level)?;
    // raw planes may hold negatives; point estimates are rain rates
    let values = qf.plane(k).iter().map(|v| if *v < 0.0 { 0.0 } else { *v }).collect();
    RainField::new(qf.geo().clone(), values, Provenance::Retrieval)
}

/// Nominal coverage of a central band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandLevel {
    /// q25 .. q75
    Fifty,
    /// q5 .. q95
    Ninety,
}

impl BandLevel {
    pub fn from_fraction(level: f64) -> Result<Self> {
        if (level - 0.5).abs() < 1e-9 {
            Ok(BandLevel::Fifty)
        } else if (level - 0.9).abs() < 1e-9 {
            Ok(BandLevel::Ninety)
        } else {
            Err(Error::invalid("band level", format!("{level}; supported: 0.50, 0.90")))
        }
    }

    pub fn fraction(self) -> f64 {
        match self {
            BandLevel::Fifty => 0.5,
            BandLevel::Ninety => 0.9,
        }
    }

    /// 0-based (lower, upper) planes.
    pub fn planes(self) -> (usize, usize) {
        match self {
            BandLevel::Fifty => (24, 74),
            BandLevel::Ninety => (4, 94),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub level: BandLevel,
    pub lower: RainField,
    pub upper: RainField,
}

impl ConfidenceBand {
    /// SWT1 kind 2, planes [lower, upper].
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut planes = self.lower.values().to_vec();
        planes.extend_from_slice(self.upper.values());
        write_planes(path, SwathKind::Quantile, self.lower.geo(), 2, &planes)
    }
}

/// Band from a monotonized quantile field.
pub fn confidence_band(qf: &QuantileField, level: BandLevel) -> Result<ConfidenceBand> {
    let (lo, hi) = level.planes();
    let lower = point_estimate(qf, quantile_level(lo))?;
    let upper = point_estimate(qf, quantile_level(hi))?;
    Ok(ConfidenceBand {
        level,
        lower,
        upper,
    })
}

/// Piecewise-linear CDF through the knots (value_j, level_j), flat outside.
///
/// Right-continuous at ties, so a degenerate distribution jumps at its value.
pub fn cdf_at(knots: &[f64], levels: &[f64], x: f64) -> f64 {
    let n = knots.len();
    if x < knots[0] {
        return levels[0];
    }
    if x >= knots[n - 1] {
        return levels[n - 1];
    }
    // largest k with knots[k] <= x; knots[k + 1] > x
    let k = knots.partition_point(|v| *v <= x) - 1;
    let t = (x - knots[k]) / (knots[k + 1] - knots[k]);
    levels[k] + t * (levels[k + 1] - levels[k])
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("bin edges", "need at least two strictly increasing edges"));
    }
    Ok(())
}

/// Density per bin `[e_k, e_k+1)` of one pixel's quantile vector.
pub fn pdf_from_quantiles(knots: &[f64], edges: &[f64]) -> Result<Vec<f64>> {
    check_edges(edges)?;
    let levels: Vec<f64> = (0..knots.len()).map(quantile_level).collect();
    let cdf: Vec<f64> = edges.iter().map(|&e| cdf_at(knots, &levels, e)).collect();
    Ok(cdf
        .windows(2)
        .zip(edges.windows(2))
        .map(|(f, e)| ((f[1] - f[0]) / (e[1] - e[0])).max(0.0))
        .collect())
}

/// Per-pixel densities, `edges.len() - 1` planes.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfField {
    pub edges: Vec<f64>,
    /// plane-major: bin k of pixel i at `k * n_pixels + i`
    pub density: Vec<f64>,
    pub n_pixels: usize,
}

impl PdfField {
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// SWT1 kind 2, one plane per bin.
    pub fn write(&self, path: impl AsRef<Path>, qf: &QuantileField) -> Result<()> {
        let planes: Vec<f32> = self.density.iter().map(|v| *v as f32).collect();
        write_planes(path, SwathKind::Quantile, qf.geo(), self.n_bins(), &planes)
    }
}

/// Numerical derivative of each pixel's retrieved CDF over the given bins.
pub fn pdf_from_cdf(qf: &QuantileField, edges: &[f64]) -> Result<PdfField> {
    check_edges(edges)?;
    let n = qf.geo().len();
    let nb = edges.len() - 1;
    let mut density = vec![0.0; nb * n];
    for i in 0..n {
        let knots: Vec<f64> = qf.pixel(i).iter().map(|v| *v as f64).collect();
        if knots.iter().any(|v| v.is_nan()) {
            for k in 0..nb {
                density[k * n + i] = f64::NAN;
            }
            continue;
        }
        for (k, d) in pdf_from_quantiles(&knots, edges)?.into_iter().enumerate() {
            density[k * n + i] = d;
        }
    }
    Ok(PdfField {
        edges: edges.to_vec(),
        density,
        n_pixels: n,
    })
}

/// `value > threshold`; NaN is no rain.
pub fn is_rain(value: f64, threshold: f64) -> bool {
    value > threshold
}

pub fn rain_mask(field: &RainField, threshold: f64) -> Vec<bool> {
    field.values().iter().map(|v| is_rain(*v as f64, threshold)).collect()
}
