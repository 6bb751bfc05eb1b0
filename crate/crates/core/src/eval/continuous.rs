use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantiles::is_rain;

fn finite_pair(e: f64, r: f64) -> bool {
    !e.is_nan() && !r.is_nan()
}

/// Bias (reference - estimate) and RMSE over true positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasRmse {
    pub bias: f64,
    pub rmse: f64,
    pub n: u64,
}

/// Conditional bias and RMSE over pixels where both sides rain.
///
/// A positive bias means the estimator underestimates. No true positives
/// gives NaN with `n = 0`.
pub fn conditional_bias_rmse(est: &[f64], reference: &[f64], threshold: f64) -> BiasRmse {
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0u64);
    for (&e, &r) in est.iter().zip(reference) {
        if finite_pair(e, r) && is_rain(e, threshold) && is_rain(r, threshold) {
            let d = r - e;
            sum += d;
            sq += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return BiasRmse {
            bias: f64::NAN,
            rmse: f64::NAN,
            n: 0,
        };
    }
    BiasRmse {
        bias: sum / n as f64,
        rmse: (sq / n as f64).sqrt(),
        n,
    }
}

/// Statistics of the two error categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    /// mean estimator rain on false alarms
    pub fa_mean: f64,
    /// RMSE (estimate vs reference) on false alarms
    pub fa_rmse: f64,
    pub fa_n: u64,
    /// mean reference rain on bad detections (missed rain)
    pub bd_mean: f64,
    pub bd_n: u64,
}

pub fn error_conditional_stats(est: &[f64], reference: &[f64], threshold: f64) -> ErrorStats {
    let (mut fa_sum, mut fa_sq, mut fa_n) = (0.0, 0.0, 0u64);
    let (mut bd_sum, mut bd_n) = (0.0, 0u64);
    for (&e, &r) in est.iter().zip(reference) {
        if !finite_pair(e, r) {
            continue;
        }
        match (is_rain(r, threshold), is_rain(e, threshold)) {
            (false, true) => {
                fa_sum += e;
                fa_sq += (e - r) * (e - r);
                fa_n += 1;
            }
            (true, false) => {
                bd_sum += r;
                bd_n += 1;
            }
            _ => {}
        }
    }
    let div = |s: f64, n: u64| if n == 0 { f64::NAN } else { s / n as f64 };
    ErrorStats {
        fa_mean: div(fa_sum, fa_n),
        fa_rmse: div(fa_sq, fa_n).sqrt(),
        fa_n,
        bd_mean: div(bd_sum, bd_n),
        bd_n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    Log,
}

/// Binning of both scatter axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterAxes {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
    pub scale: AxisScale,
}

impl ScatterAxes {
    pub fn edges(&self) -> Result<Vec<f64>> {
        if self.bins == 0 || !(self.max > self.min) {
            return Err(Error::invalid("scatter axes", format!("{self:?}")));
        }
        let n = self.bins;
        Ok(match self.scale {
            AxisScale::Linear => (0..=n)
                .map(|k| self.min + (self.max - self.min) * k as f64 / n as f64)
                .collect(),
            AxisScale::Log => {
                if !(self.min > 0.0) {
                    return Err(Error::invalid("scatter axes", "log axis needs min > 0"));
                }
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..=n).map(|k| (a + (b - a) * k as f64 / n as f64).exp()).collect()
            }
        })
    }
}

/// Index of the bin of `[e_k, e_k+1)` holding `v`; the last edge is closed.
pub(crate) fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len();
    if v.is_nan() || v < edges[0] || v > edges[n - 1] {
        return None;
    }
    if v == edges[n - 1] {
        return Some(n - 2);
    }
    Some(edges.partition_point(|e| *e <= v) - 1)
}

/// 2-D histogram plus least-squares regression of the reference on the
/// estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityScatter {
    pub edges: Vec<f64>,
    /// `counts[est_bin * n_bins + ref_bin]`
    pub counts: Vec<u64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: u64,
}

/// Scatter of estimate (x) against reference (y) with an OLS line `ref = slope * est + intercept`.
///
/// R² = 1 - SS_res / SS_tot over the reference. A constant estimate fits the
/// reference mean (R² = 0); a constant reference leaves R² undefined (NaN).
pub fn density_scatter(est: &[f64], reference: &[f64], axes: &ScatterAxes) -> Result<DensityScatter> {
    let edges = axes.edges()?;
    let nb = edges.len() - 1;
    let pairs: Vec<(f64, f64)> = est
        .iter()
        .zip(reference)
        .filter(|(e, r)| e.is_finite() && r.is_finite())
        .map(|(e, r)| (*e, *r))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Empty("scatter needs at least two finite pairs"));
    }
    let mut counts = vec![0u64; nb * nb];
    for &(e, r) in &pairs {
        if let (Some(i), Some(j)) = (bin_of(&edges, e), bin_of(&edges, r)) {
            counts[i * nb + j] += 1;
        }
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = pairs
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { f64::NAN };
    Ok(DensityScatter {
        edges,
        counts,
        slope,
        intercept,
        r2,
        n: pairs.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeBucketing {
    #[default]
    Month,
    Day,
}

impl TimeBucketing {
    fn start_of(self, t: f64) -> NaiveDate {
        let d = DateTime::from_timestamp(t.floor() as i64, 0)
            .unwrap_or_default()
            .date_naive();
        match self {
            TimeBucketing::Month => d.with_day(1).unwrap(),
            TimeBucketing::Day => d,
        }
    }

    fn next(self, d: NaiveDate) -> NaiveDate {
        match self {
            TimeBucketing::Month => d.checked_add_months(chrono::Months::new(1)).unwrap(),
            TimeBucketing::Day => d.succ_opt().unwrap(),
        }
    }

    fn label(self, d: NaiveDate) -> String {
        match self {
            TimeBucketing::Month => d.format("%Y-%m").to_string(),
            TimeBucketing::Day => d.format("%Y-%m-%d").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeBucket {
    pub label: String,
    pub mae: f64,
    pub n: u64,
}

/// Mean absolute error per calendar bucket over pixels where both sides rain.
///
/// Buckets run contiguously from the first to the last bucket touched by any
/// finite pair; buckets without rainy pairs are NaN.
pub fn mae_by_time(
    est: &[f64],
    reference: &[f64],
    time: &[f64],
    threshold: f64,
    bucketing: TimeBucketing,
) -> Vec<MaeBucket> {
    let mut acc: BTreeMap<NaiveDate, (f64, u64)> = BTreeMap::new();
    for ((&e, &r), &t) in est.iter().zip(reference).zip(time) {
        if !finite_pair(e, r) {
            continue;
        }
        let slot = acc.entry(bucketing.start_of(t)).or_insert((0.0, 0));
        if is_rain(e, threshold) && is_rain(r, threshold) {
            slot.0 += (e - r).abs();
            slot.1 += 1;
        }
    }
    let (Some(first), Some(last)) = (acc.keys().next().copied(), acc.keys().last().copied()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut d = first;
    while d <= last {
        let (s, n) = acc.get(&d).copied().unwrap_or((0.0, 0));
        out.push(MaeBucket {
            label: bucketing.label(d),
            mae: if n == 0 { f64::NAN } else { s / n as f64 },
            n,
        });
        d = bucketing.next(d);
    }
    out
}
