use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantiles::{is_rain, BandLevel};
use crate::swath::{QuantileField, RainField, SwathData};

/// Lower edges of the reference-intensity bins; the last bin is open.
pub const DEFAULT_COVERAGE_BINS: [f64; 4] = [0.0, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub label: String,
    pub n: u64,
    /// percent of true positives inside the q25..q75 band
    pub cov50: f64,
    /// percent of true positives inside the q5..q95 band
    pub cov90: f64,
}

/// Empirical band coverage per reference-intensity bin, plus an "All" row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub all: CoverageRow,
}

/// Streaming counts behind a [`CoverageTable`].
#[derive(Debug, Clone)]
pub struct CoverageAccumulator {
    lower_edges: Vec<f64>,
    threshold: f64,
    n: Vec<u64>,
    hit50: Vec<u64>,
    hit90: Vec<u64>,
}

impl CoverageAccumulator {
    pub fn new(lower_edges: &[f64], threshold: f64) -> Result<Self> {
        if lower_edges.is_empty() || lower_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("coverage bins", "need increasing lower edges"));
        }
        let k = lower_edges.len();
        Ok(CoverageAccumulator {
            lower_edges: lower_edges.to_vec(),
            threshold,
            n: vec![0; k],
            hit50: vec![0; k],
            hit90: vec![0; k],
        })
    }

    /// One pixel: `median` is the point estimate used for detection, `band50`
    /// and `band90` the (lower, upper) bounds.
    pub fn add(&mut self, median: f64, band50: (f64, f64), band90: (f64, f64), reference: f64) {
        if median.is_nan() || reference.is_nan() {
            return;
        }
        if !(is_rain(median, self.threshold) && is_rain(reference, self.threshold)) {
            return;
        }
        let Some(b) = self.lower_edges.iter().rposition(|e| reference >= *e) else {
            return;
        };
        self.n[b] += 1;
        if band50.0 <= reference && reference <= band50.1 {
            self.hit50[b] += 1;
        }
        if band90.0 <= reference && reference <= band90.1 {
            self.hit90[b] += 1;
        }
    }

    /// All pixels of a monotonized quantile field against its reference.
    pub fn add_scene(&mut self, qf: &QuantileField, reference: &RainField) -> Result<()> {
        if qf.shape() != reference.shape() {
            return Err(Error::DimensionMismatch(format!(
                "quantiles {:?} vs reference {:?}",
                qf.shape(),
                reference.shape()
            )));
        }
        let (l50, u50) = BandLevel::Fifty.planes();
        let (l90, u90) = BandLevel::Ninety.planes();
        let p = |k: usize, i: usize| qf.plane(k)[i] as f64;
        for (i, r) in reference.values().iter().enumerate() {
            self.add(p(49, i), (p(l50, i), p(u50, i)), (p(l90, i), p(u90, i)), *r as f64);
        }
        Ok(())
    }

    fn row(label: String, n: u64, h50: u64, h90: u64) -> CoverageRow {
        let pct = |h: u64| if n == 0 { f64::NAN } else { h as f64 / n as f64 * 100.0 };
        CoverageRow {
            label,
            n,
            cov50: pct(h50),
            cov90: pct(h90),
        }
    }

    pub fn finish(&self) -> CoverageTable {
        let k = self.lower_edges.len();
        let fmt = |v: f64| format!("{v}");
        let rows = (0..k)
            .map(|b| {
                let label = if b + 1 < k {
                    format!("{} to {}", fmt(self.lower_edges[b]), fmt(self.lower_edges[b + 1]))
                } else {
                    format!("{} and above", fmt(self.lower_edges[b]))
                };
                Self::row(label, self.n[b], self.hit50[b], self.hit90[b])
            })
            .collect();
        let all = Self::row(
            "All".into(),
            self.n.iter().sum(),
            self.hit50.iter().sum(),
            self.hit90.iter().sum(),
        );
        CoverageTable { rows, all }
    }
}
