use serde::Serialize;

use super::continuous::bin_of;
use crate::error::{Error, Result};
use crate::quantiles::is_rain;

/// Histogram of rainy pixels for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityHistogram {
    pub name: String,
    pub counts: Vec<u64>,
    /// count / (rainy pixels * bin width); integrates to the in-range fraction
    pub density: Vec<f64>,
    pub n_rainy: u64,
}

/// Default light-rain edges: 0 to 2 mm/hr in 0.05 mm/hr bins.
pub fn light_rain_edges() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.05).collect()
}

/// Normalized histograms of the rainy pixels of each named field, all on
/// the same edges.
pub fn intensity_histogram(
    fields: &[(&str, &[f64])],
    edges: &[f64],
    threshold: f64,
) -> Result<Vec<IntensityHistogram>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("histogram edges", "need increasing edges"));
    }
    let nb = edges.len() - 1;
    Ok(fields
        .iter()
        .map(|(name, values)| {
            let mut counts = vec![0u64; nb];
            let mut n_rainy = 0u64;
            for &v in values.iter() {
                if !is_rain(v, threshold) {
                    continue;
                }
                n_rainy += 1;
                if let Some(b) = bin_of(edges, v) {
                    counts[b] += 1;
                }
            }
            let density = counts
                .iter()
                .zip(edges.windows(2))
                .map(|(c, e)| {
                    if n_rainy == 0 {
                        f64::NAN
                    } else {
                        *c as f64 / (n_rainy as f64 * (e[1] - e[0]))
                    }
                })
                .collect();
            IntensityHistogram {
                name: name.to_string(),
                counts,
                density,
                n_rainy,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_bin() {
        let v = [0.51, 0.52, 0.53];
        let h = intensity_histogram(&[("x", &v)], &light_rain_edges(), 1e-4).unwrap();
        let nonzero: Vec<_> = h[0].counts.iter().enumerate().filter(|(_, c)| **c > 0).collect();
        assert_eq!(nonzero, vec![(10, &3)]);
    }

    #[test]
    fn densities_integrate_to_one() {
        let v: Vec<f64> = (1..500).map(|i| i as f64 * 0.004).collect();
        let edges = light_rain_edges();
        let h = intensity_histogram(&[("a", &v), ("b", &v[..100])], &edges, 1e-4).unwrap();
        for hist in &h {
            let mass: f64 = hist.density.iter().zip(edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_samples_are_flat() {
        // 40 bins, n = 40_000: per-bin count ~ Binomial(n, 1/40), sd ~ 31.2
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..40_000).map(|_| rng.random_range(1e-3..2.0)).collect();
        let h = intensity_histogram(&[("u", &v)], &light_rain_edges(), 1e-4).unwrap();
        let expect = 40_000.0 / 40.0;
        let sd = (40_000.0 * (1.0 / 40.0) * (39.0 / 40.0f64)).sqrt();
        for c in &h[0].counts {
            assert!((*c as f64 - expect).abs() < 5.0 * sd, "{c}");
        }
    }
}
