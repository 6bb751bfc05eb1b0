use crate::error::{Error, Result};
use crate::swath::{GridField, GridSpec};

use super::MatchedPixels;

/// Cellwise `reference mean - estimator mean` of two grids of equal geometry.
///
/// Cells empty on either side are NaN; the count is the smaller of the two.
pub fn grid_difference(reference: &GridField, est: &GridField) -> Result<GridField> {
    if reference.spec != est.spec {
        return Err(Error::DimensionMismatch(format!(
            "grid geometry {:?} vs {:?}",
            reference.spec, est.spec
        )));
    }
    let mean = reference
        .mean
        .iter()
        .zip(&est.mean)
        .map(|(r, e)| r - e)
        .collect();
    let count = reference
        .count
        .iter()
        .zip(&est.count)
        .map(|(r, e)| if *r == 0 || *e == 0 { 0 } else { (*r).min(*e) })
        .collect();
    let mut g = GridField {
        spec: reference.spec,
        mean,
        count,
    };
    for (m, c) in g.mean.iter_mut().zip(&g.count) {
        if *c == 0 {
            *m = f64::NAN;
        }
    }
    Ok(g)
}

/// Differences taken per pixel (`reference - estimate`) and then averaged per
/// cell, over pixels where both sides exceed `min_value`.
pub fn pixel_difference_grid(pixels: &MatchedPixels, spec: &GridSpec, min_value: f64) -> GridField {
    let mut sums = vec![0.0; spec.len()];
    let mut count = vec![0u64; spec.len()];
    for i in 0..pixels.len() {
        let (e, r) = (pixels.est[i], pixels.reference[i]);
        if !(e > min_value && r > min_value) {
            continue;
        }
        if let Some(c) = spec.cell_of(pixels.lat[i], pixels.lon[i]) {
            sums[c] += r - e;
            count[c] += 1;
        }
    }
    GridField::from_sums(*spec, sums, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colocation::grid_average;
    use crate::geo::LatLonBox;
    use rand::{Rng, SeedableRng};

    fn spec() -> GridSpec {
        GridSpec::covering(&LatLonBox { lat_min: 0.0, lat_max: 3.0, lon_min: 0.0, lon_max: 3.0 }, 1.0).unwrap()
    }

    #[test]
    fn identical_grids_difference_zero() {
        let pts = [(0.5, 0.5, 2.0), (1.5, 2.5, 1.0)];
        let g = grid_average(pts, &spec(), 1e-3);
        let d = grid_difference(&g, &g).unwrap();
        for (_, _, m, _) in d.nonempty_cells() {
            assert_eq!(m, 0.0);
        }
        assert!(d.mean[1].is_nan());
    }

    #[test]
    fn single_cell_difference() {
        let r = grid_average([(0.5, 0.5, 2.0)], &spec(), 1e-3);
        let e = grid_average([(0.5, 0.5, 0.5)], &spec(), 1e-3);
        assert_eq!(grid_difference(&r, &e).unwrap().mean[0], 1.5);
    }

    #[test]
    fn geometry_mismatch() {
        let a = grid_average([(0.5, 0.5, 2.0)], &spec(), 1e-3);
        let other = GridSpec { cell_deg: 0.5, rows: 6, cols: 6, ..spec() };
        let b = grid_average([(0.5, 0.5, 2.0)], &other, 1e-3);
        assert!(grid_difference(&a, &b).is_err());
    }

    #[test]
    fn antisymmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let a: Vec<_> = (0..200).map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..5.0))).collect();
        let b: Vec<_> = (0..200).map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..5.0))).collect();
        let ga = grid_average(a, &spec(), 1e-3);
        let gb = grid_average(b, &spec(), 1e-3);
        let ab = grid_difference(&ga, &gb).unwrap();
        let ba = grid_difference(&gb, &ga).unwrap();
        for (x, y) in ab.mean.iter().zip(&ba.mean) {
            assert!((x.is_nan() && y.is_nan()) || *x == -*y);
        }
    }

    #[test]
    fn pixel_path_equals_grid_path_when_fully_paired() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut px = MatchedPixels::new();
        for _ in 0..500 {
            px.lat.push(rng.random_range(0.0..3.0));
            px.lon.push(rng.random_range(0.0..3.0));
            px.est.push(rng.random_range(0.01..10.0));
            px.reference.push(rng.random_range(0.01..10.0));
            px.time.push(0.0);
        }
        let by_pixel = pixel_difference_grid(&px, &spec(), 1e-3);
        let pts = |v: &Vec<f64>| -> Vec<(f64, f64, f64)> { (0..px.len()).map(|i| (px.lat[i], px.lon[i], v[i])).collect() };
        let gr = grid_average(pts(&px.reference), &spec(), 1e-3);
        let ge = grid_average(pts(&px.est), &spec(), 1e-3);
        let by_grid = grid_difference(&gr, &ge).unwrap();
        for (a, b) in by_pixel.mean.iter().zip(&by_grid.mean) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(by_pixel.count, by_grid.count);
    }
}
