use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantiles::is_rain;

/// Rain/no-rain cross-classification; reference on rows, estimator on columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    /// reference rain, estimator rain
    pub tp: u64,
    /// reference rain, estimator dry (bad detection)
    pub fn_: u64,
    /// reference dry, estimator rain (false alarm)
    pub fp: u64,
    /// both dry
    pub tn: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// `[tp, fn, fp, tn]` as percentages of the total.
    pub fn percentages(&self) -> [f64; 4] {
        let t = self.total() as f64;
        [self.tp, self.fn_, self.fp, self.tn].map(|c| c as f64 / t * 100.0)
    }

    pub fn merge(&self, other: &ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            tp: self.tp + other.tp,
            fn_: self.fn_ + other.fn_,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
        }
    }
}

/// Count the four categories over pairs where both sides are finite.
///
/// Errors when no pair is co-located.
pub fn contingency(est: &[f64], reference: &[f64], threshold: f64) -> Result<ContingencyTable> {
    if est.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} reference values",
            est.len(),
            reference.len()
        )));
    }
    let mut t = ContingencyTable {
        tp: 0,
        fn_: 0,
        fp: 0,
        tn: 0,
    };
    for (&e, &r) in est.iter().zip(reference) {
        if e.is_nan() || r.is_nan() {
            continue;
        }
        match (is_rain(r, threshold), is_rain(e, threshold)) {
            (true, true) => t.tp += 1,
            (true, false) => t.fn_ += 1,
            (false, true) => t.fp += 1,
            (false, false) => t.tn += 1,
        }
    }
    if t.total() == 0 {
        return Err(Error::Empty("co-located pixels"));
    }
    Ok(t)
}

/// Detection skill; NaN where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSet {
    pub pod: f64,
    pub far: f64,
    pub precision: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

impl ScoreSet {
    /// From category weights (raw counts or percentages; only ratios matter).
    pub fn from_weights(tp: f64, fn_: f64, fp: f64) -> Self {
        let pod = ratio(tp, tp + fn_);
        let far = ratio(fp, fp + tp);
        let precision = ratio(tp, tp + fp);
        let f1 = ratio(2.0 * precision * pod, precision + pod);
        ScoreSet {
            pod,
            far,
            precision,
            f1,
        }
    }
}

pub fn scores(tbl: &ContingencyTable) -> ScoreSet {
    ScoreSet::from_weights(tbl.tp as f64, tbl.fn_ as f64, tbl.fp as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_estimator_has_no_errors() {
        let v = [0.0, 0.5, 3.0, 0.0, 12.0, f64::NAN];
        let t = contingency(&v, &v, 1e-4).unwrap();
        assert_eq!((t.fn_, t.fp, t.tp, t.tn), (0, 0, 3, 2));
        let s = scores(&t);
        assert_eq!((s.pod, s.far, s.precision, s.f1), (1.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn all_dry_is_degenerate() {
        let v = [0.0; 5];
        let t = contingency(&v, &v, 1e-4).unwrap();
        assert_eq!(t.tn, 5);
        let s = scores(&t);
        assert!(s.pod.is_nan() && s.far.is_nan() && s.precision.is_nan() && s.f1.is_nan());
    }

    #[test]
    fn no_colocated_pixels_is_error() {
        assert!(contingency(&[f64::NAN], &[1.0], 1e-4).is_err());
        assert!(contingency(&[], &[], 1e-4).is_err());
    }

    #[test]
    fn per_pixel_predicate_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            match rng.random_range(0..4) {
                0 => 0.0,
                1 => f64::NAN,
                2 => rng.random_range(0.0..2e-4),
                _ => rng.random_range(0.0..20.0),
            }
        };
        let est: Vec<f64> = (0..5000).map(|_| draw(&mut rng)).collect();
        let rf: Vec<f64> = (0..5000).map(|_| draw(&mut rng)).collect();
        let t = contingency(&est, &rf, 1e-4).unwrap();
        let mut c = [0u64; 4];
        for i in 0..5000 {
            if est[i].is_nan() || rf[i].is_nan() {
                continue;
            }
            let idx = match (rf[i] > 1e-4, est[i] > 1e-4) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            c[idx] += 1;
        }
        assert_eq!([t.tp, t.fn_, t.fp, t.tn], c);
    }

    #[test]
    fn threshold_is_strict() {
        let t = contingency(&[1e-4], &[2e-4], 1e-4).unwrap();
        assert_eq!(t.fn_, 1);
    }

    proptest! {
        #[test]
        fn percentages_sum_and_reproduce_scores(tp in 0u64..10_000, fn_ in 0u64..10_000, fp in 0u64..10_000, tn in 1u64..100_000) {
            let t = ContingencyTable { tp, fn_, fp, tn };
            let p = t.percentages();
            prop_assert!((p.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
            let a = scores(&t);
            let b = ScoreSet::from_weights(p[0], p[1], p[2]);
            for (x, y) in [(a.pod, b.pod), (a.far, b.far), (a.precision, b.precision), (a.f1, b.f1)] {
                prop_assert!((x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn pod_far_invariant_under_monotone_rescaling(
            pairs in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..200),
            thr in 0.01f64..5.0,
            k in 0.2f64..4.0,
        ) {
            // x -> thr * (x / thr)^k is strictly increasing and fixes thr
            let g = |x: f64| thr * (x / thr).powf(k);
            let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let rf: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let a = scores(&contingency(&est, &rf, thr).unwrap());
            let est2: Vec<f64> = est.iter().map(|v| g(*v)).collect();
            let rf2: Vec<f64> = rf.iter().map(|v| g(*v)).collect();
            let b = scores(&contingency(&est2, &rf2, thr).unwrap());
            prop_assert!((a.pod.is_nan() && b.pod.is_nan()) || a.pod == b.pod);
            prop_assert!((a.far.is_nan() && b.far.is_nan()) || a.far == b.far);
        }
    }
}
