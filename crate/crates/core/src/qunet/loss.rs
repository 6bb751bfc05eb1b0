//! Pinball (quantile) loss summed over levels, each level averaged over the
//! non-missing pixels.

use super::{layers::Real, QuantileLevels};
use crate::error::{Error, Result};

fn check<T: Real>(pred: &[T], target: &[T], levels: &QuantileLevels) -> Result<usize> {
    if pred.len() != levels.len() * target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} levels x {} pixels",
            pred.len(),
            levels.len(),
            target.len()
        )));
    }
    let n = target.iter().filter(|y| !y.is_nan()).count();
    if n == 0 {
        return Err(Error::Empty("non-missing target pixels"));
    }
    Ok(n)
}

/// Loss contribution of `pred` (levels x pixels) divided by `norm`; when
/// `grad` is given, d/d(pred) of that quantity is added to it.
pub(crate) fn pinball_accumulate<T: Real>(
    pred: &[T],
    target: &[T],
    levels: &QuantileLevels,
    norm: f64,
    mut grad: Option<&mut [T]>,
) -> f64 {
    let n = target.len();
    let mut total = 0.0;
    for (j, &q) in levels.as_slice().iter().enumerate() {
        let plane = &pred[j * n..(j + 1) * n];
        let (below, above) = (T::lit(-q / norm), T::lit((1.0 - q) / norm));
        let mut sum = 0.0;
        for (i, (&p, &y)) in plane.iter().zip(target).enumerate() {
            if y.is_nan() {
                continue;
            }
            let r = (y - p).as_f64();
            let ge = r >= 0.0;
            sum += if ge { q * r } else { (q - 1.0) * r };
            if let Some(g) = grad.as_deref_mut() {
                g[j * n + i] += if ge { below } else { above };
            }
        }
        total += sum / norm;
    }
    total
}

/// `sum_j mean_i L_qj(y_i, pred_ji)` over pixels with a finite target.
/// `pred` is level-major: `pred[j * n + i]`.
pub fn pinball_loss<T: Real>(pred: &[T], target: &[T], levels: &QuantileLevels) -> Result<f64> {
    let n = check(pred, target, levels)?;
    Ok(pinball_accumulate(pred, target, levels, n as f64, None))
}

/// d(pinball_loss)/d(pred); zero for missing targets. At `y == pred` the
/// `y - pred >= 0` branch applies.
pub fn pinball_grad<T: Real>(pred: &[T], target: &[T], levels: &QuantileLevels) -> Result<Vec<T>> {
    let n = check(pred, target, levels)?;
    let mut g = vec![T::zero(); pred.len()];
    pinball_accumulate(pred, target, levels, n as f64, Some(&mut g));
    Ok(g)
}
