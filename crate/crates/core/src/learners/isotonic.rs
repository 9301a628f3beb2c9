//! Pool-adjacent-violators regression and the calibration map built on it.

use super::{CalibratedLearner, FittedLearner};
use crate::error::Error;
use crate::Result;

/// A non-decreasing step function from raw predictions to fitted values.
///
/// Levels are the distinct raw prediction values seen at fit time; applying
/// the map returns the fitted value of the greatest level `<= x` (queries
/// below the first level get the first value).
#[derive(Debug, Clone, Default)]
pub struct IsotonicMap {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicMap {
    pub fn apply(&self, x: f64) -> f64 {
        if self.levels.is_empty() {
            return x;
        }
        // partition_point: first index with level > x
        let idx = self.levels.partition_point(|&l| l <= x);
        self.values[idx.saturating_sub(1)]
    }

    /// An identity map (no calibration).
    pub fn identity() -> Self {
        Self::default()
    }
}

/// Weighted least-squares isotonic regression of `y` on `x`.
///
/// Ties in `x` are pooled before the PAV pass, so the result does not
/// depend on the ordering of tied records. Returns the step map over the
/// distinct levels of `x`.
pub fn pav(x: &[f64], y: &[f64]) -> Result<IsotonicMap> {
    if x.len() != y.len() {
        return Err(Error::InvalidParam {
            name: "rawPredictions",
            reason: format!("length mismatch: {} raw vs {} outcomes", x.len(), y.len()),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParam {
            name: "rawPredictions",
            reason: "need at least 2 points".into(),
        });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));

    // Group tied raw values.
    let mut levels: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for &i in &order {
        if levels.last() == Some(&x[i]) {
            *sums.last_mut().unwrap() += y[i];
            *counts.last_mut().unwrap() += 1.0;
        } else {
            levels.push(x[i]);
            sums.push(y[i]);
            counts.push(1.0);
        }
    }

    // PAV over the grouped levels: merge backwards while means decrease.
    struct Block {
        sum: f64,
        count: f64,
        last_level: usize,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(levels.len());
    for i in 0..levels.len() {
        blocks.push(Block {
            sum: sums[i],
            count: counts[i],
            last_level: i,
        });
        while blocks.len() >= 2 {
            let m = blocks.len();
            let mean_last = blocks[m - 1].sum / blocks[m - 1].count;
            let mean_prev = blocks[m - 2].sum / blocks[m - 2].count;
            if mean_prev <= mean_last {
                break;
            }
            let top = blocks.pop().unwrap();
            let prev = blocks.last_mut().unwrap();
            prev.sum += top.sum;
            prev.count += top.count;
            prev.last_level = top.last_level;
        }
    }

    let mut values = vec![0.0; levels.len()];
    let mut start = 0;
    for b in &blocks {
        let mean = b.sum / b.count;
        for v in values.iter_mut().take(b.last_level + 1).skip(start) {
            *v = mean;
        }
        start = b.last_level + 1;
    }
    Ok(IsotonicMap { levels, values })
}

/// Fits the calibration map by PAV of `outcomes` on `raw_predictions` and
/// attaches it to `base`. Calibrated predictions are clipped downstream.
pub fn isotonic_calibrate(
    raw_predictions: &[f64],
    outcomes: &[f64],
    base: FittedLearner,
) -> Result<CalibratedLearner> {
    let map = pav(raw_predictions, outcomes)?;
    Ok(CalibratedLearner { base, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EPS_CLIP;

    #[test]
    fn identity_on_already_monotone_frequencies() {
        // Raw values equal to the outcome frequency at each level: PAV is a
        // fixed point and the map is the identity on the observed levels.
        let raw = [0.2, 0.2, 0.2, 0.2, 0.2, 0.6, 0.6, 0.6, 0.6, 0.6];
        let y = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let map = pav(&raw, &y).unwrap();
        assert_eq!(map.levels, vec![0.2, 0.6]);
        assert_eq!(map.values, vec![0.2, 0.6]);
        assert_eq!(map.apply(0.2), 0.2);
        assert_eq!(map.apply(0.6), 0.6);
    }

    #[test]
    fn anti_monotone_pools_to_single_block() {
        // Hand-run of the pooling recursion on this 5-point instance: every
        // adjacent pair violates, so all points pool into one block whose
        // value is the overall mean, 0.4.
        let raw = [0.1, 0.2, 0.3, 0.4, 0.5];
        let y = [1.0, 1.0, 0.0, 0.0, 0.0];
        let map = pav(&raw, &y).unwrap();
        for &v in &map.values {
            assert!((v - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_outcomes_floor_at_clip_after_calibration() {
        let raw = [0.3, 0.5, 0.7];
        let y = [0.0, 0.0, 0.0];
        let cal = isotonic_calibrate(&raw, &y, FittedLearner::Constant(0.5)).unwrap();
        // The map itself is constant 0; clipping applies at prediction time.
        let design = super::super::DesignMatrix::build(&[], &[], super::super::Expansion::MainEffects)
            .unwrap();
        let _ = design;
        assert_eq!(cal.map.apply(0.4), 0.0);
        let p = crate::learners::clip_probability(cal.map.apply(cal.base.predict(
            &super::super::DesignMatrix::build(&[("z", &[0u8])], &[], super::super::Expansion::MainEffects).unwrap(),
            0,
        )));
        assert_eq!(p, EPS_CLIP);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(pav(&[0.1, 0.2], &[1.0]).is_err());
    }

    #[test]
    fn map_is_non_decreasing() {
        let raw = [0.9, 0.1, 0.4, 0.4, 0.7, 0.2, 0.95, 0.5];
        let y = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let map = pav(&raw, &y).unwrap();
        for w in map.values.windows(2) {
            assert!(w[0] <= w[1] + 1e-15);
        }
        // Applying preserves order.
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=20 {
            let v = map.apply(i as f64 / 20.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
