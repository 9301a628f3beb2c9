//! Base regression learners for the nuisance and second-stage fits:
//! L1-penalized logistic regression with a cross-validated penalty path,
//! L1-penalized linear regression, saturated cell-mean regression, and
//! isotonic (pool-adjacent-violators) probability calibration.

mod cell_means;
mod design;
mod isotonic;
mod linear_lasso;
mod logistic_lasso;

pub use cell_means::{fit_cell_means, CellMeansFit};
pub use design::{DesignMatrix, DesignSpec, Expansion};
pub use isotonic::{isotonic_calibrate, pav, IsotonicMap};
pub use linear_lasso::{fit_linear_lasso, LinearLassoFit};
pub use logistic_lasso::{
    fit_logistic_lasso, fit_logistic_lasso_with_folds, fit_logistic_lasso_with_sweep_trace,
    refit_at_lambda, Coefs, LambdaGrid,
    LassoConfig, LogisticLassoFit,
};
pub(crate) use logistic_lasso::cv_fold_assignment;

use crate::error::Error;
use crate::special::expit;
use crate::{Result, EPS_CLIP};

/// A fitted base learner. Probability learners return values in `[0, 1]`;
/// the others return unconstrained reals.
#[derive(Debug, Clone)]
pub enum FittedLearner {
    LogisticLasso(LogisticLassoFit),
    LinearLasso(LinearLassoFit),
    CellMeans(CellMeansFit),
    /// Intercept-only fallback used when a response is degenerate.
    Constant(f64),
}

impl FittedLearner {
    /// Prediction for row `i` of `design`.
    pub fn predict(&self, design: &DesignMatrix, i: usize) -> f64 {
        match self {
            Self::LogisticLasso(f) => expit(f.coefs.linear_predictor(design, i)),
            Self::LinearLasso(f) => f.predict(design, i),
            Self::CellMeans(f) => f.predict(design.pattern[i]),
            Self::Constant(c) => *c,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LogisticLasso(_) => "logistic_lasso",
            Self::LinearLasso(_) => "linear_lasso",
            Self::CellMeans(_) => "cell_means",
            Self::Constant(_) => "constant",
        }
    }
}

/// A base learner composed with an isotonic calibration map. Predictions
/// are clipped into `[EPS_CLIP, 1 - EPS_CLIP]`.
#[derive(Debug, Clone)]
pub struct CalibratedLearner {
    pub base: FittedLearner,
    pub map: IsotonicMap,
}

impl CalibratedLearner {
    pub fn predict(&self, design: &DesignMatrix, i: usize) -> f64 {
        clip_probability(self.map.apply(self.base.predict(design, i)))
    }
}

/// Clips a probability into the positivity-safe interval.
pub fn clip_probability(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

const SNAPSHOT_VERSION: &str = "odtr.learner.v1";

/// Serializes a fitted learner to the versioned plain-text snapshot format.
pub fn learner_snapshot(l: &FittedLearner) -> String {
    let mut out = format!("{SNAPSHOT_VERSION} {}\n", l.kind());
    match l {
        FittedLearner::LogisticLasso(f) => {
            out.push_str(&format!("lambda {}\n", f.lambda));
            out.push_str(&coefs_lines(&f.coefs));
        }
        FittedLearner::LinearLasso(f) => {
            out.push_str(&format!("lambda {}\n", f.lambda));
            out.push_str(&coefs_lines(&f.coefs));
        }
        FittedLearner::CellMeans(f) => {
            out.push_str(&format!("global_mean {}\n", f.global_mean));
            for (pat, mean) in f.sorted_cells() {
                out.push_str(&format!("cell {pat} {mean}\n"));
            }
        }
        FittedLearner::Constant(c) => out.push_str(&format!("value {c}\n")),
    }
    out
}

fn coefs_lines(c: &Coefs) -> String {
    let mut s = format!("intercept {}\n", c.intercept);
    for (i, b) in c.binary.iter().enumerate() {
        s.push_str(&format!("binary {i} {b}\n"));
    }
    for (i, b) in c.cont.iter().enumerate() {
        s.push_str(&format!("cont {i} {b}\n"));
    }
    s
}

/// Parses a snapshot produced by [`learner_snapshot`].
pub fn learner_from_snapshot(text: &str) -> Result<FittedLearner> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let mut parts = header.split_whitespace();
    if parts.next() != Some(SNAPSHOT_VERSION) {
        return Err(Error::InvalidParam {
            name: "snapshot",
            reason: format!("unsupported snapshot header `{header}`"),
        });
    }
    let kind = parts.next().unwrap_or_default().to_string();
    let mut lambda = 0.0;
    let mut coefs = Coefs::default();
    let mut global_mean = 0.0;
    let mut cells = Vec::new();
    let mut constant = 0.0;
    for line in lines {
        let mut f = line.split_whitespace();
        match f.next() {
            Some("lambda") => lambda = parse_f64(f.next())?,
            Some("intercept") => coefs.intercept = parse_f64(f.next())?,
            Some("binary") => {
                let _idx = f.next();
                coefs.binary.push(parse_f64(f.next())?);
            }
            Some("cont") => {
                let _idx = f.next();
                coefs.cont.push(parse_f64(f.next())?);
            }
            Some("global_mean") => global_mean = parse_f64(f.next())?,
            Some("cell") => {
                let pat: u32 = f.next().unwrap_or_default().parse().map_err(|_| bad(line))?;
                cells.push((pat, parse_f64(f.next())?));
            }
            Some("value") => constant = parse_f64(f.next())?,
            None => {}
            Some(other) => {
                return Err(Error::InvalidParam {
                    name: "snapshot",
                    reason: format!("unknown field `{other}`"),
                })
            }
        }
    }
    match kind.as_str() {
        "logistic_lasso" => Ok(FittedLearner::LogisticLasso(LogisticLassoFit {
            coefs,
            lambda,
            lambda_grid: Vec::new(),
            cv_nll: Vec::new(),
        })),
        "linear_lasso" => Ok(FittedLearner::LinearLasso(LinearLassoFit { coefs, lambda })),
        "cell_means" => Ok(FittedLearner::CellMeans(CellMeansFit::from_parts(
            cells,
            global_mean,
        ))),
        "constant" => Ok(FittedLearner::Constant(constant)),
        other => Err(Error::InvalidParam {
            name: "snapshot",
            reason: format!("unknown learner kind `{other}`"),
        }),
    }
}

fn parse_f64(field: Option<&str>) -> Result<f64> {
    field
        .and_then(|s| s.parse().ok())
        .ok_or(Error::InvalidParam {
            name: "snapshot",
            reason: "missing or malformed numeric field".into(),
        })
}

fn bad(line: &str) -> Error {
    Error::InvalidParam {
        name: "snapshot",
        reason: format!("malformed line `{line}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips_constant_and_cells() {
        let c = FittedLearner::Constant(0.375);
        let back = learner_from_snapshot(&learner_snapshot(&c)).unwrap();
        match back {
            FittedLearner::Constant(v) => assert_eq!(v, 0.375),
            _ => panic!("wrong kind"),
        }

        let cm = fit_cell_means(&[0, 0, 1], &[1.0, 3.0, 5.0]).unwrap();
        let snap = learner_snapshot(&FittedLearner::CellMeans(cm.clone()));
        let back = learner_from_snapshot(&snap).unwrap();
        match back {
            FittedLearner::CellMeans(f) => {
                assert_eq!(f.predict(0), 2.0);
                assert_eq!(f.predict(1), 5.0);
                assert_eq!(f.predict(7), 3.0);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn clip_bounds_probabilities() {
        assert_eq!(clip_probability(0.0), EPS_CLIP);
        assert_eq!(clip_probability(1.0), 1.0 - EPS_CLIP);
        assert_eq!(clip_probability(0.5), 0.5);
    }
}
