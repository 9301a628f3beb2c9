//! Fold partitioning and cross-fitted estimation of the four nuisance
//! regressions: treatment propensity g, outcome regression m, modifier
//! probability among treated responders b, and the joint probability r of
//! (Y=1, A=a, S=1), the latter fit as a product of three factors.
//!
//! Every prediction for a record comes from learners trained without that
//! record's fold. Each learner is isotonically calibrated on out-of-fold
//! predictions within its own training split (a nested split), then
//! clipped into `[EPS_CLIP, 1 - EPS_CLIP]`.

use rayon::prelude::*;
use std::io::{BufWriter, Write};

use crate::data::Dataset;
use crate::dgp::DgpCoefficients;
use crate::error::Error;
use crate::learners::{
    clip_probability, fit_logistic_lasso, pav, refit_at_lambda, DesignMatrix, Expansion,
    LambdaGrid, LassoConfig,
};
use crate::rng;
use crate::special::expit;
use crate::{Result, EPS_CLIP};

/// A balanced random partition of record indices into folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub j: usize,
    /// Record index -> fold id in `0..j`.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Uniformly random partition of `n` records into `j` folds whose sizes
/// differ by at most one.
pub fn make_folds(n: usize, j: usize, seed: u64) -> Result<FoldPlan> {
    if j < 2 || j > n {
        return Err(Error::TooManyFolds { j, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream_rng(rng::derive_seed(seed, rng::tag::FOLDS), 0);
    rng::shuffle(&mut r, &mut order);
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % j;
    }
    Ok(FoldPlan { j, assignment })
}

/// Fold count by sample size: 20 folds up to n=750, 10 folds up to n=5000,
/// 2 folds beyond. Matches the simulation schedule at its anchor points
/// (500 -> 20, 1000/2500 -> 10, 10000 -> 2).
pub fn fold_schedule(n: usize) -> usize {
    if n <= 750 {
        20
    } else if n <= 5000 {
        10
    } else {
        2
    }
}

/// Configuration of the nuisance learners.
#[derive(Debug, Clone)]
pub struct NuisanceConfig {
    pub lasso: LassoConfig,
    /// Folds for the penalty cross-validation inside each training split.
    pub cv_folds: usize,
    /// Nested folds for the isotonic calibration predictions.
    pub calibration_folds: usize,
    pub calibrate: bool,
    pub seed: u64,
}

impl NuisanceConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            lasso: LassoConfig::default(),
            cv_folds: 10,
            calibration_folds: 5,
            calibrate: true,
            seed,
        }
    }
}

/// Cross-fitted out-of-fold nuisance predictions, one value per record per
/// arm, all in `[EPS_CLIP, 1 - EPS_CLIP]`.
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    pub n: usize,
    pub levels: Vec<u8>,
    pub ghat: [Vec<f64>; 2],
    pub mhat: [Vec<f64>; 2],
    pub rhat: [Vec<f64>; 2],
    /// `bhat[level_index][arm][record]` for each fitted v2 level.
    pub bhat: Vec<[Vec<f64>; 2]>,
    /// P(S=1 | V1, W) factor of r, kept for diagnostics.
    pub shat: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub calibrated: bool,
}

impl NuisanceFits {
    pub fn level_index(&self, level: u8) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .ok_or(Error::MissingV2Level { level })
    }

    pub fn bhat(&self, level: u8, arm: u8) -> Result<&[f64]> {
        Ok(&self.bhat[self.level_index(level)?][arm as usize])
    }

    /// Audit export: `i,fold,a,ghat,mhat,bhat,rhat` for one v2 level.
    pub fn write_audit_csv<W: Write>(&self, level: u8, out: W) -> Result<()> {
        let li = self.level_index(level)?;
        let mut w = BufWriter::new(out);
        writeln!(w, "i,fold,a,ghat,mhat,bhat,rhat")?;
        for i in 0..self.n {
            for a in 0..2usize {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    i,
                    self.fold_of[i],
                    a,
                    self.ghat[a][i],
                    self.mhat[a][i],
                    self.bhat[li][a][i],
                    self.rhat[a][i]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The simulation-grade nuisance design: saturated interactions over the
/// binary covariates (V1, W1) with W2 entering linearly.
pub fn nuisance_design(data: &Dataset) -> Result<DesignMatrix> {
    let v11: Vec<u8> = data.records.iter().map(|r| r.v1[0]).collect();
    let v12: Vec<u8> = data.records.iter().map(|r| r.v1[1]).collect();
    let v13: Vec<u8> = data.records.iter().map(|r| r.v1[2]).collect();
    let w1: Vec<u8> = data.records.iter().map(|r| r.w1).collect();
    let w2: Vec<f64> = data.records.iter().map(|r| r.w2).collect();
    DesignMatrix::build(
        &[("v11", &v11), ("v12", &v12), ("v13", &v13), ("w1", &w1)],
        &[("w2", &w2)],
        Expansion::Saturated,
    )
}

/// Fits one nuisance factor on `train_rows` and returns calibrated, clipped
/// probabilities for `predict_rows`. Falls back to an intercept-only fit
/// when the training response is single-class.
fn fit_predict_calibrated(
    d: &DesignMatrix,
    train_rows: &[usize],
    train_y: &[f64],
    predict_rows: &[usize],
    cfg: &NuisanceConfig,
    seed: u64,
    label: &str,
) -> Result<Vec<f64>> {
    if train_rows.is_empty() {
        return Err(Error::EmptyTraining {
            what: "nuisance factor",
        });
    }
    let ones = train_y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == train_y.len() {
        log::warn!("{label}: single-class response; using intercept-only fit");
        let p = clip_probability(ones as f64 / train_y.len() as f64);
        return Ok(vec![p; predict_rows.len()]);
    }

    let fit = fit_logistic_lasso(
        d,
        train_rows,
        train_y,
        &LambdaGrid::Auto,
        cfg.cv_folds,
        rng::derive_seed(seed, rng::tag::CV),
        &cfg.lasso,
    )?;

    let map = if cfg.calibrate && train_rows.len() >= 2 * cfg.calibration_folds {
        // Nested split: out-of-fold raw predictions on the training rows,
        // then PAV of the response on them.
        let nested = crate::learners::cv_fold_assignment(
            train_rows.len(),
            cfg.calibration_folds,
            rng::derive_seed(seed, rng::tag::CALIBRATION),
        );
        let mut oof = vec![0.0; train_rows.len()];
        for f in 0..cfg.calibration_folds {
            let (mut sub_rows, mut sub_y, mut held) = (Vec::new(), Vec::new(), Vec::new());
            for (k, &row) in train_rows.iter().enumerate() {
                if nested[k] == f {
                    held.push(k);
                } else {
                    sub_rows.push(row);
                    sub_y.push(train_y[k]);
                }
            }
            if held.is_empty() {
                continue;
            }
            let sub_ones = sub_y.iter().filter(|&&v| v == 1.0).count();
            if sub_rows.is_empty() || sub_ones == 0 || sub_ones == sub_y.len() {
                let p = clip_probability(sub_ones as f64 / sub_y.len().max(1) as f64);
                for &k in &held {
                    oof[k] = p;
                }
                continue;
            }
            let coefs = refit_at_lambda(d, &sub_rows, &sub_y, fit.lambda, &fit.coefs, &cfg.lasso)?;
            for &k in &held {
                oof[k] = expit(coefs.linear_predictor(d, train_rows[k]));
            }
        }
        Some(pav(&oof, train_y)?)
    } else {
        None
    };

    Ok(predict_rows
        .iter()
        .map(|&i| {
            let raw = fit.predict_proba(d, i);
            let cal = match &map {
                Some(m) => m.apply(raw),
                None => raw,
            };
            clip_probability(cal)
        })
        .collect())
}

struct FoldOutput {
    rows: Vec<usize>,
    ghat1: Vec<f64>,
    mhat: [Vec<f64>; 2],
    bhat: Vec<[Vec<f64>; 2]>,
    r_y: [Vec<f64>; 2],
    r_a1: Vec<f64>,
    r_s: Vec<f64>,
}

/// Cross-fits all four nuisance regressions over the fold plan, for each
/// treatment arm and each requested v2 level of b.
pub fn fit_nuisances(
    data: &Dataset,
    folds: &FoldPlan,
    levels: &[u8],
    cfg: &NuisanceConfig,
) -> Result<NuisanceFits> {
    let n = data.len();
    if folds.assignment.len() != n {
        return Err(Error::InvalidParam {
            name: "folds",
            reason: format!("plan covers {} records, data has {n}", folds.assignment.len()),
        });
    }
    for &level in levels {
        if !data
            .records
            .iter()
            .any(|r| r.v2_obs() == Some(level))
        {
            return Err(Error::MissingV2Level { level });
        }
    }
    let d = nuisance_design(data)?;
    let a_col: Vec<f64> = data.records.iter().map(|r| r.a as f64).collect();
    let y_col: Vec<f64> = data.records.iter().map(|r| r.y as f64).collect();
    let s_col: Vec<f64> = data.records.iter().map(|r| r.s as f64).collect();

    let fold_results: Vec<Result<FoldOutput>> = (0..folds.j)
        .into_par_iter()
        .map(|fold| {
            let train = folds.train_rows(fold);
            let rows = folds.fold_rows(fold);
            let seed_for = |task: u64, arm: u64, level: u64| {
                rng::derive_seed(cfg.seed, (fold as u64) << 24 | task << 8 | arm << 4 | level)
            };
            let gather = |rows: &[usize], col: &[f64]| -> Vec<f64> {
                rows.iter().map(|&i| col[i]).collect()
            };

            // g: P(A=1 | V1, W) on the whole training split.
            let ghat1 = fit_predict_calibrated(
                &d,
                &train,
                &gather(&train, &a_col),
                &rows,
                cfg,
                seed_for(1, 0, 0),
                &format!("fold {fold} g"),
            )?;

            // m(a): E[Y | A=a, V1, W] on the arm's training subset.
            let mut mhat: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for a in 0..2u8 {
                let sub: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| data.records[i].a == a)
                    .collect();
                mhat[a as usize] = fit_predict_calibrated(
                    &d,
                    &sub,
                    &gather(&sub, &y_col),
                    &rows,
                    cfg,
                    seed_for(2, a as u64, 0),
                    &format!("fold {fold} m(a={a})"),
                )?;
            }

            // b(a, level): P(V2=level | Y=1, A=a, V1, W, S=1) on the
            // responders subset of trial 1.
            let mut bhat: Vec<[Vec<f64>; 2]> = Vec::with_capacity(levels.len());
            for (li, &level) in levels.iter().enumerate() {
                let mut per_arm: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for a in 0..2u8 {
                    let sub: Vec<usize> = train
                        .iter()
                        .copied()
                        .filter(|&i| {
                            let r = &data.records[i];
                            r.y == 1 && r.s == 1 && r.a == a
                        })
                        .collect();
                    if sub.is_empty() {
                        return Err(Error::EmptyBSubset { fold, arm: a });
                    }
                    let resp: Vec<f64> = sub
                        .iter()
                        .map(|&i| (data.records[i].v2_obs() == Some(level)) as u8 as f64)
                        .collect();
                    per_arm[a as usize] = fit_predict_calibrated(
                        &d,
                        &sub,
                        &resp,
                        &rows,
                        cfg,
                        seed_for(3, a as u64, li as u64),
                        &format!("fold {fold} b(a={a},v2={level})"),
                    )?;
                }
                bhat.push(per_arm);
            }

            // r(a) factor 1: P(Y=1 | A=a, S=1, V1, W).
            let mut r_y: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for a in 0..2u8 {
                let sub: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| data.records[i].s == 1 && data.records[i].a == a)
                    .collect();
                r_y[a as usize] = fit_predict_calibrated(
                    &d,
                    &sub,
                    &gather(&sub, &y_col),
                    &rows,
                    cfg,
                    seed_for(4, a as u64, 0),
                    &format!("fold {fold} r_y(a={a})"),
                )?;
            }
            // r factor 2: P(A=1 | S=1, V1, W).
            let s1: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| data.records[i].s == 1)
                .collect();
            let r_a1 = fit_predict_calibrated(
                &d,
                &s1,
                &gather(&s1, &a_col),
                &rows,
                cfg,
                seed_for(5, 0, 0),
                &format!("fold {fold} r_a"),
            )?;
            // r factor 3: P(S=1 | V1, W).
            let r_s = fit_predict_calibrated(
                &d,
                &train,
                &gather(&train, &s_col),
                &rows,
                cfg,
                seed_for(6, 0, 0),
                &format!("fold {fold} r_s"),
            )?;

            Ok(FoldOutput {
                rows,
                ghat1,
                mhat,
                bhat,
                r_y,
                r_a1,
                r_s,
            })
        })
        .collect();

    let mut fits = NuisanceFits {
        n,
        levels: levels.to_vec(),
        ghat: [vec![0.0; n], vec![0.0; n]],
        mhat: [vec![0.0; n], vec![0.0; n]],
        rhat: [vec![0.0; n], vec![0.0; n]],
        bhat: vec![[vec![0.0; n], vec![0.0; n]]; levels.len()],
        shat: vec![0.0; n],
        fold_of: folds.assignment.clone(),
        calibrated: cfg.calibrate,
    };
    for out in fold_results {
        let out = out?;
        for (k, &i) in out.rows.iter().enumerate() {
            let g1 = out.ghat1[k];
            fits.ghat[1][i] = g1;
            fits.ghat[0][i] = 1.0 - g1;
            for a in 0..2 {
                fits.mhat[a][i] = out.mhat[a][k];
                let pa = if a == 1 { out.r_a1[k] } else { 1.0 - out.r_a1[k] };
                fits.rhat[a][i] = clip_probability(out.r_y[a][k] * pa * out.r_s[k]);
            }
            for (li, per_arm) in out.bhat.iter().enumerate() {
                for a in 0..2 {
                    fits.bhat[li][a][i] = per_arm[a][k];
                }
            }
            fits.shat[i] = out.r_s[k];
        }
    }
    debug_assert!(fits
        .ghat
        .iter()
        .chain(fits.mhat.iter())
        .chain(fits.rhat.iter())
        .all(|v| v.iter().all(|&p| (EPS_CLIP..=1.0 - EPS_CLIP).contains(&p))));
    Ok(fits)
}

/// Nuisance values computed in closed form from the generating mechanism,
/// clipped like the estimated ones. The truth for this mechanism stays
/// inside the clip bounds, so clipping is a no-op in practice.
pub fn oracle_nuisances(coef: &DgpCoefficients, data: &Dataset, levels: &[u8]) -> NuisanceFits {
    let n = data.len();
    let mut fits = NuisanceFits {
        n,
        levels: levels.to_vec(),
        ghat: [vec![0.0; n], vec![0.0; n]],
        mhat: [vec![0.0; n], vec![0.0; n]],
        rhat: [vec![0.0; n], vec![0.0; n]],
        bhat: vec![[vec![0.0; n], vec![0.0; n]]; levels.len()],
        shat: vec![0.0; n],
        fold_of: vec![0; n],
        calibrated: false,
    };
    for (i, r) in data.records.iter().enumerate() {
        for a in 0..2u8 {
            fits.ghat[a as usize][i] = clip_probability(coef.true_g(a, r.v1, r.w1, r.w2));
            fits.mhat[a as usize][i] = clip_probability(coef.true_m(a, r.v1, r.w1, r.w2));
            fits.rhat[a as usize][i] = clip_probability(coef.true_r(a, r.v1, r.w1, r.w2));
            for (li, &level) in levels.iter().enumerate() {
                fits.bhat[li][a as usize][i] =
                    clip_probability(coef.true_b(a, level, r.v1, r.w1, r.w2));
            }
        }
        fits.shat[i] = clip_probability(coef.p_s(r.v1, r.w1, r.w2));
    }
    fits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{sample_dataset, DgpParams};

    #[test]
    fn folds_balance_exactly() {
        let plan = make_folds(10, 2, 1).unwrap();
        assert_eq!(plan.fold_rows(0).len(), 5);
        assert_eq!(plan.fold_rows(1).len(), 5);
        let plan = make_folds(11, 2, 1).unwrap();
        let mut sizes = [plan.fold_rows(0).len(), plan.fold_rows(1).len()];
        sizes.sort();
        assert_eq!(sizes, [5, 6]);
    }

    #[test]
    fn folds_deterministic_and_partitioning() {
        let a = make_folds(100, 7, 9).unwrap();
        let b = make_folds(100, 7, 9).unwrap();
        assert_eq!(a.assignment, b.assignment);
        let total: usize = (0..7).map(|f| a.fold_rows(f).len()).sum();
        assert_eq!(total, 100);
        assert!(make_folds(5, 6, 0).is_err());
    }

    #[test]
    fn schedule_anchor_points() {
        assert_eq!(fold_schedule(500), 20);
        assert_eq!(fold_schedule(1000), 10);
        assert_eq!(fold_schedule(2500), 10);
        assert_eq!(fold_schedule(10_000), 2);
    }

    #[test]
    fn known_randomization_recovered() {
        // A assigned Bernoulli(0.5) independent of everything: rewrite the
        // sampled treatment as a fresh fair coin and check ghat ~ 0.5.
        let mut ds = sample_dataset(&DgpParams::new(20_000, 33)).unwrap();
        let mut r = crate::rng::stream_rng(77, 0);
        for rec in ds.records.iter_mut() {
            rec.a = (crate::rng::uniform(&mut r) < 0.5) as u8;
            rec.s = 1; // keep the b-subset nonempty for both arms
            rec.v2_observed = true;
        }
        let folds = make_folds(ds.len(), 2, 5).unwrap();
        let fits = fit_nuisances(&ds, &folds, &[1], &NuisanceConfig::new(13)).unwrap();
        for i in 0..ds.len() {
            assert!(
                (fits.ghat[1][i] - 0.5).abs() < 0.03,
                "ghat {} at {i}",
                fits.ghat[1][i]
            );
        }
    }

    #[test]
    fn joint_probability_bounded_by_trial_factor() {
        let ds = sample_dataset(&DgpParams::new(4000, 8)).unwrap();
        let folds = make_folds(ds.len(), 5, 2).unwrap();
        let fits = fit_nuisances(&ds, &folds, &[0, 1], &NuisanceConfig::new(3)).unwrap();
        for i in 0..ds.len() {
            for a in 0..2 {
                assert!(fits.rhat[a][i] <= fits.shat[i] + 1e-12);
                assert!((EPS_CLIP..=1.0 - EPS_CLIP).contains(&fits.rhat[a][i]));
            }
        }
    }

    #[test]
    fn out_of_fold_discipline() {
        // Flipping one record's outcome must not move any prediction inside
        // that record's own fold, and must move some prediction elsewhere.
        let mut ds = sample_dataset(&DgpParams::new(240, 15)).unwrap();
        for rec in ds.records.iter_mut() {
            rec.s = 1;
            rec.v2_observed = true;
            rec.a = (rec.w2 > 0.5) as u8; // both arms populated in S=1
        }
        let folds = make_folds(ds.len(), 3, 4).unwrap();
        let cfg = NuisanceConfig::new(6);
        let base = fit_nuisances(&ds, &folds, &[1], &cfg).unwrap();
        let victim = 17usize;
        let vf = folds.assignment[victim];
        ds.records[victim].y ^= 1;
        let flipped = fit_nuisances(&ds, &folds, &[1], &cfg).unwrap();
        let mut any_changed = false;
        for i in 0..ds.len() {
            for a in 0..2 {
                let same = base.mhat[a][i] == flipped.mhat[a][i];
                if folds.assignment[i] == vf && i != victim {
                    assert!(same, "prediction moved inside the victim's fold at {i}");
                }
                any_changed |= !same;
            }
        }
        assert!(any_changed, "flip had no effect anywhere");
    }

    #[test]
    fn unknown_level_rejected() {
        let ds = sample_dataset(&DgpParams::new(400, 2)).unwrap();
        let folds = make_folds(ds.len(), 2, 0).unwrap();
        let err = fit_nuisances(&ds, &folds, &[7], &NuisanceConfig::new(0));
        assert!(matches!(err, Err(Error::MissingV2Level { level: 7 })));
    }

    #[test]
    fn oracle_nuisances_match_closed_form() {
        let params = DgpParams::new(50, 3);
        let ds = sample_dataset(&params).unwrap();
        let fits = oracle_nuisances(&params.coef, &ds, &[0, 1]);
        let r0 = &ds.records[0];
        assert_eq!(
            fits.mhat[1][0],
            clip_probability(params.coef.true_m(1, r0.v1, r0.w1, r0.w2))
        );
        let b0 = fits.bhat[0][1][0];
        let b1 = fits.bhat[1][1][0];
        assert!((b0 + b1 - 1.0).abs() < 1e-9);
    }
}
