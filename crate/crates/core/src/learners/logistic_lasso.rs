//! L1-penalized logistic regression fit along a warm-started penalty path,
//! with the penalty chosen by cross-validated negative log-likelihood.
//!
//! Coordinate descent runs on per-pattern aggregates: because every binary
//! column is a subset indicator of the base pattern, the inner loop only
//! touches one accumulator per pattern instead of one per row. Each sweep
//! reweights the quadratic approximation, solves it by coordinate descent
//! over a working set, and takes the step under a step-halving guard, so
//! the penalized objective is non-increasing across accepted sweeps.
//!
//! Grid points before the selected penalty run under a bounded sweep
//! budget; the selected penalty is refit to full precision.

use super::design::DesignMatrix;
use crate::error::Error;
use crate::rng;
use crate::special::{expit, log1p_exp, logit};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct LassoConfig {
    /// Points on the automatic penalty grid.
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of the data-driven maximum.
    pub lambda_min_ratio: f64,
    /// Folds for the penalty cross-validation.
    pub cv_folds: usize,
    /// Convergence threshold on the largest raw coefficient change per
    /// sweep.
    pub tol: f64,
    /// Convergence threshold on the largest curvature-weighted squared
    /// change, `max_j H_j * delta_j^2 / n`. Ill-conditioned directions only
    /// need accuracy in proportion to how much they move the fit; either
    /// threshold ends the sweep loop.
    pub tol_curvature: f64,
    /// Sweep budget for the full-precision fit at the selected penalty.
    pub max_sweeps: usize,
    /// Sweep budget per intermediate path point.
    pub max_sweeps_path: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            lambda_min_ratio: 1e-4,
            cv_folds: 10,
            tol: 1e-7,
            tol_curvature: 1e-10,
            max_sweeps: 10_000,
            max_sweeps_path: 50,
        }
    }
}

/// Penalty grid: derived from the data or supplied explicitly.
#[derive(Debug, Clone)]
pub enum LambdaGrid {
    Auto,
    Explicit(Vec<f64>),
}

/// Coefficients aligned with a [`DesignMatrix`]'s columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Coefs {
    pub intercept: f64,
    pub binary: Vec<f64>,
    pub cont: Vec<f64>,
}

impl Coefs {
    fn zeros(d: &DesignMatrix) -> Self {
        Self {
            intercept: 0.0,
            binary: vec![0.0; d.masks.len()],
            cont: vec![0.0; d.cont.len()],
        }
    }

    pub fn linear_predictor(&self, d: &DesignMatrix, i: usize) -> f64 {
        let pat = d.pattern[i];
        let mut lp = self.intercept;
        for (j, &m) in d.masks.iter().enumerate() {
            if pat & m == m {
                lp += self.binary[j];
            }
        }
        for (g, col) in self.cont.iter().zip(d.cont.iter()) {
            lp += g * col[i];
        }
        lp
    }

    /// Per-pattern sum of the intercept and the active binary terms.
    pub fn theta_table(&self, d: &DesignMatrix) -> Vec<f64> {
        let mut theta = vec![self.intercept; d.n_patterns()];
        for (j, &m) in d.masks.iter().enumerate() {
            let b = self.binary[j];
            if b != 0.0 {
                for (c, th) in theta.iter_mut().enumerate() {
                    if c as u32 & m == m {
                        *th += b;
                    }
                }
            }
        }
        theta
    }

    fn l1(&self) -> f64 {
        self.binary.iter().map(|b| b.abs()).sum::<f64>()
            + self.cont.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn blend(from: &Self, to: &Self, t: f64) -> Self {
        Self {
            intercept: from.intercept + t * (to.intercept - from.intercept),
            binary: from
                .binary
                .iter()
                .zip(&to.binary)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
            cont: from
                .cont
                .iter()
                .zip(&to.cont)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        }
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = (self.intercept - other.intercept).abs();
        for (a, b) in self.binary.iter().zip(&other.binary) {
            m = m.max((a - b).abs());
        }
        for (a, b) in self.cont.iter().zip(&other.cont) {
            m = m.max((a - b).abs());
        }
        m
    }
}

/// The fitted model at the cross-validated penalty.
#[derive(Debug, Clone)]
pub struct LogisticLassoFit {
    pub coefs: Coefs,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    /// Total held-out negative log-likelihood per grid value.
    pub cv_nll: Vec<f64>,
}

impl LogisticLassoFit {
    pub fn predict_proba(&self, d: &DesignMatrix, i: usize) -> f64 {
        expit(self.coefs.linear_predictor(d, i))
    }
}

const WEIGHT_FLOOR: f64 = 1e-6;

/// Gathered working copy of the training rows plus sweep scratch.
struct Work {
    n: usize,
    ncell: usize,
    pat: Vec<u32>,
    cont: Vec<Vec<f64>>,
    y: Vec<f64>,
    lp: Vec<f64>,
    lp_prev: Vec<f64>,
    // per-cell aggregates of the current quadratic approximation
    w_sum: Vec<f64>,
    q_sum: Vec<f64>,
    mw: Vec<Vec<f64>>,
    rx: Vec<Vec<f64>>,
    mw2: Vec<Vec<f64>>,
    // inner-loop state
    q_cur: Vec<f64>,
    dtheta: Vec<f64>,
    h_binary: Vec<f64>,
    h_cont: Vec<f64>,
    workset_bin: Vec<usize>,
    /// NLL at the current `lp`, kept in sync by `fused_pass`.
    nll_cur: f64,
    aggregates_fresh: bool,
}

impl Work {
    fn gather(d: &DesignMatrix, rows: &[usize], y: &[f64]) -> Self {
        let n = rows.len();
        let ncell = d.n_patterns();
        let nc = d.cont.len();
        Self {
            n,
            ncell,
            pat: rows.iter().map(|&i| d.pattern[i]).collect(),
            cont: d
                .cont
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            y: y.to_vec(),
            lp: vec![0.0; n],
            lp_prev: vec![0.0; n],
            w_sum: vec![0.0; ncell],
            q_sum: vec![0.0; ncell],
            mw: vec![vec![0.0; ncell]; nc],
            rx: vec![vec![0.0; ncell]; nc],
            mw2: vec![vec![0.0; ncell]; nc * nc],
            q_cur: vec![0.0; ncell],
            dtheta: vec![0.0; ncell],
            h_binary: vec![0.0; d.masks.len()],
            h_cont: vec![0.0; nc],
            workset_bin: Vec::with_capacity(d.masks.len()),
            nll_cur: 0.0,
            aggregates_fresh: false,
        }
    }

    fn mean_response(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n as f64
    }

    fn nll_of(&self, lp: &[f64]) -> f64 {
        lp.iter()
            .zip(&self.y)
            .map(|(&l, &y)| log1p_exp(l) - y * l)
            .sum()
    }

    /// One pass over the rows: refreshes the quadratic aggregates at the
    /// current `lp` and returns its NLL. The shared `exp(-|lp|)` serves
    /// both the likelihood and the weights.
    fn fused_pass(&mut self) -> f64 {
        let nc = self.cont.len();
        self.w_sum.fill(0.0);
        self.q_sum.fill(0.0);
        for v in self
            .mw
            .iter_mut()
            .chain(self.rx.iter_mut())
            .chain(self.mw2.iter_mut())
        {
            v.fill(0.0);
        }
        let mut nll = 0.0;
        for i in 0..self.n {
            let l = self.lp[i];
            let e = (-l.abs()).exp();
            let denom = 1.0 + e;
            // expit(l) via the stable branch; log1p_exp(l) from the same e.
            let p = if l >= 0.0 { 1.0 / denom } else { e / denom };
            nll += l.max(0.0) + e.ln_1p() - self.y[i] * l;
            let w = (p * (1.0 - p)).max(WEIGHT_FLOOR);
            let resid = self.y[i] - p;
            let c = self.pat[i] as usize;
            self.w_sum[c] += w;
            self.q_sum[c] += resid;
            for t in 0..nc {
                let x = self.cont[t][i];
                self.mw[t][c] += w * x;
                self.rx[t][c] += x * resid;
                for s in t..nc {
                    self.mw2[t * nc + s][c] += w * x * self.cont[s][i];
                }
            }
        }
        self.nll_cur = nll;
        self.aggregates_fresh = true;
        nll
    }

    fn set_lp(&mut self, d: &DesignMatrix, coefs: &Coefs) {
        let theta = coefs.theta_table(d);
        for i in 0..self.n {
            let mut lp = theta[self.pat[i] as usize];
            for (g, col) in coefs.cont.iter().zip(self.cont.iter()) {
                lp += g * col[i];
            }
            self.lp[i] = lp;
        }
        self.aggregates_fresh = false;
    }

    /// Data-driven largest useful penalty: the max absolute score of any
    /// slope at the intercept-only model, divided by n, plus rounding
    /// headroom so the zero-slope guarantee at `lambda_max` is exact.
    fn lambda_max(&mut self, d: &DesignMatrix) -> f64 {
        let ybar = self.mean_response();
        self.q_sum.fill(0.0);
        for t in self.rx.iter_mut() {
            t.fill(0.0);
        }
        for i in 0..self.n {
            let r = self.y[i] - ybar;
            let c = self.pat[i] as usize;
            self.q_sum[c] += r;
            for (t, col) in self.cont.iter().enumerate() {
                self.rx[t][c] += col[i] * r;
            }
        }
        let mut best = 0.0f64;
        for &m in &d.masks {
            let score: f64 = (0..self.ncell)
                .filter(|&c| c as u32 & m == m)
                .map(|c| self.q_sum[c])
                .sum();
            best = best.max(score.abs());
        }
        for t in 0..self.cont.len() {
            let score: f64 = self.rx[t].iter().sum();
            best = best.max(score.abs());
        }
        self.aggregates_fresh = false;
        (best / self.n as f64).max(1e-10) * (1.0 + 1e-10)
    }

    /// Coordinate-descent solve of the current quadratic model. Pass 1
    /// cycles every coordinate (doubling as the KKT screen); later passes
    /// cycle the working set, with a full pass re-run whenever the working
    /// set converges, until no coordinate moves.
    fn solve_quadratic(&mut self, d: &DesignMatrix, coefs: &mut Coefs, lambda_n: f64, cfg: &LassoConfig) {
        let nc = self.cont.len();
        let inner_tol = (cfg.tol * 0.1).max(1e-12);
        self.q_cur.copy_from_slice(&self.q_sum);
        self.dtheta.fill(0.0);
        let mut dgamma = vec![0.0; nc];
        self.workset_bin.clear();
        let mut full_pass = true;
        for _pass in 0..100 {
            let mut max_d = 0.0f64;
            let mut max_w = 0.0f64;

            // intercept (unpenalized)
            let num: f64 = self.q_cur.iter().sum();
            let hh: f64 = self.w_sum.iter().sum();
            if hh > 0.0 {
                let delta = num / hh;
                if delta != 0.0 {
                    coefs.intercept += delta;
                    for c in 0..self.ncell {
                        self.q_cur[c] -= delta * self.w_sum[c];
                        self.dtheta[c] += delta;
                    }
                    max_d = max_d.max(delta.abs());
                    max_w = max_w.max(delta * delta * hh / self.n as f64);
                }
            }

            // binary slopes
            let mut next_workset = Vec::new();
            let candidates: Box<dyn Iterator<Item = usize>> = if full_pass {
                Box::new(0..d.masks.len())
            } else {
                Box::new(self.workset_bin.clone().into_iter())
            };
            for j in candidates {
                let m = d.masks[j];
                let mut num = 0.0;
                let mut hj = 0.0;
                for c in 0..self.ncell {
                    if c as u32 & m == m {
                        num += self.q_cur[c];
                        hj += self.w_sum[c];
                    }
                }
                self.h_binary[j] = hj;
                if hj <= 1e-12 {
                    coefs.binary[j] = 0.0;
                    continue;
                }
                let old = coefs.binary[j];
                let new = soft(num + old * hj, lambda_n) / hj;
                let delta = new - old;
                if delta != 0.0 {
                    coefs.binary[j] = new;
                    for c in 0..self.ncell {
                        if c as u32 & m == m {
                            self.q_cur[c] -= delta * self.w_sum[c];
                            self.dtheta[c] += delta;
                        }
                    }
                    max_d = max_d.max(delta.abs());
                    max_w = max_w.max(delta * delta * hj / self.n as f64);
                }
                if new != 0.0 {
                    next_workset.push(j);
                }
            }
            if full_pass {
                self.workset_bin = next_workset;
            }

            // continuous slopes (always cycled; there are at most a few)
            for t in 0..nc {
                let mut num = 0.0;
                let mut ht = 0.0;
                for c in 0..self.ncell {
                    num += self.rx[t][c] - self.dtheta[c] * self.mw[t][c];
                    for (s, dg) in dgamma.iter().enumerate() {
                        let (a, b) = if t <= s { (t, s) } else { (s, t) };
                        num -= dg * self.mw2[a * nc + b][c];
                    }
                    ht += self.mw2[t * nc + t][c];
                }
                self.h_cont[t] = ht;
                if ht <= 1e-12 {
                    coefs.cont[t] = 0.0;
                    continue;
                }
                let old = coefs.cont[t];
                let new = soft(num + old * ht, lambda_n) / ht;
                let delta = new - old;
                if delta != 0.0 {
                    coefs.cont[t] = new;
                    dgamma[t] += delta;
                    for c in 0..self.ncell {
                        self.q_cur[c] -= delta * self.mw[t][c];
                    }
                    max_d = max_d.max(delta.abs());
                    max_w = max_w.max(delta * delta * ht / self.n as f64);
                }
            }

            let settled = max_d < inner_tol || max_w < cfg.tol_curvature;
            if settled {
                if full_pass {
                    break;
                }
                // Working set converged: verify the rest with a full pass.
                full_pass = true;
            } else {
                full_pass = false;
            }
        }
    }

    /// Fits one penalty value starting from `coefs`, leaving `lp` and the
    /// aggregates in sync. Returns the sweep count.
    fn fit_at_lambda(
        &mut self,
        d: &DesignMatrix,
        coefs: &mut Coefs,
        lambda: f64,
        cfg: &LassoConfig,
        sweep_budget: usize,
    ) -> Result<usize> {
        let lambda_n = lambda * self.n as f64;
        if !self.aggregates_fresh {
            self.fused_pass();
        }
        let mut f_cur = self.nll_cur + lambda_n * coefs.l1();
        let mut last_decrease = f64::INFINITY;
        let mut stalls = 0;
        for sweep in 1..=sweep_budget {
            let start = coefs.clone();
            self.lp_prev.copy_from_slice(&self.lp);
            self.solve_quadratic(d, coefs, lambda_n, cfg);
            self.set_lp(d, coefs);
            let mut nll_new = self.fused_pass();
            let mut f_new = nll_new + lambda_n * coefs.l1();
            if f_new > f_cur + 1e-10 {
                // Step increased the true objective: halve toward the
                // sweep start until it does not.
                let mut t = 1.0;
                loop {
                    t *= 0.5;
                    if t < 1e-12 {
                        *coefs = start.clone();
                        self.lp.copy_from_slice(&self.lp_prev);
                        self.fused_pass();
                        f_new = f_cur;
                        break;
                    }
                    let trial = Coefs::blend(&start, coefs, t);
                    let lp_t: Vec<f64> = self
                        .lp_prev
                        .iter()
                        .zip(self.lp.iter())
                        .map(|(&l0, &l1)| l0 + t * (l1 - l0))
                        .collect();
                    let f_t = self.nll_of(&lp_t) + lambda_n * trial.l1();
                    if f_t <= f_cur + 1e-10 {
                        self.lp.copy_from_slice(&lp_t);
                        *coefs = trial;
                        nll_new = self.fused_pass();
                        f_new = nll_new + lambda_n * coefs.l1();
                        break;
                    }
                }
            }
            debug_assert!(
                f_new <= f_cur + 1e-8,
                "objective increased within a sweep"
            );
            let decrease = f_cur - f_new;
            f_cur = f_new;
            last_decrease = decrease;

            let max_delta = coefs.max_abs_diff(&start);
            let mut weighted = {
                let di = coefs.intercept - start.intercept;
                di * di * self.w_sum.iter().sum::<f64>() / self.n as f64
            };
            for (j, (&new, &old)) in coefs.binary.iter().zip(&start.binary).enumerate() {
                let delta = new - old;
                weighted = weighted.max(delta * delta * self.h_binary[j] / self.n as f64);
            }
            for (t, (&new, &old)) in coefs.cont.iter().zip(&start.cont).enumerate() {
                let delta = new - old;
                weighted = weighted.max(delta * delta * self.h_cont[t] / self.n as f64);
            }
            if max_delta < cfg.tol || weighted < cfg.tol_curvature {
                return Ok(sweep);
            }
            // Exactly collinear columns leave an optimal face where the
            // coefficients can keep trading off while the objective only
            // moves at the noise floor; three such sweeps means done.
            if decrease.abs() < 1e-12 * (1.0 + f_cur.abs()) {
                stalls += 1;
                if stalls >= 3 {
                    return Ok(sweep);
                }
            } else {
                stalls = 0;
            }
        }
        if sweep_budget < cfg.max_sweeps || last_decrease.abs() < 1e-8 * (1.0 + f_cur.abs()) {
            // Bounded path point, or hit the cap with an immaterial
            // objective change: good enough for its role.
            return Ok(sweep_budget);
        }
        Err(Error::NonConvergence {
            sweeps: sweep_budget,
            last_delta: last_decrease,
        })
    }
}

#[inline]
fn soft(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

fn check_response(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyTraining {
            what: "logistic regression",
        });
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::InvalidParam {
            name: "y",
            reason: "response has a single class".into(),
        });
    }
    Ok(())
}

fn resolve_grid(
    grid: &LambdaGrid,
    work: &mut Work,
    d: &DesignMatrix,
    cfg: &LassoConfig,
) -> Result<Vec<f64>> {
    let mut g = match grid {
        LambdaGrid::Explicit(values) => {
            if values.is_empty() || values.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::InvalidParam {
                    name: "lambdaGrid",
                    reason: "grid must be non-empty and strictly positive".into(),
                });
            }
            values.clone()
        }
        LambdaGrid::Auto => {
            let lmax = work.lambda_max(d);
            let lmin = lmax * cfg.lambda_min_ratio;
            let k = cfg.n_lambda.max(1);
            (0..k)
                .map(|i| {
                    let f = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
                    (lmax.ln() + f * (lmin.ln() - lmax.ln())).exp()
                })
                .collect()
        }
    };
    g.sort_by(|a, b| b.total_cmp(a));
    Ok(g)
}

/// Fits the warm-started path over `grid` (descending). Stops refining once
/// the explained deviance saturates (deeper grid points would select the
/// same model) and carries the last fit forward, so the output always has
/// one entry per grid value.
fn fit_path(
    d: &DesignMatrix,
    work: &mut Work,
    grid: &[f64],
    cfg: &LassoConfig,
    init: Option<&Coefs>,
) -> Result<Vec<Coefs>> {
    let mut coefs = match init {
        Some(c) => c.clone(),
        None => {
            let mut c = Coefs::zeros(d);
            c.intercept = logit(work.mean_response());
            c
        }
    };
    work.set_lp(d, &coefs);
    let null_dev = 2.0 * work.nll_of(&work.lp);
    let mut prev_ratio = f64::NEG_INFINITY;
    let mut out: Vec<Coefs> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        work.fit_at_lambda(d, &mut coefs, lambda, cfg, cfg.max_sweeps_path)?;
        out.push(coefs.clone());
        let ratio = 1.0 - 2.0 * work.nll_cur / null_dev;
        if ratio > 0.999 || ratio - prev_ratio < 1e-5 {
            break;
        }
        prev_ratio = ratio;
    }
    while out.len() < grid.len() {
        out.push(out.last().unwrap().clone());
    }
    Ok(out)
}

fn holdout_nll(d: &DesignMatrix, coefs: &Coefs, rows: &[usize], y: &[f64]) -> f64 {
    let theta = coefs.theta_table(d);
    rows.iter()
        .zip(y)
        .map(|(&i, &yi)| {
            let mut lp = theta[d.pattern[i] as usize];
            for (g, col) in coefs.cont.iter().zip(d.cont.iter()) {
                lp += g * col[i];
            }
            log1p_exp(lp) - yi * lp
        })
        .sum()
}

/// Instrumented single path fit reporting sweeps per grid point. For
/// performance diagnostics only.
pub fn fit_logistic_lasso_with_sweep_trace(
    d: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    grid: &LambdaGrid,
    cfg: &LassoConfig,
) -> Result<Vec<(f64, usize)>> {
    check_response(y)?;
    let mut work = Work::gather(d, rows, y);
    let grid = resolve_grid(grid, &mut work, d, cfg)?;
    let mut coefs = Coefs::zeros(d);
    coefs.intercept = logit(work.mean_response());
    work.set_lp(d, &coefs);
    let mut out = Vec::new();
    for &lambda in &grid {
        let sweeps = work.fit_at_lambda(d, &mut coefs, lambda, cfg, cfg.max_sweeps_path)?;
        out.push((lambda, sweeps));
    }
    Ok(out)
}

/// Cross-validated fit with an explicit fold assignment (one entry per
/// element of `rows`). Exposed so tests can control the folds directly.
pub fn fit_logistic_lasso_with_folds(
    d: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    grid: &LambdaGrid,
    fold_of: &[usize],
    cfg: &LassoConfig,
) -> Result<LogisticLassoFit> {
    check_response(y)?;
    assert_eq!(rows.len(), y.len());
    assert_eq!(rows.len(), fold_of.len());
    let mut work = Work::gather(d, rows, y);
    let grid = resolve_grid(grid, &mut work, d, cfg)?;
    let full_path = fit_path(d, &mut work, &grid, cfg, None)?;

    let n_folds = fold_of.iter().copied().max().map_or(0, |m| m + 1);
    let mut cv_nll = vec![0.0; grid.len()];
    for f in 0..n_folds {
        let (mut tr_rows, mut tr_y) = (Vec::new(), Vec::new());
        let (mut va_rows, mut va_y) = (Vec::new(), Vec::new());
        for (k, &row) in rows.iter().enumerate() {
            if fold_of[k] == f {
                va_rows.push(row);
                va_y.push(y[k]);
            } else {
                tr_rows.push(row);
                tr_y.push(y[k]);
            }
        }
        if va_rows.is_empty() {
            continue;
        }
        let ones = tr_y.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == tr_y.len() {
            // Degenerate inner split: score the clipped constant model.
            log::debug!("single-class CV training split; scoring constant model");
            let p = super::clip_probability(ones as f64 / tr_y.len().max(1) as f64);
            let lp = logit(p);
            let nll: f64 = va_y.iter().map(|&yv| log1p_exp(lp) - yv * lp).sum();
            for v in cv_nll.iter_mut() {
                *v += nll;
            }
            continue;
        }
        let mut fold_work = Work::gather(d, &tr_rows, &tr_y);
        let fold_path = fit_path(d, &mut fold_work, &grid, cfg, None)?;
        for (v, coefs) in cv_nll.iter_mut().zip(&fold_path) {
            *v += holdout_nll(d, coefs, &va_rows, &va_y);
        }
    }

    // Smallest CV loss wins; ties go to the larger penalty.
    let mut best = 0;
    for (i, &v) in cv_nll.iter().enumerate() {
        if v < cv_nll[best] {
            best = i;
        }
    }
    // Full-precision refit at the selected penalty, warm from the path.
    let mut coefs = full_path[best].clone();
    work.set_lp(d, &coefs);
    work.fit_at_lambda(d, &mut coefs, grid[best], cfg, cfg.max_sweeps)?;
    Ok(LogisticLassoFit {
        coefs,
        lambda: grid[best],
        lambda_grid: grid,
        cv_nll,
    })
}

/// Cross-validated L1-penalized logistic fit on `rows` of `d`.
pub fn fit_logistic_lasso(
    d: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    grid: &LambdaGrid,
    cv_folds: usize,
    seed: u64,
    cfg: &LassoConfig,
) -> Result<LogisticLassoFit> {
    let fold_of = cv_fold_assignment(rows.len(), cv_folds, seed);
    fit_logistic_lasso_with_folds(d, rows, y, grid, &fold_of, cfg)
}

/// Balanced random fold labels for `n` items.
pub(crate) fn cv_fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let folds = folds.clamp(2, n.max(2));
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream_rng(rng::derive_seed(seed, rng::tag::CV), 0);
    rng::shuffle(&mut r, &mut order);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Refits at one fixed penalty, warm-starting from `init`. Used for the
/// nested calibration fits, which share most of their rows with the parent.
pub fn refit_at_lambda(
    d: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    lambda: f64,
    init: &Coefs,
    cfg: &LassoConfig,
) -> Result<Coefs> {
    check_response(y)?;
    let mut work = Work::gather(d, rows, y);
    let mut coefs = init.clone();
    work.set_lp(d, &coefs);
    work.fit_at_lambda(d, &mut coefs, lambda, cfg, cfg.max_sweeps)?;
    Ok(coefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Expansion;
    use crate::rng::{stream_rng, uniform};

    fn toy_design(n: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut r = stream_rng(seed, 0);
        let b1: Vec<u8> = (0..n).map(|_| (uniform(&mut r) < 0.4) as u8).collect();
        let b2: Vec<u8> = (0..n).map(|_| (uniform(&mut r) < 0.6) as u8).collect();
        let w: Vec<f64> = (0..n).map(|_| uniform(&mut r)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = expit(-0.4 + 0.8 * b1[i] as f64 - 0.5 * b2[i] as f64 + 0.3 * w[i]);
                (uniform(&mut r) < p) as u8 as f64
            })
            .collect();
        let d = DesignMatrix::build(
            &[("b1", &b1), ("b2", &b2)],
            &[("w", &w)],
            Expansion::Saturated,
        )
        .unwrap();
        (d, y)
    }

    #[test]
    fn full_shrinkage_at_huge_penalty() {
        let mut r = stream_rng(4, 1);
        let n = 2000;
        let b: Vec<u8> = (0..n).map(|_| (uniform(&mut r) < 0.5) as u8).collect();
        let y: Vec<f64> = (0..n).map(|_| (uniform(&mut r) < 0.3) as u8 as f64).collect();
        let d = DesignMatrix::build(&[("b", &b)], &[], Expansion::MainEffects).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let fit = fit_logistic_lasso(
            &d,
            &rows,
            &y,
            &LambdaGrid::Explicit(vec![10.0]),
            2,
            0,
            &LassoConfig::default(),
        )
        .unwrap();
        assert!(fit.coefs.binary.iter().all(|&b| b == 0.0));
        let ybar = y.iter().sum::<f64>() / n as f64;
        assert!((fit.coefs.intercept - logit(ybar)).abs() < 1e-6);
    }

    #[test]
    fn lambda_max_zeroes_all_slopes() {
        let (d, y) = toy_design(3000, 9);
        let rows: Vec<usize> = (0..d.n).collect();
        let mut work = Work::gather(&d, &rows, &y);
        let lmax = work.lambda_max(&d);
        let fit = fit_logistic_lasso(
            &d,
            &rows,
            &y,
            &LambdaGrid::Explicit(vec![lmax]),
            2,
            0,
            &LassoConfig::default(),
        )
        .unwrap();
        assert!(fit.coefs.binary.iter().all(|&b| b == 0.0), "{:?}", fit.coefs);
        assert!(fit.coefs.cont.iter().all(|&b| b == 0.0));
        // And just below lambda_max at least one slope activates.
        let fit2 = fit_logistic_lasso(
            &d,
            &rows,
            &y,
            &LambdaGrid::Explicit(vec![lmax * 0.8]),
            2,
            0,
            &LassoConfig::default(),
        )
        .unwrap();
        let active = fit2.coefs.binary.iter().chain(&fit2.coefs.cont);
        assert!(active.clone().any(|&b| b != 0.0));
    }

    /// Independent oracle: unpenalized Newton-Raphson for a 1-feature
    /// logistic model.
    fn newton_raphson_1f(x: &[f64], y: &[f64]) -> (f64, f64) {
        let (mut b0, mut b1) = (0.0f64, 0.0f64);
        for _ in 0..50 {
            let (mut g0, mut g1) = (0.0, 0.0);
            let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
            for (&xi, &yi) in x.iter().zip(y) {
                let p = expit(b0 + b1 * xi);
                let w = p * (1.0 - p);
                let r = yi - p;
                g0 += r;
                g1 += xi * r;
                h00 += w;
                h01 += w * xi;
                h11 += w * xi * xi;
            }
            let det = h00 * h11 - h01 * h01;
            let d0 = (h11 * g0 - h01 * g1) / det;
            let d1 = (h00 * g1 - h01 * g0) / det;
            b0 += d0;
            b1 += d1;
            if d0.abs().max(d1.abs()) < 1e-12 {
                break;
            }
        }
        (b0, b1)
    }

    #[test]
    fn near_zero_penalty_matches_newton_raphson_oracle() {
        let n = 100_000;
        let mut r = stream_rng(12, 0);
        let x: Vec<f64> = (0..n).map(|_| uniform(&mut r) * 4.0 - 2.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| (uniform(&mut r) < expit(0.5 - 0.2 * xi)) as u8 as f64)
            .collect();
        let d = DesignMatrix::build(&[], &[("x", &x)], Expansion::MainEffects).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let fit = fit_logistic_lasso(
            &d,
            &rows,
            &y,
            &LambdaGrid::Auto,
            10,
            3,
            &LassoConfig::default(),
        )
        .unwrap();
        let (ob0, ob1) = newton_raphson_1f(&x, &y);
        assert!(
            (fit.coefs.cont[0] - ob1).abs() < 0.02,
            "lasso {} vs NR oracle {}",
            fit.coefs.cont[0],
            ob1
        );
        assert!((fit.coefs.intercept - ob0).abs() < 0.02);
        assert!((fit.coefs.cont[0] - (-0.2)).abs() < 0.02);
    }

    #[test]
    fn lambda_selection_invariant_to_row_permutation_given_folds() {
        let (d, y) = toy_design(800, 21);
        let rows: Vec<usize> = (0..d.n).collect();
        let folds = cv_fold_assignment(d.n, 5, 99);
        let cfg = LassoConfig::default();
        let fit = fit_logistic_lasso_with_folds(&d, &rows, &y, &LambdaGrid::Auto, &folds, &cfg)
            .unwrap();

        // Permute rows and carry the fold labels along with them.
        let mut perm: Vec<usize> = (0..d.n).collect();
        let mut r = stream_rng(5, 5);
        rng::shuffle(&mut r, &mut perm);
        let rows_p: Vec<usize> = perm.clone();
        let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let folds_p: Vec<usize> = perm.iter().map(|&i| folds[i]).collect();
        let fit_p =
            fit_logistic_lasso_with_folds(&d, &rows_p, &y_p, &LambdaGrid::Auto, &folds_p, &cfg)
                .unwrap();
        assert_eq!(fit.lambda, fit_p.lambda);
    }

    #[test]
    fn single_class_response_rejected() {
        let b = [0u8, 1, 0, 1];
        let d = DesignMatrix::build(&[("b", &b)], &[], Expansion::MainEffects).unwrap();
        let rows = [0usize, 1, 2, 3];
        let err = fit_logistic_lasso(
            &d,
            &rows,
            &[1.0, 1.0, 1.0, 1.0],
            &LambdaGrid::Auto,
            2,
            0,
            &LassoConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn objective_non_increasing_across_sweeps() {
        // Drive fit_at_lambda directly and watch the objective trace.
        let (d, y) = toy_design(600, 2);
        let rows: Vec<usize> = (0..d.n).collect();
        let mut work = Work::gather(&d, &rows, &y);
        let cfg = LassoConfig::default();
        let grid = resolve_grid(&LambdaGrid::Auto, &mut work, &d, &cfg).unwrap();
        let mut coefs = Coefs::zeros(&d);
        coefs.intercept = logit(work.mean_response());
        work.set_lp(&d, &coefs);
        let mut prev = f64::INFINITY;
        for &lambda in &grid {
            work.fit_at_lambda(&d, &mut coefs, lambda, &cfg, cfg.max_sweeps_path)
                .unwrap();
            let f = work.nll_cur + lambda * work.n as f64 * coefs.l1();
            // Along a descending path the unpenalized NLL is non-increasing
            // and each fit leaves a coherent objective.
            assert!(f.is_finite());
            assert!(work.nll_cur <= prev + 1e-8);
            prev = work.nll_cur;
        }
    }
}
