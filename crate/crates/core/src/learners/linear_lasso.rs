//! L1-penalized linear regression, the second-stage option for continuous
//! modifiers. Same penalty-path-and-CV shape as the logistic fit, but the
//! squared loss makes each coordinate solve exact, so no reweighting loop.

use super::design::DesignMatrix;
use super::logistic_lasso::{Coefs, LassoConfig, LambdaGrid};
use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone)]
pub struct LinearLassoFit {
    pub coefs: Coefs,
    pub lambda: f64,
}

impl LinearLassoFit {
    pub fn predict(&self, d: &DesignMatrix, i: usize) -> f64 {
        self.coefs.linear_predictor(d, i)
    }
}

struct Work {
    n: usize,
    x: Vec<Vec<f64>>, // dense columns: binaries expanded then continuous
    y: Vec<f64>,
    resid: Vec<f64>,
    col_sq: Vec<f64>,
}

impl Work {
    fn gather(d: &DesignMatrix, rows: &[usize], y: &[f64]) -> Self {
        let n = rows.len();
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(d.p());
        for &m in &d.masks {
            x.push(
                rows.iter()
                    .map(|&i| (d.pattern[i] & m == m) as u8 as f64)
                    .collect(),
            );
        }
        for col in &d.cont {
            x.push(rows.iter().map(|&i| col[i]).collect());
        }
        let col_sq = x.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        Self {
            n,
            x,
            y: y.to_vec(),
            resid: y.to_vec(),
            col_sq,
        }
    }

    fn fit_at(&mut self, beta: &mut Vec<f64>, intercept: &mut f64, lambda: f64, cfg: &LassoConfig) -> Result<()> {
        let lambda_n = lambda * self.n as f64;
        for sweeps in 0..cfg.max_sweeps {
            let mut max_d = 0.0f64;
            // intercept
            let mean_r = self.resid.iter().sum::<f64>() / self.n as f64;
            if mean_r != 0.0 {
                *intercept += mean_r;
                for r in self.resid.iter_mut() {
                    *r -= mean_r;
                }
                max_d = max_d.max(mean_r.abs());
            }
            for (j, col) in self.x.iter().enumerate() {
                if self.col_sq[j] <= 1e-12 {
                    continue;
                }
                let dot: f64 = col.iter().zip(&self.resid).map(|(a, b)| a * b).sum();
                let z = dot + beta[j] * self.col_sq[j];
                let new = soft(z, lambda_n) / self.col_sq[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for (r, &xv) in self.resid.iter_mut().zip(col.iter()) {
                        *r -= delta * xv;
                    }
                    max_d = max_d.max(delta.abs());
                }
            }
            if max_d < cfg.tol {
                return Ok(());
            }
            let _ = sweeps;
        }
        Err(Error::NonConvergence {
            sweeps: cfg.max_sweeps,
            last_delta: f64::NAN,
        })
    }

    fn reset(&mut self, d: &DesignMatrix, beta: &[f64], intercept: f64) {
        for i in 0..self.n {
            let mut fitted = intercept;
            for (b, col) in beta.iter().zip(&self.x) {
                fitted += b * col[i];
            }
            self.resid[i] = self.y[i] - fitted;
        }
        let _ = d;
    }
}

#[inline]
fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cross-validated L1 linear regression on `rows` of `d`.
pub fn fit_linear_lasso(
    d: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    grid: &LambdaGrid,
    cv_folds: usize,
    seed: u64,
    cfg: &LassoConfig,
) -> Result<LinearLassoFit> {
    if rows.is_empty() {
        return Err(Error::EmptyTraining {
            what: "linear regression",
        });
    }
    let mut work = Work::gather(d, rows, y);
    let grid: Vec<f64> = match grid {
        LambdaGrid::Explicit(v) => {
            if v.is_empty() || v.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::InvalidParam {
                    name: "lambdaGrid",
                    reason: "grid must be non-empty and strictly positive".into(),
                });
            }
            let mut g = v.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            g
        }
        LambdaGrid::Auto => {
            let ybar = y.iter().sum::<f64>() / y.len() as f64;
            let lmax = work
                .x
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(y)
                        .map(|(xv, yv)| xv * (yv - ybar))
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0f64, f64::max)
                / y.len() as f64;
            let lmax = lmax.max(1e-10);
            let lmin = lmax * cfg.lambda_min_ratio;
            (0..cfg.n_lambda)
                .map(|i| {
                    let f = i as f64 / (cfg.n_lambda - 1).max(1) as f64;
                    (lmax.ln() + f * (lmin.ln() - lmax.ln())).exp()
                })
                .collect()
        }
    };

    let fold_of = super::logistic_lasso::cv_fold_assignment(rows.len(), cv_folds, seed);
    let n_folds = fold_of.iter().copied().max().map_or(0, |m| m + 1);
    let p = d.p();
    let mut cv_mse = vec![0.0; grid.len()];
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
        if va_rows.is_empty() || tr_rows.is_empty() {
            continue;
        }
        let mut fw = Work::gather(d, &tr_rows, &tr_y);
        let mut beta = vec![0.0; p];
        let mut b0 = tr_y.iter().sum::<f64>() / tr_y.len() as f64;
        fw.reset(d, &beta, b0);
        for (g, mse) in grid.iter().zip(cv_mse.iter_mut()) {
            fw.fit_at(&mut beta, &mut b0, *g, cfg)?;
            let coefs = split_coefs(d, &beta, b0);
            *mse += va_rows
                .iter()
                .zip(&va_y)
                .map(|(&i, &yv)| {
                    let e = yv - coefs.linear_predictor(d, i);
                    e * e
                })
                .sum::<f64>();
        }
    }
    let mut best = 0;
    for (i, &v) in cv_mse.iter().enumerate() {
        if v < cv_mse[best] {
            best = i;
        }
    }

    let mut beta = vec![0.0; p];
    let mut b0 = y.iter().sum::<f64>() / y.len() as f64;
    work.reset(d, &beta, b0);
    for g in &grid[..=best] {
        work.fit_at(&mut beta, &mut b0, *g, cfg)?;
    }
    Ok(LinearLassoFit {
        coefs: split_coefs(d, &beta, b0),
        lambda: grid[best],
    })
}

fn split_coefs(d: &DesignMatrix, beta: &[f64], intercept: f64) -> Coefs {
    Coefs {
        intercept,
        binary: beta[..d.masks.len()].to_vec(),
        cont: beta[d.masks.len()..].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Expansion;
    use crate::rng::{stream_rng, uniform};

    #[test]
    fn recovers_linear_signal_at_small_penalty() {
        let n = 20_000;
        let mut r = stream_rng(31, 0);
        let b: Vec<u8> = (0..n).map(|_| (uniform(&mut r) < 0.5) as u8).collect();
        let x: Vec<f64> = (0..n).map(|_| uniform(&mut r)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.7 * b[i] as f64 - 0.4 * x[i] + (uniform(&mut r) - 0.5) * 0.2)
            .collect();
        let d = DesignMatrix::build(&[("b", &b)], &[("x", &x)], Expansion::MainEffects).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let fit = fit_linear_lasso(
            &d,
            &rows,
            &y,
            &LambdaGrid::Auto,
            5,
            7,
            &LassoConfig::default(),
        )
        .unwrap();
        assert!((fit.coefs.binary[0] - 0.7).abs() < 0.02, "{:?}", fit.coefs);
        assert!((fit.coefs.cont[0] + 0.4).abs() < 0.02);
    }

    #[test]
    fn constant_response_yields_zero_slopes() {
        let b = [0u8, 1, 0, 1, 1, 0];
        let d = DesignMatrix::build(&[("b", &b)], &[], Expansion::MainEffects).unwrap();
        let rows: Vec<usize> = (0..6).collect();
        let fit = fit_linear_lasso(
            &d,
            &rows,
            &[2.0; 6],
            &LambdaGrid::Explicit(vec![0.1]),
            2,
            0,
            &LassoConfig::default(),
        )
        .unwrap();
        assert_eq!(fit.coefs.binary[0], 0.0);
        assert!((fit.coefs.intercept - 2.0).abs() < 1e-9);
    }
}
