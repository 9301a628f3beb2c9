//! Simulation data-generating mechanism and its brute-force counterfactual
//! oracle.
//!
//! The mechanism draws baseline covariates (W1, W2), three observed binary
//! modifiers V1, a partially observed binary modifier V2, trial membership
//! S, treatment A (randomized 1:1 inside trial S=1, never assigned in S=0),
//! and a binary outcome Y from logistic structural equations. The oracle
//! simulates both potential outcomes per draw with a shared exogenous
//! uniform and tabulates, for each of the 16 (v1, v2) cells, the cell
//! probability, the conditional average treatment effect, and the
//! conditional proxy effect together with Monte Carlo standard errors.

use rayon::prelude::*;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha12Rng;

use crate::data::{v1_cell_index, v1_cells, Dataset, Observation};
use crate::error::Error;
use crate::rng::{self, tag};
use crate::special::{expit, inv_betainc_reg};
use crate::Result;

/// Coefficients of a `expit(b0 + b1*W1 + b2*W2)` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WCoef {
    pub intercept: f64,
    pub w1: f64,
    pub w2: f64,
}

/// Coefficients of a `expit(b0 + b*V1 + c*W)` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V1WCoef {
    pub intercept: f64,
    pub v11: f64,
    pub v12: f64,
    pub v13: f64,
    pub w1: f64,
    pub w2: f64,
}

/// Coefficients of the outcome equation, including all treatment
/// interactions the mechanism carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YCoef {
    pub intercept: f64,
    pub w1: f64,
    pub w2: f64,
    pub a: f64,
    pub v11: f64,
    pub v12: f64,
    pub v13: f64,
    pub v11_a: f64,
    pub v12_a: f64,
    pub v13_a: f64,
    pub v2: f64,
    pub v2_a: f64,
}

/// Full coefficient set of the data-generating mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpCoefficients {
    pub w1_prob: f64,
    pub w2_beta: (f64, f64),
    pub v11: WCoef,
    pub v12: WCoef,
    pub v13: WCoef,
    pub v2: V1WCoef,
    pub s: V1WCoef,
    pub a_prob_s1: f64,
    pub y: YCoef,
}

impl Default for DgpCoefficients {
    fn default() -> Self {
        Self {
            w1_prob: 0.33,
            w2_beta: (2.0, 2.0),
            v11: WCoef {
                intercept: 0.5,
                w1: -0.2,
                w2: 0.15,
            },
            v12: WCoef {
                intercept: -0.3,
                w1: 0.1,
                w2: -0.6,
            },
            v13: WCoef {
                intercept: 0.1,
                w1: 0.3,
                w2: 0.2,
            },
            v2: V1WCoef {
                intercept: -0.5,
                v11: 0.6,
                v12: -0.4,
                v13: 0.3,
                w1: 0.1,
                w2: -0.2,
            },
            s: V1WCoef {
                intercept: 0.0,
                v11: 0.2,
                v12: -0.4,
                v13: 0.3,
                w1: 0.5,
                w2: -0.3,
            },
            a_prob_s1: 0.5,
            y: YCoef {
                intercept: -1.5,
                w1: 0.3,
                w2: -0.4,
                a: 0.1,
                v11: 0.5,
                v12: -0.8,
                v13: 0.2,
                v11_a: 1.0,
                v12_a: -1.2,
                v13_a: 0.5,
                v2: 0.9,
                v2_a: 1.2,
            },
        }
    }
}

impl DgpCoefficients {
    /// Zeroes every treatment term of the outcome equation, producing a
    /// mechanism with no treatment effect anywhere.
    pub fn zero_treatment_effects(mut self) -> Self {
        self.y.a = 0.0;
        self.y.v11_a = 0.0;
        self.y.v12_a = 0.0;
        self.y.v13_a = 0.0;
        self.y.v2_a = 0.0;
        self
    }

    /// Zeroes every slope, keeping intercepts: all equations collapse to
    /// their intercept-only marginals.
    pub fn intercepts_only(mut self) -> Self {
        for c in [&mut self.v11, &mut self.v12, &mut self.v13] {
            c.w1 = 0.0;
            c.w2 = 0.0;
        }
        for c in [&mut self.v2, &mut self.s] {
            c.v11 = 0.0;
            c.v12 = 0.0;
            c.v13 = 0.0;
            c.w1 = 0.0;
            c.w2 = 0.0;
        }
        self.y = YCoef {
            intercept: self.y.intercept,
            w1: 0.0,
            w2: 0.0,
            a: 0.0,
            v11: 0.0,
            v12: 0.0,
            v13: 0.0,
            v11_a: 0.0,
            v12_a: 0.0,
            v13_a: 0.0,
            v2: 0.0,
            v2_a: 0.0,
        };
        self
    }

    fn p_w_model(&self, c: &WCoef, w1: u8, w2: f64) -> f64 {
        expit(c.intercept + c.w1 * w1 as f64 + c.w2 * w2)
    }

    fn p_v1w_model(&self, c: &V1WCoef, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        expit(
            c.intercept
                + c.v11 * v1[0] as f64
                + c.v12 * v1[1] as f64
                + c.v13 * v1[2] as f64
                + c.w1 * w1 as f64
                + c.w2 * w2,
        )
    }

    pub fn p_v2(&self, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        self.p_v1w_model(&self.v2, v1, w1, w2)
    }

    pub fn p_s(&self, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        self.p_v1w_model(&self.s, v1, w1, w2)
    }

    /// Outcome probability under treatment `a`.
    pub fn p_y(&self, a: u8, v1: [u8; 3], v2: u8, w1: u8, w2: f64) -> f64 {
        let af = a as f64;
        let (x1, x2, x3) = (v1[0] as f64, v1[1] as f64, v1[2] as f64);
        expit(
            self.y.intercept
                + self.y.w1 * w1 as f64
                + self.y.w2 * w2
                + self.y.a * af
                + self.y.v11 * x1
                + self.y.v12 * x2
                + self.y.v13 * x3
                + self.y.v11_a * x1 * af
                + self.y.v12_a * x2 * af
                + self.y.v13_a * x3 * af
                + self.y.v2 * v2 as f64
                + self.y.v2_a * v2 as f64 * af,
        )
    }

    // ---- analytic nuisance values implied by the mechanism ----

    /// True treatment propensity P(A=a | V1, W), marginal over S.
    pub fn true_g(&self, a: u8, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        let p1 = self.a_prob_s1 * self.p_s(v1, w1, w2);
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// True outcome regression E[Y | A=a, V1, W], mixing over V2.
    pub fn true_m(&self, a: u8, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        let pv2 = self.p_v2(v1, w1, w2);
        pv2 * self.p_y(a, v1, 1, w1, w2) + (1.0 - pv2) * self.p_y(a, v1, 0, w1, w2)
    }

    /// True modifier regression P(V2=v2 | Y=1, A=a, V1, W, S=1).
    pub fn true_b(&self, a: u8, v2: u8, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        let pv2 = self.p_v2(v1, w1, w2);
        let num1 = pv2 * self.p_y(a, v1, 1, w1, w2);
        let num0 = (1.0 - pv2) * self.p_y(a, v1, 0, w1, w2);
        let total = num1 + num0;
        let p1 = num1 / total;
        if v2 == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// True joint probability P(Y=1, A=a, S=1 | V1, W).
    pub fn true_r(&self, a: u8, v1: [u8; 3], w1: u8, w2: f64) -> f64 {
        let pa = if a == 1 {
            self.a_prob_s1
        } else {
            1.0 - self.a_prob_s1
        };
        self.p_s(v1, w1, w2) * pa * self.true_m(a, v1, w1, w2)
    }
}

/// Parameters of one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpParams {
    pub seed: u64,
    pub n: usize,
    pub coef: DgpCoefficients,
}

impl DgpParams {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            seed,
            n,
            coef: DgpCoefficients::default(),
        }
    }
}

/// Exogenous state of one draw before treatment and outcome.
struct Latents {
    w1: u8,
    w2: f64,
    v1: [u8; 3],
    v2: u8,
    s: u8,
}

/// Draws the covariate block in a fixed order (7 uniforms).
fn draw_latents(rng: &mut ChaCha12Rng, c: &DgpCoefficients) -> Latents {
    let w1 = (rng::uniform(rng) < c.w1_prob) as u8;
    let w2 = inv_betainc_reg(c.w2_beta.0, c.w2_beta.1, rng::uniform(rng));
    let v11 = (rng::uniform(rng) < c.p_w_model(&c.v11, w1, w2)) as u8;
    let v12 = (rng::uniform(rng) < c.p_w_model(&c.v12, w1, w2)) as u8;
    let v13 = (rng::uniform(rng) < c.p_w_model(&c.v13, w1, w2)) as u8;
    let v1 = [v11, v12, v13];
    let v2 = (rng::uniform(rng) < c.p_v2(v1, w1, w2)) as u8;
    let s = (rng::uniform(rng) < c.p_s(v1, w1, w2)) as u8;
    Latents { w1, w2, v1, v2, s }
}

/// Samples `params.n` i.i.d. records. Each record draws from its own RNG
/// stream, so the result is independent of how work is scheduled.
pub fn sample_dataset(params: &DgpParams) -> Result<Dataset> {
    if params.n == 0 {
        return Err(Error::InvalidParam {
            name: "n",
            reason: "sample size must be at least 1".into(),
        });
    }
    let seed = rng::derive_seed(params.seed, tag::DATASET);
    let coef = params.coef;
    let records: Vec<Observation> = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream_rng(seed, i as u64);
            let l = draw_latents(&mut r, &coef);
            let a = (rng::uniform(&mut r) < coef.a_prob_s1 * l.s as f64) as u8;
            let y = (rng::uniform(&mut r) < coef.p_y(a, l.v1, l.v2, l.w1, l.w2)) as u8;
            Observation {
                s: l.s,
                w1: l.w1,
                w2: l.w2,
                v1: l.v1,
                v2: l.v2,
                v2_observed: l.s == 1,
                a,
                y,
            }
        })
        .collect();
    Ok(Dataset::new(records))
}

/// One row of the counterfactual truth table.
#[derive(Debug, Clone, Copy)]
pub struct TruthCell {
    pub v1: [u8; 3],
    pub v2: u8,
    /// P(V1=v1, V2=v2).
    pub prob: f64,
    /// P(Y1=1 | cell) - P(Y0=1 | cell).
    pub cate: f64,
    /// f~(1, v1, v2) - f~(0, v1, v2).
    pub cpe: f64,
    pub se_prob: f64,
    pub se_cate: f64,
    pub se_cpe: f64,
    /// f~(a, v1, v2) = P(V2=v2 | Y_a=1, v1) * P(Y_a=1 | v1), per arm.
    pub ftilde: [f64; 2],
    pub se_ftilde: [f64; 2],
}

/// Monte Carlo truth for the 16 (v1, v2) cells of the mechanism.
#[derive(Debug, Clone)]
pub struct TruthTable {
    pub replicates: u64,
    /// Indexed by `v1_cell_index(v1) * 2 + v2`.
    pub cells: Vec<TruthCell>,
}

pub const TRUTH_CSV_HEADER: &str = "v11,v12,v13,v2,prob,cate,cpe,mc_se";

impl TruthTable {
    pub fn cell(&self, v1: [u8; 3], v2: u8) -> &TruthCell {
        &self.cells[v1_cell_index(v1) * 2 + v2 as usize]
    }

    /// Marginal probability of a v1 cell.
    pub fn p_v1(&self, v1: [u8; 3]) -> f64 {
        self.cell(v1, 0).prob + self.cell(v1, 1).prob
    }

    /// kappa(a, v2) = sum over v1 of f~(a, v1, v2) P(v1).
    pub fn kappa(&self, a: u8, v2: u8) -> f64 {
        v1_cells()
            .iter()
            .map(|&v1| self.cell(v1, v2).ftilde[a as usize] * self.p_v1(v1))
            .sum()
    }

    /// The treatment the oracle rule assigns in a cell: 1 iff the proxy
    /// effect is positive (ties to 0).
    pub fn oracle_rule(&self, v1: [u8; 3], v2: u8) -> u8 {
        (self.cell(v1, v2).cpe > 0.0) as u8
    }

    /// Conservative per-cell Monte Carlo standard error for the CSV export.
    pub fn mc_se(cell: &TruthCell) -> f64 {
        cell.se_cate.max(cell.se_cpe)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{TRUTH_CSV_HEADER}")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.v1[0],
                c.v1[1],
                c.v1[2],
                c.v2,
                c.prob,
                c.cate,
                c.cpe,
                Self::mc_se(c)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Default, Clone, Copy)]
struct CellCounts {
    n: u64,
    y0: u64,
    y1: u64,
    /// Number of draws where the two potential outcomes disagree.
    disagree: u64,
}

/// Simulates the mechanism `replicates` times, evaluating the outcome
/// equation at both treatment arms with a shared exogenous uniform, and
/// tabulates the truth per (v1, v2) cell.
///
/// Shards run in parallel on disjoint RNG streams and merge by exact count
/// summing, so the table is identical for any worker count.
pub fn oracle_truth(params: &DgpParams, replicates: u64) -> Result<TruthTable> {
    if replicates < 1_000_000 {
        return Err(Error::InvalidParam {
            name: "replicates",
            reason: format!("oracle needs at least 1e6 replicates, got {replicates}"),
        });
    }
    let seed = rng::derive_seed(params.seed, tag::ORACLE);
    let coef = params.coef;
    const SHARD: u64 = 1 << 16;
    let shards: Vec<[CellCounts; 16]> = (0..replicates.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let lo = shard * SHARD;
            let hi = (lo + SHARD).min(replicates);
            let mut counts = [CellCounts::default(); 16];
            for rep in lo..hi {
                let mut r = rng::stream_rng(seed, rep);
                let l = draw_latents(&mut r, &coef);
                let u_y = rng::uniform(&mut r);
                let y0 = (u_y < coef.p_y(0, l.v1, l.v2, l.w1, l.w2)) as u64;
                let y1 = (u_y < coef.p_y(1, l.v1, l.v2, l.w1, l.w2)) as u64;
                let cell = &mut counts[v1_cell_index(l.v1) * 2 + l.v2 as usize];
                cell.n += 1;
                cell.y0 += y0;
                cell.y1 += y1;
                cell.disagree += (y0 != y1) as u64;
            }
            counts
        })
        .collect();
    let mut counts = [CellCounts::default(); 16];
    for shard in shards {
        for (acc, c) in counts.iter_mut().zip(shard.iter()) {
            acc.n += c.n;
            acc.y0 += c.y0;
            acc.y1 += c.y1;
            acc.disagree += c.disagree;
        }
    }

    let total = replicates as f64;
    let mut cells = Vec::with_capacity(16);
    for v1 in v1_cells() {
        let n_v1 = (counts[v1_cell_index(v1) * 2].n + counts[v1_cell_index(v1) * 2 + 1].n) as f64;
        for v2 in 0..2u8 {
            let c = &counts[v1_cell_index(v1) * 2 + v2 as usize];
            if c.n == 0 {
                return Err(Error::ZeroCellOccupancy {
                    v11: v1[0],
                    v12: v1[1],
                    v13: v1[2],
                    v2,
                });
            }
            let n = c.n as f64;
            let prob = n / total;
            let diff = c.y1 as f64 - c.y0 as f64;
            let d2 = c.disagree as f64;
            let cate = diff / n;
            let cpe = diff / n_v1;
            let ftilde = [c.y0 as f64 / n_v1, c.y1 as f64 / n_v1];
            let var = |mean_sq: f64, mean: f64, m: f64| ((mean_sq - mean * mean) / m).max(0.0);
            cells.push(TruthCell {
                v1,
                v2,
                prob,
                cate,
                cpe,
                se_prob: var(prob, prob, total).sqrt(),
                se_cate: var(d2 / n, cate, n).sqrt(),
                se_cpe: var(d2 / n_v1, cpe, n_v1).sqrt(),
                ftilde,
                se_ftilde: [
                    var(ftilde[0], ftilde[0], n_v1).sqrt(),
                    var(ftilde[1], ftilde[1], n_v1).sqrt(),
                ],
            });
        }
    }
    Ok(TruthTable {
        replicates,
        cells,
    })
}

/// A deterministic rule over the 16 (v1, v2) cells.
#[derive(Debug, Clone, Copy)]
pub struct CellRule(pub [u8; 16]);

impl CellRule {
    pub fn from_fn(mut f: impl FnMut([u8; 3], u8) -> u8) -> Self {
        let mut t = [0u8; 16];
        for v1 in v1_cells() {
            for v2 in 0..2u8 {
                t[v1_cell_index(v1) * 2 + v2 as usize] = f(v1, v2);
            }
        }
        Self(t)
    }

    pub fn arm(&self, v1: [u8; 3], v2: u8) -> u8 {
        self.0[v1_cell_index(v1) * 2 + v2 as usize]
    }

    pub const fn always(arm: u8) -> Self {
        Self([arm; 16])
    }
}

/// Monte Carlo value of E[Y_d] (optionally restricted to the S=1 stratum)
/// for a fixed cell rule, with its standard error.
pub fn oracle_policy_value(
    params: &DgpParams,
    replicates: u64,
    rule: &CellRule,
    s1_only: bool,
) -> Result<(f64, f64)> {
    if replicates == 0 {
        return Err(Error::InvalidParam {
            name: "replicates",
            reason: "need at least one replicate".into(),
        });
    }
    let seed = rng::derive_seed(params.seed, tag::ORACLE);
    let coef = params.coef;
    const SHARD: u64 = 1 << 16;
    let shards: Vec<(u64, u64)> = (0..replicates.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let lo = shard * SHARD;
            let hi = (lo + SHARD).min(replicates);
            let (mut n, mut hits) = (0u64, 0u64);
            for rep in lo..hi {
                let mut r = rng::stream_rng(seed, rep);
                let l = draw_latents(&mut r, &coef);
                if s1_only && l.s == 0 {
                    continue;
                }
                let u_y = rng::uniform(&mut r);
                let d = rule.arm(l.v1, l.v2);
                n += 1;
                hits += (u_y < coef.p_y(d, l.v1, l.v2, l.w1, l.w2)) as u64;
            }
            (n, hits)
        })
        .collect();
    let (n, hits) = shards
        .into_iter()
        .fold((0u64, 0u64), |(a, b), (c, d)| (a + c, b + d));
    let p = hits as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(seed: u64, n: usize) -> DgpParams {
        DgpParams::new(n, seed)
    }

    #[test]
    fn rejects_empty_sample() {
        assert!(sample_dataset(&small_params(1, 0)).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = sample_dataset(&small_params(11, 500)).unwrap();
        let b = sample_dataset(&small_params(11, 500)).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn a_is_zero_whenever_s_is_zero() {
        let ds = sample_dataset(&small_params(5, 20_000)).unwrap();
        assert!(ds.records.iter().all(|r| r.s == 1 || r.a == 0));
        // and v2 is marked observed exactly on S=1
        assert!(ds.records.iter().all(|r| r.v2_observed == (r.s == 1)));
    }

    #[test]
    fn intercept_only_marginals() {
        let mut params = small_params(3, 1_000_000);
        params.coef = params.coef.intercepts_only();
        let ds = sample_dataset(&params).unwrap();
        let n = ds.len() as f64;
        let p_v2 = ds.records.iter().filter(|r| r.v2 == 1).count() as f64 / n;
        let target = expit(-0.5);
        let se = (target * (1.0 - target) / n).sqrt();
        assert!(
            (p_v2 - target).abs() < 3.0 * se,
            "p_v2 {p_v2} vs {target} (se {se})"
        );
    }

    #[test]
    fn a_randomized_at_half_inside_s1() {
        let ds = sample_dataset(&small_params(9, 1_000_000)).unwrap();
        let n = ds.len() as f64;
        let p_s1 = ds.records.iter().filter(|r| r.s == 1).count() as f64 / n;
        let p_s1_a1 = ds.records.iter().filter(|r| r.s == 1 && r.a == 1).count() as f64 / n;
        let target = 0.5 * p_s1;
        let se = (target * (1.0 - target) / n).sqrt();
        assert!((p_s1_a1 - target).abs() < 3.0 * se);
    }

    #[test]
    fn different_seeds_agree_on_cell_frequencies() {
        let n = 200_000;
        let a = sample_dataset(&small_params(21, n)).unwrap();
        let b = sample_dataset(&small_params(22, n)).unwrap();
        for v1 in v1_cells() {
            for v2 in 0..2u8 {
                let count = |ds: &Dataset| {
                    ds.records
                        .iter()
                        .filter(|r| r.v1 == v1 && r.v2 == v2)
                        .count() as f64
                        / n as f64
                };
                let (pa, pb) = (count(&a), count(&b));
                let se = (pa * (1.0 - pa) / n as f64).sqrt() * std::f64::consts::SQRT_2;
                assert!((pa - pb).abs() < 4.0 * se, "cell {v1:?},{v2}: {pa} vs {pb}");
            }
        }
    }

    #[test]
    fn oracle_rejects_small_replicate_counts() {
        assert!(oracle_truth(&small_params(1, 1), 1000).is_err());
    }

    #[test]
    fn oracle_zero_effect_mechanism_has_zero_effects() {
        let mut params = small_params(17, 1);
        params.coef = params.coef.zero_treatment_effects();
        let t = oracle_truth(&params, 1_000_000).unwrap();
        for c in &t.cells {
            // Shared exogenous uniforms make the potential outcomes equal
            // draw-by-draw, so the contrasts are exactly zero.
            assert_eq!(c.cate, 0.0);
            assert_eq!(c.cpe, 0.0);
        }
    }

    #[test]
    fn oracle_cell_probabilities_sum_to_one() {
        let t = oracle_truth(&small_params(2, 1), 1_000_000).unwrap();
        let sum: f64 = t.cells.iter().map(|c| c.prob).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_proxy_effect_never_exceeds_cate() {
        let t = oracle_truth(&small_params(2, 1), 1_000_000).unwrap();
        for c in &t.cells {
            assert!(c.cpe.abs() <= c.cate.abs() + 1e-15);
        }
    }

    #[test]
    fn oracle_sign_agreement_where_detectable() {
        let t = oracle_truth(&small_params(2, 1), 2_000_000).unwrap();
        for c in &t.cells {
            if c.cate.abs() > 3.0 * c.se_cate {
                assert_eq!(
                    c.cate > 0.0,
                    c.cpe > 0.0,
                    "cell {:?},{} cate {} cpe {}",
                    c.v1,
                    c.v2,
                    c.cate,
                    c.cpe
                );
            }
        }
    }

    #[test]
    fn truth_matches_published_spot_values() {
        let t = oracle_truth(&small_params(2, 1), 4_000_000).unwrap();
        let c = t.cell([1, 0, 1], 1);
        assert!((c.prob - 0.133).abs() < 3.0 * c.se_prob.max(5e-4));
        assert!((c.cate - 0.443).abs() < 3.0 * c.se_cate.max(5e-4));
        assert!((c.cpe - 0.257).abs() < 3.0 * c.se_cpe.max(5e-4));
        let c = t.cell([0, 0, 0], 0);
        assert!((c.cate - 0.014).abs() < 3.0 * c.se_cate.max(5e-4));
        assert!((c.cpe - 0.009).abs() < 3.0 * c.se_cpe.max(5e-4));
    }

    #[test]
    fn analytic_nuisances_are_probabilities_and_consistent() {
        let coef = DgpCoefficients::default();
        for v1 in v1_cells() {
            for w1 in 0..2u8 {
                for &w2 in &[0.1, 0.5, 0.9] {
                    for a in 0..2u8 {
                        let g = coef.true_g(a, v1, w1, w2);
                        let m = coef.true_m(a, v1, w1, w2);
                        let r = coef.true_r(a, v1, w1, w2);
                        let b1 = coef.true_b(a, 1, v1, w1, w2);
                        let b0 = coef.true_b(a, 0, v1, w1, w2);
                        for p in [g, m, r, b1, b0] {
                            assert!((0.0..=1.0).contains(&p));
                        }
                        assert!((b0 + b1 - 1.0).abs() < 1e-12);
                        // r = P(S=1) * P(A=a|S=1) * m
                        let pa = if a == 1 { 0.5 } else { 0.5 };
                        let expect = coef.p_s(v1, w1, w2) * pa * m;
                        assert!((r - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
