//! Fisher's exact test for `K_x x K_y` contingency tables.
//!
//! The p-value conditions on both margins: it sums the hypergeometric
//! probabilities of all tables with the observed margins that are no more
//! likely than the observed table. Tables whose conditional enumeration would
//! exceed the budget fall back to a seeded Monte Carlo estimate over random
//! label permutations, which samples the same conditional distribution.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::*;
use crate::rng;

/// Relative slack when comparing table probabilities to the observed one.
const PROB_RTOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(table: &[Vec<u64>]) -> Result<Self> {
        let rows = table.len();
        let cols = table.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("empty contingency table"));
        }
        if table.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged contingency table"));
        }
        Ok(ContingencyTable {
            rows,
            cols,
            counts: table.concat(),
        })
    }

    /// Cross-tabulates feature levels (rows) against response levels (columns).
    pub fn from_codes(x: &[u32], x_levels: usize, y: &[u32], y_levels: usize) -> Self {
        let mut counts = vec![0u64; x_levels * y_levels];
        for (&a, &b) in x.iter().zip(y) {
            counts[a as usize * y_levels + b as usize] += 1;
        }
        ContingencyTable {
            rows: x_levels,
            cols: y_levels,
            counts,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Drops rows and columns with zero margin.
    pub fn compact(&self) -> ContingencyTable {
        let rs = self.row_sums();
        let cs = self.col_sums();
        let keep_r: Vec<usize> = (0..self.rows).filter(|&i| rs[i] > 0).collect();
        let keep_c: Vec<usize> = (0..self.cols).filter(|&j| cs[j] > 0).collect();
        let counts = keep_r
            .iter()
            .flat_map(|&i| keep_c.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        ContingencyTable {
            rows: keep_r.len(),
            cols: keep_c.len(),
            counts,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FisherOptions {
    /// Largest number of tables enumerated before switching to Monte Carlo.
    pub budget: u128,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            budget: 1_000_000,
            mc_draws: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherOutcome {
    pub pvalue: f64,
    /// True when the enumeration budget was exceeded and the p-value is a
    /// Monte Carlo estimate.
    pub monte_carlo: bool,
}

/// Exact conditional p-value with default options.
pub fn fisher_exact(table: &ContingencyTable) -> Result<f64> {
    Ok(fisher_exact_pvalue(table, &FisherOptions::default())?.pvalue)
}

pub fn fisher_exact_pvalue(table: &ContingencyTable, options: &FisherOptions) -> Result<FisherOutcome> {
    let table = table.compact();
    if table.total() == 0 {
        return Err(Error::invalid("contingency table has no observations"));
    }
    let exact = |pvalue| {
        Ok(FisherOutcome {
            pvalue,
            monte_carlo: false,
        })
    };
    if table.rows < 2 || table.cols < 2 {
        return exact(1.0);
    }
    if table.rows == 2 && table.cols == 2 {
        return exact(fisher_2x2(&table));
    }
    let lnf = LnFactorials::new(table.total() as usize);
    match enumerate_rxc(&table, &lnf, options.budget) {
        Some(p) => exact(p),
        None => Ok(FisherOutcome {
            pvalue: monte_carlo_rxc(&table, &lnf, options),
            monte_carlo: true,
        }),
    }
}

/// 2x2 case by the hypergeometric ratio recurrence over the top-left cell.
fn fisher_2x2(t: &ContingencyTable) -> f64 {
    let (r1, r2) = (t.get(0, 0) + t.get(0, 1), t.get(1, 0) + t.get(1, 1));
    let c1 = t.get(0, 0) + t.get(1, 0);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    // Unnormalised pmf with weight 1 at `lo`.
    let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
    let mut w = 1.0f64;
    weights.push(w);
    for a in lo..hi {
        let num = ((r1 - a) * (c1 - a)) as f64;
        let den = ((a + 1) * (r2 + a + 1 - c1)) as f64;
        w *= num / den;
        weights.push(w);
    }
    let observed = weights[(t.get(0, 0) - lo) as usize];
    let total: f64 = weights.iter().sum();
    let extreme: f64 = weights
        .iter()
        .filter(|&&v| v <= observed * (1.0 + PROB_RTOL))
        .sum();
    (extreme / total).min(1.0)
}

/// `ln(k!)` for `k = 0..=n`.
#[derive(Clone, Debug)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut v = Vec::with_capacity(n + 1);
        let mut acc = 0.0f64;
        v.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            v.push(acc);
        }
        LnFactorials(v)
    }

    pub fn get(&self, k: u64) -> f64 {
        self.0[k as usize]
    }
}

fn log_margin_constant(t: &ContingencyTable, lnf: &LnFactorials) -> f64 {
    t.row_sums().iter().map(|&r| lnf.get(r)).sum::<f64>()
        + t.col_sums().iter().map(|&c| lnf.get(c)).sum::<f64>()
        - lnf.get(t.total())
}

fn log_prob(counts: &[u64], constant: f64, lnf: &LnFactorials) -> f64 {
    constant - counts.iter().map(|&x| lnf.get(x)).sum::<f64>()
}

struct Enumeration<'a> {
    lnf: &'a LnFactorials,
    col_sums: Vec<u64>,
    rows: usize,
    threshold: f64,
    constant: f64,
    budget: u128,
    visited: u128,
    extreme: f64,
    total: f64,
}

impl Enumeration<'_> {
    /// Fills column `col` row by row; `rem` holds the remaining row sums.
    fn column(&mut self, col: usize, rem: &mut [u64], acc: f64) -> bool {
        if col + 1 == self.col_sums.len() {
            // Last column is forced.
            self.visited += 1;
            if self.visited > self.budget {
                return false;
            }
            let lp = self.constant - acc - rem.iter().map(|&x| self.lnf.get(x)).sum::<f64>();
            let p = lp.exp();
            self.total += p;
            if lp <= self.threshold {
                self.extreme += p;
            }
            return true;
        }
        let left = self.col_sums[col];
        self.cell(col, 0, left, rem, acc)
    }

    fn cell(&mut self, col: usize, row: usize, left: u64, rem: &mut [u64], acc: f64) -> bool {
        if row + 1 == self.rows {
            if left > rem[row] {
                return true;
            }
            rem[row] -= left;
            let ok = self.column(col + 1, rem, acc + self.lnf.get(left));
            rem[row] += left;
            return ok;
        }
        let below: u64 = rem[row + 1..].iter().sum();
        let lo = left.saturating_sub(below);
        let hi = rem[row].min(left);
        for x in lo..=hi {
            rem[row] -= x;
            let ok = self.cell(col, row + 1, left - x, rem, acc + self.lnf.get(x));
            rem[row] += x;
            if !ok {
                return false;
            }
        }
        true
    }
}

fn enumerate_rxc(t: &ContingencyTable, lnf: &LnFactorials, budget: u128) -> Option<f64> {
    let constant = log_margin_constant(t, lnf);
    let observed = log_prob(&t.counts, constant, lnf);
    let mut e = Enumeration {
        lnf,
        col_sums: t.col_sums(),
        rows: t.rows,
        threshold: observed + PROB_RTOL.ln_1p(),
        constant,
        budget,
        visited: 0,
        extreme: 0.0,
        total: 0.0,
    };
    let mut rem = t.row_sums();
    if !e.column(0, &mut rem, 0.0) {
        return None;
    }
    Some((e.extreme / e.total).min(1.0))
}

fn monte_carlo_rxc(t: &ContingencyTable, lnf: &LnFactorials, options: &FisherOptions) -> f64 {
    let constant = log_margin_constant(t, lnf);
    let threshold = log_prob(&t.counts, constant, lnf) + PROB_RTOL.ln_1p();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..t.rows {
        for j in 0..t.cols {
            for _ in 0..t.get(i, j) {
                x.push(i as u32);
                y.push(j as u32);
            }
        }
    }
    let hits: usize = (0..options.mc_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng::substream(options.seed, rng::domain::FISHER_MC, d as u64);
            let mut yy = y.clone();
            yy.shuffle(&mut rng);
            let table = ContingencyTable::from_codes(&x, t.rows, &yy, t.cols);
            usize::from(log_prob(&table.counts, constant, lnf) <= threshold)
        })
        .sum();
    (1 + hits) as f64 / (1 + options.mc_draws) as f64
}
