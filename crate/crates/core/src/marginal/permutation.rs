//! Permutation t-test and Spearman permutation test.
//!
//! A permutation p-value is the fraction of resamples whose statistic is at
//! least the observed one. Statistics that agree up to floating-point
//! rounding (for instance a split and its mirror image) are grouped before
//! counting, so the p-values keep their exact lattice `{k / P}`.

use serde::{Deserialize, Serialize};

use crate::data::Response;
use crate::error::{Error, Result};
use crate::perm::{PermutationPlan, Resamples};

/// Relative tolerance under which two statistics count as tied.
pub const TIE_RTOL: f64 = 1e-9;

fn tied(leader: f64, v: f64) -> bool {
    leader == v || (leader - v).abs() <= TIE_RTOL * leader.abs().max(v.abs())
}

/// Statistics computed per hypothesis per resample in the shared sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationStatistic {
    /// Absolute pooled-variance two-sample t statistic.
    AbsT,
    /// Absolute Spearman rank correlation with a numeric response.
    AbsSpearman,
}

/// For each resample `k`, `#{l : stats[l] >= stats[k]} / P` with near-equal
/// statistics grouped.
pub fn exceedance_pvalues(stats: &[f64]) -> Vec<f64> {
    let p = stats.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; p];
    let mut start = 0;
    while start < p {
        let leader = stats[order[start]];
        let mut end = start + 1;
        while end < p && tied(leader, stats[order[end]]) {
            end += 1;
        }
        let pv = end as f64 / p as f64;
        for &k in &order[start..end] {
            out[k] = pv;
        }
        start = end;
    }
    out
}

/// `#{l : stats[l] >= observed}` with the tie tolerance.
pub fn exceedance_count(stats: &[f64], observed: f64) -> usize {
    stats
        .iter()
        .filter(|&&s| s >= observed || tied(observed, s))
        .count()
}

/// Pooled-variance t statistic pieces for a centred feature row.
#[derive(Clone, Debug)]
pub struct TwoSampleMoments {
    centered: Vec<f64>,
    n1: usize,
    n2: usize,
    total_ss: f64,
}

impl TwoSampleMoments {
    pub fn new(row: &[f64], n1: usize) -> Self {
        let n = row.len();
        let mean = row.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = row.iter().map(|x| x - mean).collect();
        let total_ss = centered.iter().map(|x| x * x).sum();
        TwoSampleMoments {
            centered,
            n1,
            n2: n - n1,
            total_ss,
        }
    }

    /// `|t|` for the split whose group-1 sample positions are given. Zero for
    /// a constant row; infinite when groups differ but are internally constant.
    pub fn abs_t(&self, group1: &[u32]) -> f64 {
        if self.total_ss == 0.0 {
            return 0.0;
        }
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let mut s1 = 0.0;
        let mut q1 = 0.0;
        for &i in group1 {
            let x = self.centered[i as usize];
            s1 += x;
            q1 += x * x;
        }
        // Row is centred, so the group-2 sum is -s1.
        let s2 = -s1;
        let q2 = self.total_ss - q1;
        let within = (q1 - s1 * s1 / n1) + (q2 - s2 * s2 / n2);
        let diff = s1 / n1 - s2 / n2;
        if within <= 1e-12 * self.total_ss {
            return if diff.abs() <= 1e-12 * self.total_ss.sqrt() {
                0.0
            } else {
                f64::INFINITY
            };
        }
        let sp2 = within / (n1 + n2 - 2.0);
        (diff / (sp2 * (1.0 / n1 + 1.0 / n2)).sqrt()).abs()
    }
}

/// Mid-ranks (1-based, ties averaged).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation pieces: centred mid-ranks of a feature and of the response.
#[derive(Clone, Debug)]
pub struct RankCorrelation {
    x: Vec<f64>,
    y: Vec<f64>,
    scale: f64,
}

impl RankCorrelation {
    pub fn new(row: &[f64], response: &[f64]) -> Self {
        let center = |r: Vec<f64>| {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.into_iter().map(|v| v - mean).collect::<Vec<f64>>()
        };
        let x = center(midranks(row));
        let y = center(midranks(response));
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        RankCorrelation {
            x,
            y,
            scale: (sxx * syy).sqrt(),
        }
    }

    /// `|rho|` between the feature and the response permuted by `g`; zero when
    /// either is constant.
    pub fn abs_rho(&self, g: &[u32]) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .x
            .iter()
            .zip(g)
            .map(|(xi, &gi)| xi * self.y[gi as usize])
            .sum();
        (s / self.scale).abs()
    }
}

fn permutation_pvalue_from_stats(stats: &[f64], observed: f64, resamples: &Resamples) -> f64 {
    match resamples.identity_index() {
        Some(k) => exceedance_pvalues(stats)[k],
        None => exceedance_count(stats, observed) as f64 / stats.len() as f64,
    }
}

/// Two-sided permutation t-test: fraction of resamples with `|t|` at least
/// the observed `|t|`.
pub fn permutation_t_pvalue(feature: &[f64], response: &Response, plan: &PermutationPlan) -> Result<f64> {
    if feature.len() != response.len() {
        return Err(Error::invalid("feature and response lengths differ"));
    }
    let (labels, n1, n2) = response.two_groups_labels()?;
    if n1 < 2 || n2 < 2 {
        return Err(Error::precondition(format!(
            "permutation t-test needs both groups of size >= 2, got {n1} and {n2}"
        )));
    }
    let resamples = Resamples::for_labels(plan, &labels)?;
    let moments = TwoSampleMoments::new(feature, n1);
    let stats: Vec<f64> = resamples
        .group_positions(&labels.codes, 0)
        .iter()
        .map(|g1| moments.abs_t(g1))
        .collect();
    let observed_g1: Vec<u32> = (0..feature.len() as u32)
        .filter(|&i| labels.codes[i as usize] == 0)
        .collect();
    Ok(permutation_pvalue_from_stats(&stats, moments.abs_t(&observed_g1), &resamples))
}

/// Two-sided Spearman permutation test of association with a numeric response.
pub fn spearman_pvalue(feature: &[f64], response: &[f64], plan: &PermutationPlan) -> Result<f64> {
    let n = feature.len();
    if n != response.len() {
        return Err(Error::invalid("feature and response lengths differ"));
    }
    if n < 3 {
        return Err(Error::precondition(format!("Spearman test needs n >= 3, got {n}")));
    }
    let corr = RankCorrelation::new(feature, response);
    if corr.scale == 0.0 {
        return Ok(1.0);
    }
    let (codes, _) = crate::data::dense_codes(response);
    let resamples = Resamples::for_codes(plan, &codes)?;
    let stats: Vec<f64> = resamples.iter().map(|g| corr.abs_rho(g)).collect();
    let identity: Vec<u32> = (0..n as u32).collect();
    Ok(permutation_pvalue_from_stats(&stats, corr.abs_rho(&identity), &resamples))
}
