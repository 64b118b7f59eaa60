//! Exact two-sided Wilcoxon rank-sum test.
//!
//! The null distribution of the Mann-Whitney count `U = R1 - n1(n1+1)/2` is
//! tabulated in exact integer arithmetic; p-values are the doubled smaller
//! tail, capped at 1.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_rational::Ratio;

use super::partitions::partition_counts;
use crate::error::{Error, Result};
use crate::lattice::PValueLattice;
use crate::perm::binomial;

/// Null distribution of `U` for group sizes `(n1, n2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankSumNull {
    pub n1: usize,
    pub n2: usize,
    /// `counts[u]` = number of assignments with `U = u`, `u = 0..=n1*n2`.
    pub counts: Vec<u128>,
    pub total: u128,
    lower: Vec<u128>,
    upper: Vec<u128>,
}

impl RankSumNull {
    /// Tabulates the distribution by adding samples in increasing rank order:
    /// the `k`-th group-1 sample at rank `i` has `i - k` group-2 samples below it.
    pub fn compute(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::precondition("Wilcoxon test needs two nonempty groups"));
        }
        let n = n1 + n2;
        let max_u = n1 * n2;
        let width = max_u + 1;
        // dp[k * width + u]: ways to choose k of the ranks seen so far with count u.
        let mut dp = vec![0u128; (n1 + 1) * width];
        dp[0] = 1;
        for i in 1..=n {
            let k_hi = i.min(n1);
            let k_lo = n1.saturating_sub(n - i).max(1);
            for k in (k_lo..=k_hi).rev() {
                let shift = i - k;
                if shift > n2 {
                    continue;
                }
                for u in (shift..width).rev() {
                    let add = dp[(k - 1) * width + u - shift];
                    if add != 0 {
                        let cell = &mut dp[k * width + u];
                        *cell = cell.checked_add(add).ok_or_else(|| {
                            Error::Overflow(format!("rank-sum counts for ({n1}, {n2})"))
                        })?;
                    }
                }
            }
        }
        let counts = dp[n1 * width..].to_vec();
        let total = counts
            .iter()
            .try_fold(0u128, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::Overflow(format!("rank-sum total for ({n1}, {n2})")))?;
        let mut lower = Vec::with_capacity(width);
        let mut acc = 0u128;
        for &c in &counts {
            acc += c;
            lower.push(acc);
        }
        let mut upper = vec![0u128; width];
        let mut acc = 0u128;
        for u in (0..width).rev() {
            acc += counts[u];
            upper[u] = acc;
        }
        Ok(RankSumNull {
            n1,
            n2,
            counts,
            total,
            lower,
            upper,
        })
    }

    pub fn max_u(&self) -> usize {
        self.n1 * self.n2
    }

    /// Numerator over `total` of the two-sided p-value at `u`: the number of
    /// assignments at least as extreme, doubled, capped at `total`.
    pub fn pvalue_count(&self, u: usize) -> u128 {
        let tail = self.lower[u].min(self.upper[u]);
        tail.saturating_mul(2).min(self.total)
    }

    pub fn pvalue_exact(&self, u: usize) -> Ratio<u128> {
        Ratio::new(self.pvalue_count(u), self.total)
    }

    pub fn pvalue(&self, u: usize) -> f64 {
        self.pvalue_count(u) as f64 / self.total as f64
    }

    /// p-value for every `u`, indexed by `u`.
    pub fn pvalue_table(&self) -> Vec<f64> {
        (0..=self.max_u()).map(|u| self.pvalue(u)).collect()
    }

    /// Distinct attainable p-values as exact fractions, ascending.
    pub fn lattice_exact(&self) -> Vec<Ratio<u128>> {
        let mut counts: Vec<u128> = (0..=self.max_u()).map(|u| self.pvalue_count(u)).collect();
        counts.sort_unstable();
        counts.dedup();
        counts.into_iter().map(|c| Ratio::new(c, self.total)).collect()
    }

    pub fn lattice(&self) -> PValueLattice {
        let mut counts: Vec<u128> = (0..=self.max_u()).map(|u| self.pvalue_count(u)).collect();
        counts.sort_unstable();
        counts.dedup();
        PValueLattice::new(counts.into_iter().map(|c| c as f64 / self.total as f64).collect())
            .expect("Wilcoxon p-values lie in (0, 1]")
    }
}

type NullCache = RwLock<HashMap<(usize, usize), Arc<RankSumNull>>>;

/// Memoised null distribution for `(n1, n2)`; safe for concurrent lookup.
pub fn null_distribution(n1: usize, n2: usize) -> Result<Arc<RankSumNull>> {
    static CACHE: OnceLock<NullCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.read().unwrap().get(&(n1, n2)) {
        return Ok(Arc::clone(hit));
    }
    let table = Arc::new(RankSumNull::compute(n1, n2)?);
    cache
        .write()
        .unwrap()
        .entry((n1, n2))
        .or_insert_with(|| Arc::clone(&table));
    Ok(table)
}

/// Ranks `1..=n` of the values, or `None` if any two are equal.
pub fn strict_ranks(values: &[f64]) -> Option<Vec<u32>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    if order.windows(2).any(|w| values[w[0]] == values[w[1]]) {
        return None;
    }
    let mut ranks = vec![0u32; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as u32 + 1;
    }
    Some(ranks)
}

/// Mann-Whitney count from a group-1 rank sum.
pub fn u_from_rank_sum(rank_sum: u64, n1: usize) -> usize {
    (rank_sum - (n1 * (n1 + 1) / 2) as u64) as usize
}

/// Exact two-sided Wilcoxon rank-sum p-value; ties are an error.
pub fn wilcoxon_pvalue(group1: &[f64], group2: &[f64]) -> Result<f64> {
    let (null, u) = observed_u(group1, group2)?;
    Ok(null.pvalue(u))
}

/// As [`wilcoxon_pvalue`], as an exact fraction.
pub fn wilcoxon_pvalue_exact(group1: &[f64], group2: &[f64]) -> Result<Ratio<u128>> {
    let (null, u) = observed_u(group1, group2)?;
    Ok(null.pvalue_exact(u))
}

fn observed_u(group1: &[f64], group2: &[f64]) -> Result<(Arc<RankSumNull>, usize)> {
    let (n1, n2) = (group1.len(), group2.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::precondition("Wilcoxon test needs two nonempty groups"));
    }
    let pooled: Vec<f64> = group1.iter().chain(group2).copied().collect();
    let ranks = strict_ranks(&pooled).ok_or(Error::Ties { hypothesis: 0 })?;
    let rank_sum: u64 = ranks[..n1].iter().map(|&r| r as u64).sum();
    Ok((null_distribution(n1, n2)?, u_from_rank_sum(rank_sum, n1)))
}

/// Values `s_0 < ... < s_{r_n}` from the partition-count formula
/// `s_i = 2 C(n, n/2)^{-1} sum_{j<=i} q_{n/2}(j)`, `s_{r_n} = 1`, with
/// `r_n = floor(n^2 / 8 + 1)`, before any capping.
pub fn lattice_formula_raw(n: usize) -> Result<Vec<Ratio<u128>>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "equal-split lattice formula needs even n >= 2, got {n}"
        )));
    }
    let half = n / 2;
    let r_n = n * n / 8 + 1;
    let total = binomial(n as u64, half as u64)
        .ok_or_else(|| Error::Overflow(format!("C({n}, {half})")))?;
    let q = partition_counts(half, r_n.saturating_sub(1));
    let mut out = Vec::with_capacity(r_n + 1);
    let mut cum = 0u128;
    for qj in q.iter().take(r_n) {
        cum += qj;
        let num = cum
            .checked_mul(2)
            .ok_or_else(|| Error::Overflow("lattice numerator".into()))?;
        out.push(Ratio::new(num, total));
    }
    out.push(Ratio::from_integer(1));
    Ok(out)
}

/// Exact lattice of attainable two-sided p-values for equal groups of `n/2`:
/// formula values capped at 1 and deduplicated.
pub fn wilcoxon_lattice_exact(n: usize) -> Result<Vec<Ratio<u128>>> {
    let one = Ratio::from_integer(1u128);
    let mut values: Vec<Ratio<u128>> = lattice_formula_raw(n)?
        .into_iter()
        .map(|s| if s > one { one } else { s })
        .collect();
    values.dedup();
    Ok(values)
}

pub fn wilcoxon_lattice(n: usize) -> Result<PValueLattice> {
    let values = wilcoxon_lattice_exact(n)?
        .into_iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect();
    PValueLattice::new(values)
}

/// `2 (n/2)! (n/2)! / n!`, the smallest two-sided p-value for equal groups.
pub fn smallest_pvalue(n: usize) -> Result<Ratio<u128>> {
    let total = binomial(n as u64, (n / 2) as u64)
        .ok_or_else(|| Error::Overflow(format!("C({n}, {})", n / 2)))?;
    Ok(Ratio::new(2, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let null = RankSumNull::compute(2, 2).unwrap();
        assert_eq!(null.counts, vec![1, 1, 2, 1, 1]);
        assert_eq!(null.total, 6);
        assert_eq!(wilcoxon_pvalue_exact(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), Ratio::new(1, 3));
        // Rank sum 5 is the centre.
        assert_eq!(wilcoxon_pvalue(&[0.1, 0.4], &[0.2, 0.3]).unwrap(), 1.0);
    }

    #[test]
    fn lattices() {
        let l4 = wilcoxon_lattice_exact(4).unwrap();
        assert_eq!(l4, vec![Ratio::new(1, 3), Ratio::new(2, 3), Ratio::from_integer(1)]);
        assert_eq!(wilcoxon_lattice(2).unwrap().values(), &[1.0]);
        assert_eq!(wilcoxon_lattice_exact(12).unwrap()[0], Ratio::new(2, 924));
        assert!(wilcoxon_lattice(5).is_err());
    }

    #[test]
    fn formula_matches_table_for_equal_groups() {
        for n in (2..=30).step_by(2) {
            let table = RankSumNull::compute(n / 2, n / 2).unwrap();
            assert_eq!(wilcoxon_lattice_exact(n).unwrap(), table.lattice_exact(), "n = {n}");
        }
    }

    #[test]
    fn unequal_groups_total() {
        let null = RankSumNull::compute(3, 7).unwrap();
        assert_eq!(null.total, 120);
        assert_eq!(null.counts.len(), 22);
        // Symmetric distribution.
        let rev: Vec<u128> = null.counts.iter().rev().copied().collect();
        assert_eq!(rev, null.counts);
    }

    #[test]
    fn ties_and_empty_groups() {
        assert!(matches!(
            wilcoxon_pvalue(&[1.0, 2.0], &[2.0, 3.0]),
            Err(Error::Ties { .. })
        ));
        assert!(wilcoxon_pvalue(&[], &[1.0]).is_err());
    }

    #[test]
    fn smallest_is_bounded() {
        for n in (2..=60).step_by(2) {
            let s = smallest_pvalue(n).unwrap();
            let s = *s.numer() as f64 / *s.denom() as f64;
            assert!(s <= 2f64.powi(-(n as i32) / 2 + 1) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn large_groups_fit() {
        let null = null_distribution(50, 50).unwrap();
        assert_eq!(null.total, binomial(100, 50).unwrap());
        assert!(RankSumNull::compute(70, 70).is_err());
    }
}
