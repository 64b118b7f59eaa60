//! Slow reference implementations used to check the fast paths.
//!
//! Nothing here is called by the engine. Each routine enumerates directly
//! and refuses work beyond an explicit budget.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::data::{DataMatrix, Response};
use crate::error::{Error, Result};
use crate::marginal::permutation::TIE_RTOL;
use crate::marginal::PermutationStatistic;
use crate::perm::{sample_permutations, PermutationPlan, PlanMode};

/// Default cap on enumerated items.
pub const BRUTE_BUDGET: u128 = 1_000_000;

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Rank-sum distribution of group 1 (ranks `1..=n1+n2`) by listing every
/// subset of size `n1`. Keys are rank sums, values are counts.
pub fn wilcoxon_null_by_enumeration(n1: usize, n2: usize) -> Result<BTreeMap<u64, u128>> {
    wilcoxon_null_by_enumeration_with_budget(n1, n2, BRUTE_BUDGET)
}

pub fn wilcoxon_null_by_enumeration_with_budget(n1: usize, n2: usize, budget: u128) -> Result<BTreeMap<u64, u128>> {
    let n = n1 + n2;
    if n1 == 0 || n2 == 0 || n > 63 {
        return Err(Error::invalid("enumeration needs non-empty groups and n <= 63"));
    }
    let needed = binomial(n as u64, n1 as u64);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut dist = BTreeMap::new();
    // Gosper's hack over n-bit masks with n1 bits set.
    let mut mask: u64 = (1u64 << n1) - 1;
    let limit: u64 = 1u64 << n;
    while mask < limit {
        let sum: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| i as u64 + 1).sum();
        *dist.entry(sum).or_insert(0u128) += 1;
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    Ok(dist)
}

fn two_sided(dist: &BTreeMap<u64, u128>, sum: u64) -> Ratio<u128> {
    let total: u128 = dist.values().sum();
    let lower: u128 = dist.range(..=sum).map(|(_, c)| c).sum();
    let upper: u128 = dist.range(sum..).map(|(_, c)| c).sum();
    Ratio::new((2 * lower.min(upper)).min(total), total)
}

/// Distinct two-sided p-values attainable for group sizes `(n1, n2)`, ascending.
pub fn wilcoxon_lattice_by_enumeration(n1: usize, n2: usize) -> Result<Vec<Ratio<u128>>> {
    let dist = wilcoxon_null_by_enumeration(n1, n2)?;
    let mut values: Vec<Ratio<u128>> = dist.keys().map(|&s| two_sided(&dist, s)).collect();
    values.sort();
    values.dedup();
    Ok(values)
}

/// Exact two-sided rank-sum p-value by enumeration; values must be distinct.
pub fn wilcoxon_pvalue_by_enumeration(group1: &[f64], group2: &[f64]) -> Result<Ratio<u128>> {
    let mut pooled: Vec<(f64, bool)> = group1
        .iter()
        .map(|&x| (x, true))
        .chain(group2.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pooled.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Ties { hypothesis: 0 });
    }
    let sum: u64 = pooled
        .iter()
        .enumerate()
        .filter(|(_, (_, g1))| *g1)
        .map(|(i, _)| i as u64 + 1)
        .sum();
    Ok(two_sided(&wilcoxon_null_by_enumeration(group1.len(), group2.len())?, sum))
}

/// Number of partitions of `j` into at most `parts` parts, each at most
/// `size`, by listing them.
pub fn partitions_in_box(parts: usize, size: usize, j: usize) -> u128 {
    fn walk(remaining: usize, max_part: usize, slots: usize) -> u128 {
        if remaining == 0 {
            return 1;
        }
        if slots == 0 {
            return 0;
        }
        (1..=max_part.min(remaining))
            .map(|p| walk(remaining - p, p, slots - 1))
            .sum()
    }
    walk(j, size, parts)
}

/// Two-sided 2x2 Fisher p-value summing exact hypergeometric probabilities:
/// every table with the observed margins whose probability does not exceed
/// the observed one.
pub fn fisher_2x2_exact(a: u64, b: u64, c: u64, d: u64) -> Ratio<u128> {
    let (r1, c1, n) = (a + b, a + c, a + b + c + d);
    let prob = |x: u64| Ratio::new(binomial(r1, x) * binomial(n - r1, c1 - x), binomial(n, c1));
    let lo = c1.saturating_sub(n - r1);
    let hi = r1.min(c1);
    let observed = prob(a);
    (lo..=hi)
        .map(prob)
        .filter(|p| *p <= observed)
        .fold(Ratio::from_integer(0), |acc, p| acc + p)
}

/// Every distinct ordering of a multiset of codes, lexicographically.
pub fn arrangements(codes: &[u32]) -> Vec<Vec<u32>> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_default() += 1;
    }
    let mut counts: Vec<(u32, usize)> = counts.into_iter().collect();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(codes.len());
    fn rec(counts: &mut [(u32, usize)], current: &mut Vec<u32>, n: usize, out: &mut Vec<Vec<u32>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in 0..counts.len() {
            if counts[i].1 > 0 {
                counts[i].1 -= 1;
                current.push(counts[i].0);
                rec(counts, current, n, out);
                current.pop();
                counts[i].1 += 1;
            }
        }
    }
    rec(&mut counts, &mut current, codes.len(), &mut out);
    out
}

fn pooled_abs_t(row: &[f64], in_group1: &[bool]) -> f64 {
    let g1: Vec<f64> = row.iter().zip(in_group1).filter(|(_, &g)| g).map(|(&x, _)| x).collect();
    let g2: Vec<f64> = row.iter().zip(in_group1).filter(|(_, &g)| !g).map(|(&x, _)| x).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (m1, m2) = (mean(&g1), mean(&g2));
    let grand = mean(row);
    if ss(row, grand) == 0.0 {
        return 0.0;
    }
    let (n1, n2) = (g1.len() as f64, g2.len() as f64);
    let within = ss(&g1, m1) + ss(&g2, m2);
    let sp2 = within / (n1 + n2 - 2.0);
    if sp2 <= 1e-12 * ss(row, grand) / (n1 + n2 - 2.0) {
        return if (m1 - m2).abs() <= 1e-12 * ss(row, grand).sqrt() {
            0.0
        } else {
            f64::INFINITY
        };
    }
    ((m1 - m2) / (sp2 * (1.0 / n1 + 1.0 / n2)).sqrt()).abs()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    // Average rank over every tied value, by counting.
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn abs_spearman(row: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(row), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).abs()
    }
}

fn at_least(s: f64, observed: f64) -> bool {
    s >= observed || (s - observed).abs() <= TIE_RTOL * observed.abs().max(s.abs())
}

/// Output of [`naive_two_round`].
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveTwoRound {
    /// Marginal permutation p-values of the observed data.
    pub marginal: Vec<f64>,
    /// Min-p sample for every outer resample.
    pub minp: Vec<f64>,
}

/// Permutation p-values by two nested rounds of resampling: for each outer
/// resample `gW`, each hypothesis' p-value is recomputed from a fresh inner
/// round over `gW`.
pub fn naive_two_round(
    data: &DataMatrix,
    statistic: PermutationStatistic,
    plan: &PermutationPlan,
) -> Result<NaiveTwoRound> {
    plan.validate()?;
    let response = data.response();
    let n = data.n();
    // Response as per-position values: group membership or numeric value.
    let (codes, value_of): (Vec<u32>, Vec<f64>) = match statistic {
        PermutationStatistic::AbsT => {
            let (labels, n1, n2) = response.two_groups_labels()?;
            if n1 < 2 || n2 < 2 {
                return Err(Error::precondition("both groups need at least two samples"));
            }
            (labels.codes, vec![0.0, 1.0])
        }
        PermutationStatistic::AbsSpearman => {
            let values = response.numeric_values()?;
            let mut distinct = values.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let codes = values
                .iter()
                .map(|v| distinct.iter().position(|d| d == v).unwrap() as u32)
                .collect();
            (codes, distinct)
        }
    };

    let resample_sets: Vec<Vec<u32>> = match plan.mode {
        PlanMode::Exhaustive => arrangements(&codes),
        PlanMode::Sampled { .. } => {
            let perms = sample_permutations(plan, n)?;
            perms
                .iter()
                .map(|g| g.iter().map(|&i| codes[i as usize]).collect())
                .collect()
        }
    };
    let outer = resample_sets.len() as u128;
    let needed = outer * outer * data.m() as u128;
    if needed > 100 * BRUTE_BUDGET {
        return Err(Error::BudgetExceeded {
            needed,
            budget: 100 * BRUTE_BUDGET,
        });
    }

    let stat = |row: &[f64], arrangement: &[u32]| -> f64 {
        match statistic {
            PermutationStatistic::AbsT => {
                let g1: Vec<bool> = arrangement.iter().map(|&c| c == 0).collect();
                pooled_abs_t(row, &g1)
            }
            PermutationStatistic::AbsSpearman => {
                let y: Vec<f64> = arrangement.iter().map(|&c| value_of[c as usize]).collect();
                abs_spearman(row, &y)
            }
        }
    };

    // Inner round over the resampled data `outer_codes`: the inner resample
    // set is generated afresh from the permuted labels.
    let inner_sets = |outer_codes: &[u32]| -> Result<Vec<Vec<u32>>> {
        Ok(match plan.mode {
            PlanMode::Exhaustive => arrangements(outer_codes),
            PlanMode::Sampled { .. } => sample_permutations(plan, n)?
                .iter()
                .map(|h| h.iter().map(|&i| outer_codes[i as usize]).collect())
                .collect(),
        })
    };
    let pvalue = |row: &[f64], observed_codes: &[u32], inner: &[Vec<u32>]| -> f64 {
        let t_obs = stat(row, observed_codes);
        let hits = inner.iter().filter(|h| at_least(stat(row, h), t_obs)).count();
        hits as f64 / inner.len() as f64
    };

    let observed_inner = inner_sets(&codes)?;
    let marginal = data.rows().map(|row| pvalue(row, &codes, &observed_inner)).collect();
    let mut minp = Vec::with_capacity(resample_sets.len());
    for outer_codes in &resample_sets {
        let inner = inner_sets(outer_codes)?;
        let min = data
            .rows()
            .map(|row| pvalue(row, outer_codes, &inner))
            .fold(f64::INFINITY, f64::min);
        minp.push(min);
    }
    Ok(NaiveTwoRound { marginal, minp })
}

/// Response rebuilt from an arrangement of its own codes (for tests).
pub fn response_from_codes(template: &Response, arrangement: &[u32]) -> Response {
    match template {
        Response::Categorical { levels, .. } => Response::Categorical {
            codes: arrangement.to_vec(),
            levels: levels.clone(),
        },
        Response::Numeric(values) => {
            let mut distinct = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            Response::Numeric(arrangement.iter().map(|&c| distinct[c as usize]).collect())
        }
    }
}

/// Outcome of one fast-versus-brute comparison.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, failures: Vec<String>) -> Self {
        Check {
            name: name.into(),
            passed: failures.is_empty(),
            detail: failures.join("; "),
        }
    }
}

/// Runs every fast-path/enumeration comparison that fits the budgets.
pub fn cross_checks() -> Vec<Check> {
    use crate::marginal::partitions::partition_counts;
    use crate::marginal::wilcoxon::{null_distribution, wilcoxon_lattice_exact};

    let mut checks = Vec::new();

    let mut failures = Vec::new();
    for n in (2..=12).step_by(2) {
        match (wilcoxon_lattice_exact(n), wilcoxon_lattice_by_enumeration(n / 2, n / 2)) {
            (Ok(fast), Ok(slow)) if fast == slow => {}
            (fast, slow) => failures.push(format!("n={n}: {fast:?} vs {slow:?}")),
        }
    }
    checks.push(Check::new("wilcoxon lattice = enumeration (even n <= 12)", failures));

    let mut failures = Vec::new();
    for n1 in 1..=7 {
        for n2 in 1..=7 {
            let slow = match wilcoxon_null_by_enumeration(n1, n2) {
                Ok(d) => d,
                Err(e) => {
                    failures.push(e.to_string());
                    continue;
                }
            };
            let offset = (n1 * (n1 + 1) / 2) as u64;
            match null_distribution(n1, n2) {
                Ok(fast) => {
                    let fast: BTreeMap<u64, u128> = fast
                        .counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(|(u, &c)| (u as u64 + offset, c))
                        .collect();
                    if fast != slow {
                        failures.push(format!("({n1}, {n2})"));
                    }
                }
                Err(e) => failures.push(e.to_string()),
            }
        }
    }
    checks.push(Check::new("rank-sum null = enumeration (n1, n2 <= 7)", failures));

    let mut failures = Vec::new();
    for n in 0..=8 {
        let fast = partition_counts(n, 32);
        for (j, &f) in fast.iter().enumerate() {
            let slow = partitions_in_box(n, n, j);
            if f != slow {
                failures.push(format!("q_{n}({j}) = {f}, enumeration {slow}"));
            }
        }
    }
    checks.push(Check::new("partition counts = enumeration (n <= 8, j <= 32)", failures));

    let mut failures = Vec::new();
    for t in [[1u64, 9, 11, 3], [5, 5, 5, 5], [0, 4, 3, 1], [7, 2, 1, 8], [3, 0, 0, 3]] {
        let slow = fisher_2x2_exact(t[0], t[1], t[2], t[3]);
        let table = vec![vec![t[0], t[1]], vec![t[2], t[3]]];
        let fast = crate::marginal::ContingencyTable::new(&table).and_then(|t| crate::marginal::fisher_exact(&t));
        let slow = *slow.numer() as f64 / *slow.denom() as f64;
        match fast {
            Ok(f) if (f - slow).abs() <= 1e-12 * slow.max(1e-300) => {}
            other => failures.push(format!("{t:?}: {other:?} vs {slow}")),
        }
    }
    checks.push(Check::new("2x2 Fisher = hypergeometric sum", failures));

    let mut failures = Vec::new();
    let rows = [
        vec![0.3, 1.2, -0.4, 2.2, 0.9, 1.7],
        vec![1.0, -0.5, 0.25, 0.1, 3.0, 0.7],
        vec![-1.1, 0.6, 0.2, 1.4, -0.3, 0.8],
    ];
    let two_group = DataMatrix::from_rows(Response::two_groups(3, 3), &rows);
    let numeric = DataMatrix::from_rows(Response::Numeric(vec![0.5, 2.0, -1.0, 3.5, 1.5, 0.0]), &rows);
    for (data, stat) in [
        (two_group, PermutationStatistic::AbsT),
        (numeric, PermutationStatistic::AbsSpearman),
    ] {
        let outcome = data.and_then(|d| {
            let plan = PermutationPlan::exhaustive();
            let naive = naive_two_round(&d, stat, &plan)?;
            let fast = crate::engine::shared_sweep(&d, stat, &plan)?;
            let mut a = naive.minp.clone();
            a.sort_by(f64::total_cmp);
            Ok(naive.marginal == fast.marginal && a == fast.minp.sorted())
        });
        match outcome {
            Ok(true) => {}
            Ok(false) => failures.push(format!("{stat:?} differs")),
            Err(e) => failures.push(format!("{stat:?}: {e}")),
        }
    }
    checks.push(Check::new("shared sweep = two-round permutation (n = 6, m = 3)", failures));

    checks
}
