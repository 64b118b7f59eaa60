//! Traversal of the permutation group acting on the response row.
//!
//! A resample is stored as an index permutation `g` with `(gW).y[i] = W.y[g[i]]`.
//! Exhaustive plans enumerate each distinct rearrangement of the response
//! once (for a two-label response, each of the `C(n, n1)` label assignments);
//! every distinct rearrangement corresponds to equally many of the `n!`
//! permutations, so uniform weight over the enumeration reproduces the full
//! group average. Sampled plans draw full permutations uniformly from
//! counter-based substreams keyed by `(seed, index)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{Error, Result};
use crate::par::*;
use crate::rng;

/// Largest number of rearrangements an exhaustive plan will enumerate.
pub const EXHAUSTIVE_BUDGET: u128 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlanMode {
    Exhaustive,
    Sampled { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PlanMode,
    pub seed: u64,
    /// Prepend the identity to a sampled plan so the observed data is part of
    /// its own reference set. Ignored in exhaustive mode, where the observed
    /// arrangement is always enumerated.
    pub include_identity: bool,
}

impl PermutationPlan {
    pub fn sampled(count: usize, seed: u64) -> Self {
        PermutationPlan {
            mode: PlanMode::Sampled { count },
            seed,
            include_identity: true,
        }
    }

    pub fn exhaustive() -> Self {
        PermutationPlan {
            mode: PlanMode::Exhaustive,
            seed: 0,
            include_identity: true,
        }
    }

    /// A plan containing only the identity.
    pub fn identity_only() -> Self {
        Self::sampled(0, 0)
    }

    pub fn without_identity(mut self) -> Self {
        self.include_identity = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PlanMode::Sampled { count: 0 } if !self.include_identity => Err(Error::invalid(
                "sampled plan needs at least one permutation",
            )),
            _ => Ok(()),
        }
    }
}

/// A materialised set of resamples, `len() * n` indices stored contiguously.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resamples {
    n: usize,
    indices: Vec<u32>,
    identity_index: Option<usize>,
    exhaustive: bool,
}

impl Resamples {
    /// Resamples of a response with the given labels. Exhaustive plans
    /// enumerate distinct label arrangements; sampled plans ignore the labels.
    pub fn for_labels(plan: &PermutationPlan, labels: &Labels) -> Result<Self> {
        plan.validate()?;
        match plan.mode {
            PlanMode::Exhaustive => Self::exhaustive_for_codes(&labels.codes, EXHAUSTIVE_BUDGET),
            PlanMode::Sampled { .. } => sample_permutations(plan, labels.codes.len()),
        }
    }

    /// Resamples of a response whose every value is distinct (e.g. numeric,
    /// where the exhaustive plan ranges over all `n!` orderings).
    pub fn for_codes(plan: &PermutationPlan, codes: &[u32]) -> Result<Self> {
        plan.validate()?;
        match plan.mode {
            PlanMode::Exhaustive => Self::exhaustive_for_codes(codes, EXHAUSTIVE_BUDGET),
            PlanMode::Sampled { .. } => sample_permutations(plan, codes.len()),
        }
    }

    fn exhaustive_for_codes(codes: &[u32], budget: u128) -> Result<Self> {
        let n = codes.len();
        let arrangements = enumerate_arrangements(codes, budget)?;
        let max_code = codes.iter().copied().max().unwrap_or(0) as usize;
        let mut positions: Vec<Vec<u32>> = vec![Vec::new(); max_code + 1];
        for (i, &c) in codes.iter().enumerate() {
            positions[c as usize].push(i as u32);
        }
        let mut indices = Vec::with_capacity(arrangements.len() * n);
        let mut identity_index = None;
        let mut cursor = vec![0usize; max_code + 1];
        for (k, arrangement) in arrangements.iter().enumerate() {
            cursor.iter_mut().for_each(|c| *c = 0);
            let start = indices.len();
            for &c in arrangement {
                let c = c as usize;
                indices.push(positions[c][cursor[c]]);
                cursor[c] += 1;
            }
            if identity_index.is_none() && indices[start..].iter().enumerate().all(|(i, &g)| g as usize == i) {
                identity_index = Some(k);
            }
        }
        Ok(Resamples {
            n,
            indices,
            identity_index,
            exhaustive: true,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, k: usize) -> &[u32] {
        &self.indices[k * self.n..(k + 1) * self.n]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, u32> {
        self.indices.chunks(self.n)
    }

    /// Position of the identity permutation, when it is part of the set.
    pub fn identity_index(&self) -> Option<usize> {
        self.identity_index
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// For each resample, the sample positions that receive group-1 labels
    /// (code 0) after permuting `codes`.
    pub fn group_positions(&self, codes: &[u32], group: u32) -> Vec<Vec<u32>> {
        self.iter()
            .map(|g| {
                g.iter()
                    .enumerate()
                    .filter(|(_, &src)| codes[src as usize] == group)
                    .map(|(i, _)| i as u32)
                    .collect()
            })
            .collect()
    }
}

/// Draws the permutations of a sampled plan (or enumerates all `n!` in
/// exhaustive mode). Permutation `k` depends only on `(seed, k)`.
pub fn sample_permutations(plan: &PermutationPlan, n: usize) -> Result<Resamples> {
    plan.validate()?;
    match plan.mode {
        PlanMode::Exhaustive => {
            let codes: Vec<u32> = (0..n as u32).collect();
            Resamples::exhaustive_for_codes(&codes, EXHAUSTIVE_BUDGET)
        }
        PlanMode::Sampled { count } => {
            let drawn: Vec<Vec<u32>> = (0..count)
                .into_par_iter()
                .map(|k| random_permutation(plan.seed, k as u64, n))
                .collect();
            let mut indices = Vec::with_capacity((count + 1) * n);
            if plan.include_identity {
                indices.extend(0..n as u32);
            }
            for g in drawn {
                indices.extend(g);
            }
            Ok(Resamples {
                n,
                indices,
                identity_index: plan.include_identity.then_some(0),
                exhaustive: false,
            })
        }
    }
}

/// The `k`-th permutation of the stream keyed by `seed`.
pub fn random_permutation(seed: u64, k: u64, n: usize) -> Vec<u32> {
    let mut rng = rng::substream(seed, rng::domain::PERMUTATION, k);
    let mut g: Vec<u32> = (0..n as u32).collect();
    g.shuffle(&mut rng);
    g
}

/// All distinct binary label assignments with `n1` samples in group 1
/// (code 0), in lexicographic order.
pub fn enumerate_assignments(n: usize, n1: usize) -> Result<Vec<Vec<u32>>> {
    if n1 == 0 || n1 >= n {
        return Err(Error::invalid(format!("group size {n1} out of range for n = {n}")));
    }
    let mut codes = vec![0u32; n1];
    codes.resize(n, 1);
    enumerate_arrangements(&codes, EXHAUSTIVE_BUDGET)
}

/// All distinct rearrangements of a multiset of codes, in lexicographic order.
pub fn enumerate_arrangements(codes: &[u32], budget: u128) -> Result<Vec<Vec<u32>>> {
    let needed = multinomial(codes).ok_or(Error::BudgetExceeded {
        needed: u128::MAX,
        budget,
    })?;
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut current = codes.to_vec();
    current.sort_unstable();
    let mut out = Vec::with_capacity(needed as usize);
    loop {
        out.push(current.clone());
        if !next_permutation(&mut current) {
            break;
        }
    }
    Ok(out)
}

/// Advances to the next lexicographic arrangement; false after the last one.
fn next_permutation(v: &mut [u32]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) / (i + 1) is exact since r = C(n, i).
        let num = r.checked_mul((n - i) as u128)?;
        r = num / (i + 1) as u128;
    }
    Some(r)
}

/// Number of distinct rearrangements of a multiset, `None` on overflow.
pub fn multinomial(codes: &[u32]) -> Option<u128> {
    let mut counts = std::collections::BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0u64) += 1;
    }
    let mut total = 0u64;
    let mut result: u128 = 1;
    for &c in counts.values() {
        total += c;
        result = result.checked_mul(binomial(total, c)?)?;
    }
    Some(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn assignment_counts() {
        assert_eq!(enumerate_assignments(4, 2).unwrap().len(), 6);
        assert_eq!(enumerate_assignments(2, 1).unwrap().len(), 2);
        assert_eq!(enumerate_assignments(6, 3).unwrap().len(), 20);
        assert_eq!(enumerate_assignments(3, 1).unwrap().len(), 3);
        assert!(enumerate_assignments(4, 0).is_err());
        assert!(enumerate_assignments(4, 4).is_err());
    }

    #[test]
    fn assignments_are_distinct_up_to_n12() {
        for n in 2..=12 {
            for n1 in 1..n {
                let all = enumerate_assignments(n, n1).unwrap();
                let set: HashSet<_> = all.iter().cloned().collect();
                assert_eq!(set.len(), all.len());
                assert_eq!(all.len() as u128, binomial(n as u64, n1 as u64).unwrap());
                assert!(all.iter().all(|a| a.iter().filter(|&&c| c == 0).count() == n1));
            }
        }
    }

    #[test]
    fn exhaustive_resamples_contain_identity() {
        let labels = Labels {
            codes: vec![1, 0, 1, 0, 0],
            n_levels: 2,
        };
        let r = Resamples::for_labels(&PermutationPlan::exhaustive(), &labels).unwrap();
        assert_eq!(r.len(), 10);
        let id = r.identity_index().unwrap();
        assert_eq!(r.get(id), &[0, 1, 2, 3, 4]);
        let arrangements: HashSet<Vec<u32>> = r
            .iter()
            .map(|g| g.iter().map(|&i| labels.codes[i as usize]).collect())
            .collect();
        assert_eq!(arrangements.len(), 10);
    }

    #[test]
    fn sampled_plan_is_deterministic() {
        let plan = PermutationPlan::sampled(50, 7);
        let a = sample_permutations(&plan, 9).unwrap();
        let b = sample_permutations(&plan, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
        assert_eq!(a.get(0), &(0..9).collect::<Vec<u32>>()[..]);
        let other = sample_permutations(&PermutationPlan::sampled(50, 8), 9).unwrap();
        assert_ne!(a, other);
        for g in a.iter() {
            let mut s = g.to_vec();
            s.sort_unstable();
            assert_eq!(s, (0..9).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn plan_validation() {
        assert!(PermutationPlan::sampled(0, 1).without_identity().validate().is_err());
        assert!(PermutationPlan::identity_only().validate().is_ok());
        let r = sample_permutations(&PermutationPlan::identity_only(), 4).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn budget_is_enforced() {
        let codes: Vec<u32> = (0..12).collect();
        assert!(matches!(
            enumerate_arrangements(&codes, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), Some(6));
        assert_eq!(binomial(12, 6), Some(924));
        assert_eq!(binomial(100, 50), Some(100891344545564193334812497256));
        assert_eq!(multinomial(&[0, 0, 1, 2]), Some(12));
    }
}
