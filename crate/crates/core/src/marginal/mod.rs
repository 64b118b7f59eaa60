//! Per-hypothesis marginal tests `p_j(W)`.
//!
//! Every test here depends only on the response row and its own feature row,
//! and its p-value is exactly uniform on its lattice under the permutation
//! distribution, so the min-p machinery in [`crate::engine`] applies to all of
//! them.

pub mod fisher;
pub mod partitions;
pub mod permutation;
pub mod wilcoxon;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{dense_codes, DataMatrix};
use crate::error::{Error, Result};
use crate::lattice::PValueLattice;
use crate::par::*;
use crate::perm::{PermutationPlan, Resamples};

pub use fisher::{fisher_exact, fisher_exact_pvalue, ContingencyTable, FisherOptions, FisherOutcome};
pub use partitions::{partition_count, partition_counts};
pub use permutation::{permutation_t_pvalue, spearman_pvalue, PermutationStatistic};
pub use wilcoxon::{wilcoxon_lattice, wilcoxon_lattice_exact, wilcoxon_pvalue, RankSumNull};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Wilcoxon,
    #[serde(rename = "perm-t")]
    PermutationT,
    Spearman,
    #[serde(rename = "fisher")]
    FisherExact,
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilcoxon" => Ok(TestKind::Wilcoxon),
            "perm-t" | "permutation-t" => Ok(TestKind::PermutationT),
            "spearman" => Ok(TestKind::Spearman),
            "fisher" | "fisher-exact" => Ok(TestKind::FisherExact),
            other => Err(Error::invalid(format!("unknown test '{other}'"))),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Wilcoxon => "wilcoxon",
            TestKind::PermutationT => "perm-t",
            TestKind::Spearman => "spearman",
            TestKind::FisherExact => "fisher",
        })
    }
}

/// What the Wilcoxon test does when pooled values tie.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Ties are an error.
    #[default]
    Strict,
    /// Tied rows fall back to the permutation t-test on mid-ranks.
    Permissive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalTest {
    pub kind: TestKind,
    pub tie_policy: TiePolicy,
    /// Resamples used when a permutation-based p-value is computed on its own
    /// (outside a Westfall-Young sweep, which reuses its own plan).
    pub inner_plan: PermutationPlan,
    pub fisher: FisherOptions,
}

impl MarginalTest {
    pub fn new(kind: TestKind) -> Self {
        MarginalTest {
            kind,
            tie_policy: TiePolicy::Strict,
            inner_plan: PermutationPlan::sampled(999, 0),
            fisher: FisherOptions::default(),
        }
    }

    pub fn wilcoxon() -> Self {
        Self::new(TestKind::Wilcoxon)
    }

    pub fn permutation_t(inner_plan: PermutationPlan) -> Self {
        MarginalTest {
            inner_plan,
            ..Self::new(TestKind::PermutationT)
        }
    }

    pub fn spearman(inner_plan: PermutationPlan) -> Self {
        MarginalTest {
            inner_plan,
            ..Self::new(TestKind::Spearman)
        }
    }

    pub fn fisher() -> Self {
        Self::new(TestKind::FisherExact)
    }

    pub fn with_tie_policy(mut self, tie_policy: TiePolicy) -> Self {
        self.tie_policy = tie_policy;
        self
    }

    /// Whether the p-value itself is a permutation count over the plan.
    pub fn is_resampling(&self) -> bool {
        matches!(self.kind, TestKind::PermutationT | TestKind::Spearman)
    }

    /// Binds the test to a data set and resample plan.
    pub fn prepare(&self, data: &DataMatrix, plan: &PermutationPlan) -> Result<PreparedTest> {
        PreparedTest::new(*self, data, plan)
    }

    /// Observed p-value of hypothesis `j`.
    pub fn pvalue(&self, data: &DataMatrix, j: usize) -> Result<f64> {
        if j >= data.m() {
            return Err(Error::invalid(format!("hypothesis {j} out of range")));
        }
        let prepared = self.prepare(data, &self.standalone_plan())?;
        let mut scratch = vec![0.0; prepared.resamples().len()];
        prepared.evaluate_row(j, data.row(j), &mut scratch)
    }

    /// Observed p-values of every hypothesis.
    pub fn raw_pvalues(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        let prepared = self.prepare(data, &self.standalone_plan())?;
        prepared.raw_pvalues(data)
    }

    fn standalone_plan(&self) -> PermutationPlan {
        let tie_fallback = self.kind == TestKind::Wilcoxon && self.tie_policy == TiePolicy::Permissive;
        if self.is_resampling() || tie_fallback {
            self.inner_plan
        } else {
            PermutationPlan::identity_only()
        }
    }
}

enum Kernel {
    Wilcoxon {
        null: Arc<RankSumNull>,
        table: Vec<f64>,
        group1: Vec<Vec<u32>>,
        observed: Vec<u32>,
        n1: usize,
        tie_policy: TiePolicy,
    },
    PermutationT {
        group1: Vec<Vec<u32>>,
        observed: Vec<u32>,
        n1: usize,
    },
    Spearman {
        response: Vec<f64>,
    },
    Fisher {
        permuted: Vec<Vec<u32>>,
        observed: Vec<u32>,
        levels: usize,
        options: FisherOptions,
    },
}

/// A marginal test bound to data and a resample set: evaluates `p_j(g W)` for
/// every resample `g` of one hypothesis row at a time.
pub struct PreparedTest {
    test: MarginalTest,
    resamples: Resamples,
    kernel: Kernel,
}

impl PreparedTest {
    fn new(test: MarginalTest, data: &DataMatrix, plan: &PermutationPlan) -> Result<Self> {
        let response = data.response();
        let (resamples, kernel) = match test.kind {
            TestKind::Wilcoxon | TestKind::PermutationT => {
                let (labels, n1, n2) = response.two_groups_labels()?;
                if test.kind == TestKind::PermutationT && (n1 < 2 || n2 < 2) {
                    return Err(Error::precondition(format!(
                        "permutation t-test needs both groups of size >= 2, got {n1} and {n2}"
                    )));
                }
                let resamples = Resamples::for_labels(plan, &labels)?;
                let group1 = resamples.group_positions(&labels.codes, 0);
                let observed = (0..labels.codes.len() as u32)
                    .filter(|&i| labels.codes[i as usize] == 0)
                    .collect();
                let kernel = if test.kind == TestKind::Wilcoxon {
                    let null = wilcoxon::null_distribution(n1, n2)?;
                    Kernel::Wilcoxon {
                        table: null.pvalue_table(),
                        null,
                        group1,
                        observed,
                        n1,
                        tie_policy: test.tie_policy,
                    }
                } else {
                    Kernel::PermutationT { group1, observed, n1 }
                };
                (resamples, kernel)
            }
            TestKind::Spearman => {
                let values = response.numeric_values()?.to_vec();
                if values.len() < 3 {
                    return Err(Error::precondition("Spearman test needs n >= 3"));
                }
                let (codes, _) = dense_codes(&values);
                (Resamples::for_codes(plan, &codes)?, Kernel::Spearman { response: values })
            }
            TestKind::FisherExact => {
                let labels = response.labels();
                let resamples = Resamples::for_labels(plan, &labels)?;
                let permuted = resamples
                    .iter()
                    .map(|g| g.iter().map(|&i| labels.codes[i as usize]).collect())
                    .collect();
                let kernel = Kernel::Fisher {
                    permuted,
                    observed: labels.codes.clone(),
                    levels: labels.n_levels,
                    options: test.fisher,
                };
                (resamples, kernel)
            }
        };
        Ok(PreparedTest {
            test,
            resamples,
            kernel,
        })
    }

    pub fn test(&self) -> &MarginalTest {
        &self.test
    }

    pub fn resamples(&self) -> &Resamples {
        &self.resamples
    }

    /// Lattice shared by every hypothesis, when the test has one in closed form.
    pub fn common_lattice(&self) -> Option<PValueLattice> {
        match &self.kernel {
            Kernel::Wilcoxon { null, tie_policy, .. } => {
                let lattice = null.lattice();
                Some(match tie_policy {
                    TiePolicy::Strict => lattice,
                    TiePolicy::Permissive => lattice.union(&PValueLattice::uniform(self.resamples.len())),
                })
            }
            Kernel::PermutationT { .. } | Kernel::Spearman { .. } => {
                Some(PValueLattice::uniform(self.resamples.len()))
            }
            Kernel::Fisher { .. } => None,
        }
    }

    /// Writes `p_j(g_k W)` for every resample `k` into `out` and returns the
    /// observed `p_j(W)`.
    pub fn evaluate_row(&self, j: usize, row: &[f64], out: &mut [f64]) -> Result<f64> {
        debug_assert_eq!(out.len(), self.resamples.len());
        match &self.kernel {
            Kernel::Wilcoxon {
                null,
                table,
                group1,
                observed,
                n1,
                tie_policy,
            } => match wilcoxon::strict_ranks(row) {
                Some(ranks) => {
                    let u_of = |pos: &[u32]| {
                        let sum: u64 = pos.iter().map(|&i| ranks[i as usize] as u64).sum();
                        wilcoxon::u_from_rank_sum(sum, *n1)
                    };
                    for (o, g1) in out.iter_mut().zip(group1) {
                        *o = table[u_of(g1)];
                    }
                    Ok(null.pvalue(u_of(observed)))
                }
                None if *tie_policy == TiePolicy::Permissive => {
                    let ranks = permutation::midranks(row);
                    Ok(self.t_row(&ranks, group1, observed, *n1, out))
                }
                None => Err(Error::Ties { hypothesis: j }),
            },
            Kernel::PermutationT { group1, observed, n1 } => Ok(self.t_row(row, group1, observed, *n1, out)),
            Kernel::Spearman { response } => {
                let corr = permutation::RankCorrelation::new(row, response);
                let stats: Vec<f64> = self.resamples.iter().map(|g| corr.abs_rho(g)).collect();
                let identity: Vec<u32> = (0..row.len() as u32).collect();
                Ok(self.finish_permutation_row(&stats, corr.abs_rho(&identity), out))
            }
            Kernel::Fisher {
                permuted,
                observed,
                levels,
                options,
            } => {
                let (x, x_levels) = dense_codes(row);
                let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
                let mut eval = |y: &[u32]| -> Result<f64> {
                    let table = ContingencyTable::from_codes(&x, x_levels, y, *levels);
                    let key: Vec<u64> = (0..x_levels)
                        .flat_map(|a| (0..*levels).map(move |b| (a, b)))
                        .map(|(a, b)| table.get(a, b))
                        .collect();
                    if let Some(&p) = cache.get(&key) {
                        return Ok(p);
                    }
                    let p = fisher_exact_pvalue(&table, options)?.pvalue;
                    cache.insert(key, p);
                    Ok(p)
                };
                for (o, y) in out.iter_mut().zip(permuted) {
                    *o = eval(y)?;
                }
                eval(observed)
            }
        }
    }

    fn t_row(&self, row: &[f64], group1: &[Vec<u32>], observed: &[u32], n1: usize, out: &mut [f64]) -> f64 {
        let moments = permutation::TwoSampleMoments::new(row, n1);
        let stats: Vec<f64> = group1.iter().map(|g1| moments.abs_t(g1)).collect();
        self.finish_permutation_row(&stats, moments.abs_t(observed), out)
    }

    fn finish_permutation_row(&self, stats: &[f64], observed: f64, out: &mut [f64]) -> f64 {
        let pvals = permutation::exceedance_pvalues(stats);
        out.copy_from_slice(&pvals);
        match self.resamples.identity_index() {
            Some(k) => pvals[k],
            None => permutation::exceedance_count(stats, observed) as f64 / stats.len() as f64,
        }
    }

    /// Observed p-values of all rows, in parallel over hypotheses.
    pub fn raw_pvalues(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        let p = self.resamples.len();
        (0..data.m())
            .into_par_iter()
            .map(|j| {
                let mut scratch = vec![0.0; p];
                self.evaluate_row(j, data.row(j), &mut scratch)
            })
            .collect()
    }
}
