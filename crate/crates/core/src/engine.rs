//! Westfall-Young single-step and step-down procedures.
//!
//! One sweep evaluates every hypothesis under every resample and keeps the
//! `m x P` matrix of permuted p-values. For permutation-based marginal tests
//! the marginal p-value of hypothesis `j` under resample `k` is the rank of its
//! statistic within row `j` of the same sweep, so no inner round of
//! permutations is needed. The min-p distribution, the threshold
//! `c = max{ s in S : P*(min_j p_j <= s) <= alpha }` and the adjusted p-values
//! are all read off that matrix.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::Result;
use crate::lattice::PValueLattice;
use crate::marginal::{MarginalTest, PermutationStatistic, TestKind};
use crate::par::*;
use crate::perm::PermutationPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bonferroni,
    Holm,
    OracleSingleStep,
    OracleStepDown,
    WySingleStep,
    WyStepDown,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bonferroni,
        Method::Holm,
        Method::OracleSingleStep,
        Method::OracleStepDown,
        Method::WySingleStep,
        Method::WyStepDown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::Holm => "holm",
            Method::OracleSingleStep => "oracle_single_step",
            Method::OracleStepDown => "oracle_step_down",
            Method::WySingleStep => "wy_single_step",
            Method::WyStepDown => "wy_step_down",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one multiple-testing procedure on one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentResult {
    pub method: Method,
    pub alpha: f64,
    /// Common rejection threshold on the raw p-values. For the step-down
    /// variants this is the first-step (single-step) threshold.
    pub threshold: f64,
    pub raw_pvalues: Vec<f64>,
    pub adjusted_pvalues: Vec<f64>,
    /// Rejected hypotheses, ascending.
    pub rejections: Vec<usize>,
}

impl AdjustmentResult {
    pub fn is_rejected(&self, j: usize) -> bool {
        self.rejections.binary_search(&j).is_ok()
    }
}

/// Which hypotheses a min-p distribution ranges over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisScope {
    All,
    Subset(Vec<usize>),
}

/// Empirical permutation distribution of `min_j p_j(gW)`, one sample per resample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinPDistribution {
    samples: Vec<f64>,
    sorted: Vec<f64>,
    pub plan: PermutationPlan,
    pub scope: HypothesisScope,
}

impl MinPDistribution {
    pub fn new(samples: Vec<f64>, plan: PermutationPlan, scope: HypothesisScope) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        MinPDistribution {
            samples,
            sorted,
            plan,
            scope,
        }
    }

    /// Samples in resample order.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `#{k : min-p_k <= s}`.
    pub fn count_le(&self, s: f64) -> usize {
        self.sorted.partition_point(|&v| v <= s)
    }

    /// `P*(min_j p_j <= s)`.
    pub fn cdf(&self, s: f64) -> f64 {
        self.count_le(s) as f64 / self.len() as f64
    }
}

/// Largest lattice value whose min-p CDF is at most `alpha`; zero if none.
pub fn wy_threshold(dist: &MinPDistribution, lattice: &PValueLattice, alpha: f64) -> f64 {
    lattice.largest_where(|s| dist.cdf(s) <= alpha)
}

/// Raw p-values and the full matrix of permuted p-values from one sweep.
#[derive(Clone, Debug)]
pub struct PermutedPValues {
    m: usize,
    n_perm: usize,
    raw: Vec<f64>,
    /// Hypothesis-major: row `j` holds `p_j(g_k W)` for `k = 0..n_perm`.
    matrix: Vec<f64>,
    lattice: PValueLattice,
    plan: PermutationPlan,
    evaluations: u64,
}

impl PermutedPValues {
    /// Runs the sweep, in parallel over hypotheses.
    pub fn compute(data: &DataMatrix, test: &MarginalTest, plan: &PermutationPlan) -> Result<Self> {
        Self::compute_with_progress(data, test, plan, None)
    }

    /// As [`compute`](Self::compute); `progress`, when given, counts finished
    /// hypotheses.
    pub fn compute_with_progress(
        data: &DataMatrix,
        test: &MarginalTest,
        plan: &PermutationPlan,
        progress: Option<&AtomicU64>,
    ) -> Result<Self> {
        let prepared = test.prepare(data, plan)?;
        let m = data.m();
        let n_perm = prepared.resamples().len();
        let evaluations = AtomicU64::new(0);
        let mut matrix = vec![0.0f64; m * n_perm];
        let mut raw = vec![0.0f64; m];
        matrix
            .par_chunks_mut(n_perm)
            .zip(raw.par_iter_mut())
            .enumerate()
            .map(|(j, (out, raw_j))| {
                *raw_j = prepared.evaluate_row(j, data.row(j), out)?;
                evaluations.fetch_add(out.len() as u64, Ordering::Relaxed);
                if let Some(p) = progress {
                    p.fetch_add(1, Ordering::Relaxed);
                }
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;

        let extra: Vec<f64> = raw.iter().copied().filter(|&p| p > 0.0).collect();
        let lattice = match prepared.common_lattice() {
            Some(l) => l.with_values(&extra)?,
            None => {
                let mut values = extra;
                values.extend(min_per_resample(&matrix, m, n_perm));
                PValueLattice::new(values)?
            }
        };
        Ok(PermutedPValues {
            m,
            n_perm,
            raw,
            matrix,
            lattice,
            plan: *plan,
            evaluations: evaluations.into_inner(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_perm(&self) -> usize {
        self.n_perm
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.matrix[j * self.n_perm..(j + 1) * self.n_perm]
    }

    /// Candidate thresholds: the marginal lattice plus every observed p-value.
    pub fn lattice(&self) -> &PValueLattice {
        &self.lattice
    }

    pub fn plan(&self) -> &PermutationPlan {
        &self.plan
    }

    /// Number of marginal statistics evaluated by the sweep (`m * P`).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn minp_distribution(&self) -> MinPDistribution {
        MinPDistribution::new(
            min_per_resample(&self.matrix, self.m, self.n_perm),
            self.plan,
            HypothesisScope::All,
        )
    }

    /// Min-p distribution restricted to a subset of hypotheses.
    pub fn minp_over(&self, subset: &[usize]) -> MinPDistribution {
        let samples = (0..self.n_perm)
            .into_par_iter()
            .map(|k| {
                subset
                    .iter()
                    .map(|&j| self.matrix[j * self.n_perm + k])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        MinPDistribution::new(samples, self.plan, HypothesisScope::Subset(subset.to_vec()))
    }

    /// Single-step procedure: adjusted `p_j = P*(min p <= p_j(W))`.
    pub fn single_step(&self, alpha: f64) -> AdjustmentResult {
        let dist = self.minp_distribution();
        let threshold = wy_threshold(&dist, &self.lattice, alpha);
        let adjusted: Vec<f64> = self.raw.iter().map(|&p| dist.cdf(p)).collect();
        finish(Method::WySingleStep, alpha, threshold, self.raw.clone(), adjusted)
    }

    /// Free step-down minP: with raw p-values ordered ascending, the adjusted
    /// value at position `l` is the fraction of resamples whose minimum over
    /// hypotheses ranked `l` or later is at most `p_(l)`, made monotone.
    pub fn step_down(&self, alpha: f64) -> AdjustmentResult {
        let m = self.m;
        let p = self.n_perm;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| self.raw[a].total_cmp(&self.raw[b]).then(a.cmp(&b)));
        let sorted_raw: Vec<f64> = order.iter().map(|&j| self.raw[j]).collect();

        let chunk = chunk_len(p);
        let partial: Vec<Vec<u64>> = (0..p)
            .collect::<Vec<usize>>()
            .par_chunks(chunk)
            .map(|ks| {
                let mut counts = vec![0u64; m];
                for &k in ks {
                    let mut running = f64::INFINITY;
                    for l in (0..m).rev() {
                        running = running.min(self.matrix[order[l] * p + k]);
                        if running <= sorted_raw[l] {
                            counts[l] += 1;
                        }
                    }
                }
                counts
            })
            .collect();
        let mut counts = vec![0u64; m];
        for c in &partial {
            for (acc, v) in counts.iter_mut().zip(c) {
                *acc += v;
            }
        }

        let mut adjusted = vec![0.0; m];
        let mut running_max = 0.0f64;
        for (l, &j) in order.iter().enumerate() {
            running_max = running_max.max(counts[l] as f64 / p as f64);
            adjusted[j] = running_max;
        }
        let threshold = wy_threshold(&self.minp_distribution(), &self.lattice, alpha);
        finish(Method::WyStepDown, alpha, threshold, self.raw.clone(), adjusted)
    }
}

fn chunk_len(p: usize) -> usize {
    (p / (4 * current_num_threads()).max(1)).clamp(1, 256)
}

/// Minimum over hypotheses for each resample.
fn min_per_resample(matrix: &[f64], m: usize, n_perm: usize) -> Vec<f64> {
    let mut minp = vec![f64::INFINITY; n_perm];
    let chunk = chunk_len(n_perm);
    minp.par_chunks_mut(chunk).enumerate().for_each(|(c, out)| {
        let k0 = c * chunk;
        for j in 0..m {
            let row = &matrix[j * n_perm + k0..j * n_perm + k0 + out.len()];
            for (o, &v) in out.iter_mut().zip(row) {
                if v < *o {
                    *o = v;
                }
            }
        }
    });
    minp
}

pub(crate) fn finish(
    method: Method,
    alpha: f64,
    threshold: f64,
    raw_pvalues: Vec<f64>,
    adjusted_pvalues: Vec<f64>,
) -> AdjustmentResult {
    let rejections = adjusted_pvalues
        .iter()
        .enumerate()
        .filter(|(_, &a)| a <= alpha)
        .map(|(j, _)| j)
        .collect();
    AdjustmentResult {
        method,
        alpha,
        threshold,
        raw_pvalues,
        adjusted_pvalues,
        rejections,
    }
}

/// Min-p permutation distribution over all hypotheses.
pub fn minp_distribution(data: &DataMatrix, test: &MarginalTest, plan: &PermutationPlan) -> Result<MinPDistribution> {
    Ok(PermutedPValues::compute(data, test, plan)?.minp_distribution())
}

/// Single-step Westfall-Young adjusted p-values, threshold and rejections.
pub fn wy_adjusted_pvalues(
    data: &DataMatrix,
    test: &MarginalTest,
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<AdjustmentResult> {
    Ok(PermutedPValues::compute(data, test, plan)?.single_step(alpha))
}

/// Step-down Westfall-Young procedure.
pub fn wy_stepdown(
    data: &DataMatrix,
    test: &MarginalTest,
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<AdjustmentResult> {
    Ok(PermutedPValues::compute(data, test, plan)?.step_down(alpha))
}

/// Output of [`shared_sweep`].
#[derive(Clone, Debug)]
pub struct SharedSweep {
    /// Observed marginal permutation p-values.
    pub marginal: Vec<f64>,
    pub pvalues: PermutedPValues,
    pub minp: MinPDistribution,
}

/// Marginal permutation p-values and the min-p distribution from a single
/// round of resamples.
pub fn shared_sweep(data: &DataMatrix, statistic: PermutationStatistic, plan: &PermutationPlan) -> Result<SharedSweep> {
    let kind = match statistic {
        PermutationStatistic::AbsT => TestKind::PermutationT,
        PermutationStatistic::AbsSpearman => TestKind::Spearman,
    };
    let test = MarginalTest {
        inner_plan: *plan,
        ..MarginalTest::new(kind)
    };
    let pvalues = PermutedPValues::compute(data, &test, plan)?;
    Ok(SharedSweep {
        marginal: pvalues.raw().to_vec(),
        minp: pvalues.minp_distribution(),
        pvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Response;
    use crate::marginal::wilcoxon_lattice;

    fn two_group_data(rows: &[Vec<f64>], n1: usize) -> DataMatrix {
        let n = rows[0].len();
        DataMatrix::from_rows(Response::two_groups(n1, n - n1), rows).unwrap()
    }

    #[test]
    fn threshold_examples() {
        // m = 1, n = 4 exhaustive Wilcoxon: the min-p CDF is uniform on {1/3, 2/3, 1}.
        let data = two_group_data(&[vec![0.1, 0.4, 0.2, 0.3]], 2);
        let dist = minp_distribution(&data, &MarginalTest::wilcoxon(), &PermutationPlan::exhaustive()).unwrap();
        let lattice = wilcoxon_lattice(4).unwrap();
        assert_eq!(wy_threshold(&dist, &lattice, 0.05), 0.0);
        assert_eq!(wy_threshold(&dist, &lattice, 0.40), 1.0 / 3.0);
        assert_eq!(wy_threshold(&dist, &lattice, 1.0), 1.0);
    }

    #[test]
    fn identity_only_plan() {
        let data = two_group_data(&[vec![0.1, 0.4, 0.2, 0.3, 0.9, 0.8], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]], 3);
        let pv = PermutedPValues::compute(&data, &MarginalTest::wilcoxon(), &PermutationPlan::identity_only()).unwrap();
        let dist = pv.minp_distribution();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist.samples()[0], pv.raw().iter().copied().fold(1.0, f64::min));
    }

    #[test]
    fn single_hypothesis_adjusted_equals_raw() {
        let data = two_group_data(&[vec![0.3, 1.2, -0.4, 2.2, 0.9, 1.8, 2.5, 0.1]], 4);
        let res = wy_adjusted_pvalues(&data, &MarginalTest::wilcoxon(), &PermutationPlan::exhaustive(), 0.05).unwrap();
        assert_eq!(res.adjusted_pvalues, res.raw_pvalues);
        let sd = wy_stepdown(&data, &MarginalTest::wilcoxon(), &PermutationPlan::exhaustive(), 0.05).unwrap();
        assert_eq!(sd.adjusted_pvalues, res.adjusted_pvalues);
    }

    #[test]
    fn duplicated_features_behave_like_one() {
        let row = vec![0.3, 1.2, -0.4, 2.2, 0.9, 1.8, 2.5, 0.1];
        let single = two_group_data(std::slice::from_ref(&row), 4);
        let triple = two_group_data(&[row.clone(), row.clone(), row], 4);
        let plan = PermutationPlan::exhaustive();
        let a = minp_distribution(&single, &MarginalTest::wilcoxon(), &plan).unwrap();
        let b = minp_distribution(&triple, &MarginalTest::wilcoxon(), &plan).unwrap();
        assert_eq!(a.samples(), b.samples());
        let res = wy_adjusted_pvalues(&triple, &MarginalTest::wilcoxon(), &plan, 0.05).unwrap();
        assert_eq!(res.adjusted_pvalues, res.raw_pvalues);
    }

    #[test]
    fn raw_one_adjusts_to_one() {
        let data = two_group_data(&[vec![0.1, 0.4, 0.2, 0.3], vec![0.1, 0.2, 0.3, 0.4]], 2);
        let res = wy_adjusted_pvalues(&data, &MarginalTest::wilcoxon(), &PermutationPlan::exhaustive(), 0.05).unwrap();
        assert_eq!(res.raw_pvalues[0], 1.0);
        assert_eq!(res.adjusted_pvalues[0], 1.0);
    }

    #[test]
    fn equal_raw_pvalues_make_step_down_equal_single_step() {
        // Three copies of one row shifted by constants share every p-value.
        let base = [0.3, 1.2, -0.4, 2.2, 0.9, 1.8];
        let rows: Vec<Vec<f64>> = (0..3).map(|c| base.iter().map(|x| x + c as f64 * 10.0).collect()).collect();
        let data = two_group_data(&rows, 3);
        let plan = PermutationPlan::exhaustive();
        let pv = PermutedPValues::compute(&data, &MarginalTest::wilcoxon(), &plan).unwrap();
        let ss = pv.single_step(0.05);
        let sd = pv.step_down(0.05);
        assert_eq!(ss.adjusted_pvalues, sd.adjusted_pvalues);
    }

    #[test]
    fn sweep_counts_evaluations() {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..6).map(|i| ((i * 7 + j * 3) % 11) as f64).collect())
            .collect();
        let data = two_group_data(&rows, 3);
        let s = shared_sweep(&data, PermutationStatistic::AbsT, &PermutationPlan::sampled(40, 1)).unwrap();
        assert_eq!(s.pvalues.evaluations(), 3 * 41);
        assert_eq!(s.minp.len(), 41);
    }
}
