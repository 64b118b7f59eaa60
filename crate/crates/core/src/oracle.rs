//! Oracle thresholds from a known data-generating distribution, and closed
//! forms for reference.
//!
//! The oracle threshold is `c = max{ s in S : P(min_{j in I} p_j <= s) <= alpha }`
//! with the probability taken under the true distribution and `I` the true
//! nulls. It is approximated by simulating complete-null data sets; the
//! null rows do not depend on which hypotheses are alternatives, so one
//! reference set of simulated p-values serves every choice of `I`.

use serde::{Deserialize, Serialize};

use crate::engine::{finish, AdjustmentResult, Method};
use crate::error::{Error, Result};
use crate::lattice::PValueLattice;
use crate::marginal::wilcoxon::null_distribution;
use crate::marginal::{MarginalTest, TestKind};
use crate::par::*;
use crate::rng::domain;
use crate::sim::SimulationScenario;

pub const DEFAULT_SIMS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub threshold: f64,
    /// Probability that the minimum null p-value is at most the threshold.
    pub effective_level: f64,
    pub n_sims: usize,
    /// Binomial standard error of `effective_level`.
    pub mc_stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub level: f64,
    pub stderr: f64,
    pub n_sims: usize,
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Simulated complete-null p-values, `n_sims x m`, plus the candidate
/// thresholds of the test when they are known in closed form.
#[derive(Clone, Debug)]
pub struct OracleReference {
    m: usize,
    n_sims: usize,
    matrix: Vec<f64>,
    lattice: Option<PValueLattice>,
}

fn check_test(scenario: &SimulationScenario, test: &MarginalTest) -> Result<()> {
    scenario.validate()?;
    match test.kind {
        TestKind::Wilcoxon | TestKind::PermutationT => Ok(()),
        other => Err(Error::invalid(format!(
            "{other} test does not apply to a two-group Gaussian scenario"
        ))),
    }
}

impl OracleReference {
    /// Simulates `n_sims` complete-null data sets from `scenario` with streams
    /// derived from `(seed, stream_domain)`.
    pub fn simulate(
        scenario: &SimulationScenario,
        test: &MarginalTest,
        n_sims: usize,
        seed: u64,
        stream_domain: u64,
    ) -> Result<Self> {
        check_test(scenario, test)?;
        let source = scenario.clone().with_seed(seed);
        let rows: Vec<Vec<f64>> = (0..n_sims as u64)
            .into_par_iter()
            .map(|i| {
                let data = source.generate_null(stream_domain, i)?;
                test.raw_pvalues(&data)
            })
            .collect::<Result<_>>()?;
        let lattice = match test.kind {
            TestKind::Wilcoxon => Some(null_distribution(scenario.n1, scenario.n2)?.lattice()),
            _ => None,
        };
        Ok(OracleReference {
            m: scenario.m,
            n_sims,
            matrix: rows.concat(),
            lattice,
        })
    }

    /// Wraps precomputed null p-values (`n_sims x m`, simulation-major).
    pub fn from_pvalues(m: usize, matrix: Vec<f64>, lattice: Option<PValueLattice>) -> Result<Self> {
        if m == 0 || !matrix.len().is_multiple_of(m) {
            return Err(Error::invalid("p-value matrix is not a multiple of m"));
        }
        Ok(OracleReference {
            m,
            n_sims: matrix.len() / m,
            matrix,
            lattice,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_sims(&self) -> usize {
        self.n_sims
    }

    pub fn lattice(&self) -> Option<&PValueLattice> {
        self.lattice.as_ref()
    }

    /// Sorted `min_{j in subset} p_j` over the simulations; `+inf` for an
    /// empty subset.
    pub fn minp_over(&self, subset: &[usize]) -> Vec<f64> {
        let m = self.m;
        let mut mins: Vec<f64> = self
            .matrix
            .par_chunks(m)
            .map(|row| subset.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min))
            .collect();
        mins.sort_by(f64::total_cmp);
        mins
    }

    fn cdf(sorted: &[f64], s: f64) -> f64 {
        if sorted.is_empty() {
            return 0.0;
        }
        sorted.partition_point(|&v| v <= s) as f64 / sorted.len() as f64
    }

    fn threshold_from(&self, sorted: &[f64], extra: &[f64], alpha: f64) -> f64 {
        let candidates = match &self.lattice {
            Some(l) => l.clone(),
            None => {
                let mut values: Vec<f64> = sorted.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
                values.extend(extra.iter().copied().filter(|&v| v > 0.0));
                match PValueLattice::new(values) {
                    Ok(l) => l,
                    Err(_) => return 0.0,
                }
            }
        };
        candidates.largest_where(|s| Self::cdf(sorted, s) <= alpha)
    }

    /// Oracle threshold for the true-null set `nulls`.
    pub fn estimate(&self, nulls: &[usize], alpha: f64) -> OracleEstimate {
        let sorted = self.minp_over(nulls);
        let threshold = self.threshold_from(&sorted, &[], alpha);
        let level = Self::cdf(&sorted, threshold);
        OracleEstimate {
            threshold,
            effective_level: level,
            n_sims: self.n_sims,
            mc_stderr: binomial_stderr(level, self.n_sims),
        }
    }

    /// Fraction of simulations whose minimum over `nulls` is at most `threshold`.
    pub fn level_at(&self, nulls: &[usize], threshold: f64) -> LevelEstimate {
        let level = Self::cdf(&self.minp_over(nulls), threshold);
        LevelEstimate {
            level,
            stderr: binomial_stderr(level, self.n_sims),
            n_sims: self.n_sims,
        }
    }

    /// Single-step oracle procedure on observed p-values; adjusted
    /// `p_j = P(min_{i in I} p_i <= p_j)`.
    pub fn single_step(&self, raw: &[f64], nulls: &[usize], alpha: f64) -> Result<AdjustmentResult> {
        self.check_raw(raw)?;
        let sorted = self.minp_over(nulls);
        let threshold = self.threshold_from(&sorted, raw, alpha);
        let adjusted = raw.iter().map(|&p| Self::cdf(&sorted, p)).collect();
        Ok(finish(Method::OracleSingleStep, alpha, threshold, raw.to_vec(), adjusted))
    }

    /// Step-down oracle procedure: the threshold is recomputed over the true
    /// nulls not yet rejected until the rejection set stops growing. Adjusted
    /// p-values are read off the final null set.
    pub fn step_down(&self, raw: &[f64], nulls: &[usize], alpha: f64) -> Result<AdjustmentResult> {
        self.check_raw(raw)?;
        let first = self.threshold_from(&self.minp_over(nulls), raw, alpha);
        let mut threshold = first;
        let mut active: Vec<usize> = nulls.to_vec();
        let mut sorted;
        loop {
            let remaining: Vec<usize> = active.iter().copied().filter(|&j| raw[j] > threshold).collect();
            sorted = self.minp_over(&remaining);
            if remaining.len() == active.len() {
                break;
            }
            active = remaining;
            threshold = self.threshold_from(&sorted, raw, alpha).max(threshold);
        }
        let adjusted = raw.iter().map(|&p| Self::cdf(&sorted, p)).collect();
        Ok(finish(Method::OracleStepDown, alpha, first, raw.to_vec(), adjusted))
    }

    fn check_raw(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.m {
            return Err(Error::invalid(format!(
                "{} p-values for an oracle over {} hypotheses",
                raw.len(),
                self.m
            )));
        }
        Ok(())
    }
}

/// Monte Carlo oracle threshold for the scenario's true nulls (those of its
/// first replicate when alternatives are redrawn).
pub fn oracle_threshold_mc(
    scenario: &SimulationScenario,
    test: &MarginalTest,
    alpha: f64,
    n_sims: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    check_alpha(alpha)?;
    let reference = OracleReference::simulate(scenario, test, n_sims, seed, domain::ORACLE)?;
    let nulls = scenario.partition(&scenario.alternatives_for_run(0))?.true_nulls;
    Ok(reference.estimate(&nulls, alpha))
}

/// Level actually attained at `threshold`, estimated on simulations that are
/// independent of those behind [`oracle_threshold_mc`].
pub fn effective_level(
    scenario: &SimulationScenario,
    test: &MarginalTest,
    threshold: f64,
    n_sims: usize,
    seed: u64,
) -> Result<LevelEstimate> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::invalid("threshold must be non-negative"));
    }
    check_test(scenario, test)?;
    if threshold == 0.0 || threshold >= 1.0 {
        let level = if threshold == 0.0 { 0.0 } else { 1.0 };
        return Ok(LevelEstimate {
            level,
            stderr: 0.0,
            n_sims,
        });
    }
    let reference = OracleReference::simulate(scenario, test, n_sims, seed, domain::EFFECTIVE_LEVEL)?;
    let nulls = scenario.partition(&scenario.alternatives_for_run(0))?.true_nulls;
    Ok(reference.level_at(&nulls, threshold))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Smallest even `n` with `n >= 2 log2(m / alpha) + 2`, i.e. with
/// `2^(-n/2 + 1) <= alpha / m`.
pub fn min_sample_size(m: usize, alpha: f64) -> usize {
    let bound = 2.0 * (m.max(1) as f64 / alpha).log2() + 2.0;
    let mut n = (bound - 1e-9).ceil().max(2.0) as usize;
    n += n % 2;
    n
}

/// `1 - (1 - alpha)^(1/B)`: oracle threshold for `B` independent blocks of
/// perfectly dependent uniform p-values.
pub fn perfect_block_threshold(blocks: usize, alpha: f64) -> f64 {
    -((-alpha).ln_1p() / blocks.max(1) as f64).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::substream;
    use crate::sim::Structure;

    #[test]
    fn closed_forms() {
        assert!((perfect_block_threshold(1, 0.05) - 0.05).abs() < 1e-15);
        assert!((perfect_block_threshold(10, 0.05) - 0.005116).abs() < 1e-6);
        let b1000 = perfect_block_threshold(1000, 0.05);
        assert!((b1000 - 5.1293e-5).abs() < 1e-8);
        assert!(b1000 > 0.05 / 1000.0);
        assert!(10.0 * perfect_block_threshold(10, 0.05) <= -(0.95f64).ln());
    }

    #[test]
    fn minimum_sample_sizes() {
        assert_eq!(min_sample_size(100, 0.05), 24);
        assert_eq!(min_sample_size(1, 0.5), 4);
        for m in [1, 10, 100, 1000, 10_000] {
            let n = min_sample_size(m, 0.05);
            assert_eq!(n % 2, 0);
            assert!(2f64.powf(-(n as f64) / 2.0 + 1.0) <= 0.05 / m as f64);
            let smaller = n - 2;
            assert!(2f64.powf(-(smaller as f64) / 2.0 + 1.0) > 0.05 / m as f64);
        }
    }

    fn uniform_blocks(blocks: usize, per_block: usize, sims: usize, seed: u64) -> OracleReference {
        let mut rng = substream(seed, 0, 0);
        let mut matrix = Vec::with_capacity(sims * blocks * per_block);
        for _ in 0..sims {
            for _ in 0..blocks {
                let u: f64 = 1.0 - rng.random::<f64>();
                matrix.extend(std::iter::repeat_n(u, per_block));
            }
        }
        OracleReference::from_pvalues(blocks * per_block, matrix, None).unwrap()
    }

    #[test]
    fn perfect_blocks_of_uniforms() {
        let sims = 200_000;
        let r = uniform_blocks(10, 3, sims, 5);
        let all: Vec<usize> = (0..30).collect();
        let est = r.estimate(&all, 0.05);
        let target = perfect_block_threshold(10, 0.05);
        // Quantile error: density of min of 10 uniforms near the target is ~9.6.
        let tol = 3.0 * (0.05f64 * 0.95 / sims as f64).sqrt() / 9.0;
        assert!((est.threshold - target).abs() < tol, "{} vs {target}", est.threshold);
        assert!(est.effective_level <= 0.05);
    }

    #[test]
    fn tiny_alpha_gives_zero() {
        let r = uniform_blocks(2, 1, 100, 1);
        assert_eq!(r.estimate(&[0, 1], 0.001).threshold, 0.0);
    }

    #[test]
    fn step_down_extends_single_step() {
        let r = uniform_blocks(4, 1, 5000, 2);
        let raw = [1e-4, 0.012, 0.5, 0.9];
        let nulls = [1, 2, 3];
        let ss = r.single_step(&raw, &nulls, 0.05).unwrap();
        let sd = r.step_down(&raw, &nulls, 0.05).unwrap();
        assert!(ss.rejections.iter().all(|j| sd.rejections.contains(j)));
        assert!(ss.rejections.contains(&0));
    }

    #[test]
    fn wilcoxon_oracle_on_independent_nulls() {
        let s = SimulationScenario::null(20, 6, 6, Structure::Independent);
        let est = oracle_threshold_mc(&s, &MarginalTest::wilcoxon(), 0.05, 400, 3).unwrap();
        let lattice = null_distribution(6, 6).unwrap().lattice();
        assert!(est.threshold == 0.0 || lattice.contains(est.threshold));
        assert!(est.effective_level <= 0.05);
        let fresh = effective_level(&s, &MarginalTest::wilcoxon(), est.threshold, 400, 4).unwrap();
        assert!(fresh.level <= 0.05 + 3.0 * fresh.stderr.max(0.011));
    }

    #[test]
    fn level_endpoints() {
        let s = SimulationScenario::null(5, 4, 4, Structure::Independent);
        let t = MarginalTest::wilcoxon();
        assert_eq!(effective_level(&s, &t, 0.0, 10, 0).unwrap().level, 0.0);
        assert_eq!(effective_level(&s, &t, 1.0, 10, 0).unwrap().level, 1.0);
    }

    #[test]
    fn rejects_mismatched_test() {
        let s = SimulationScenario::null(5, 4, 4, Structure::Independent);
        assert!(oracle_threshold_mc(&s, &MarginalTest::fisher(), 0.05, 10, 0).is_err());
    }
}
