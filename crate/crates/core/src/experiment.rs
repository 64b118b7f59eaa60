//! Power and FWER studies over simulated replicates, and timing runs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{bonferroni, holm};
use crate::engine::{AdjustmentResult, Method, PermutedPValues};
use crate::error::{Error, Result};
use crate::marginal::MarginalTest;
use crate::oracle::{OracleReference, DEFAULT_SIMS};
use crate::par::*;
use crate::perm::{PermutationPlan, PlanMode};
use crate::rng::{derive_seed, domain, splitmix64};
use crate::sim::{SimulationScenario, Structure};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: SimulationScenario,
    pub test: MarginalTest,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub n_runs: usize,
    /// Resample plan of the Westfall-Young sweep. Its seed is re-derived per
    /// run from `seed`.
    pub plan: PermutationPlan,
    pub oracle_sims: usize,
    /// Master seed; replaces the scenario's own seed.
    pub seed: u64,
}

impl ExperimentConfig {
    /// The default study settings: Wilcoxon, every method, alpha 0.05, 250
    /// runs, 1000 permutations and 1000 oracle simulations.
    pub fn study(scenario: SimulationScenario, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            test: MarginalTest::wilcoxon(),
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            n_runs: 250,
            plan: PermutationPlan::sampled(1000, 0),
            oracle_sims: DEFAULT_SIMS,
            seed,
        }
    }

    pub fn with_runs(mut self, n_runs: usize) -> Self {
        self.n_runs = n_runs;
        self
    }

    pub fn with_permutations(mut self, count: usize) -> Self {
        self.plan = PermutationPlan::sampled(count, 0);
        self
    }

    fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.plan.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("need at least one run"));
        }
        if self.needs_oracle() && self.oracle_sims == 0 {
            return Err(Error::invalid("oracle methods need at least one simulation"));
        }
        Ok(())
    }

    fn needs_oracle(&self) -> bool {
        self.methods
            .iter()
            .any(|m| matches!(m, Method::OracleSingleStep | Method::OracleStepDown))
    }

    fn needs_sweep(&self) -> bool {
        self.methods
            .iter()
            .any(|m| matches!(m, Method::WySingleStep | Method::WyStepDown))
    }

    fn run_plan(&self, run: u64) -> PermutationPlan {
        match self.plan.mode {
            PlanMode::Exhaustive => self.plan,
            PlanMode::Sampled { .. } => PermutationPlan {
                seed: splitmix64(derive_seed(self.seed ^ self.plan.seed, domain::PERMUTATION) ^ run),
                ..self.plan
            },
        }
    }
}

/// Per-replicate outcome; vectors are aligned with the configured methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    /// Whether each step-down procedure rejected everything its single-step
    /// counterpart did, for the pairs that were run.
    pub nested: Vec<(Method, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_true_positives: f64,
    pub tp_stderr: f64,
    pub fwer: f64,
    pub fwer_stderr: f64,
    pub mean_false_positives: f64,
}

/// Wall-clock seconds per phase. `simulate`, `sweep`, `oracle` and
/// `baselines` are summed over runs (and so over threads).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub oracle_reference: f64,
    pub simulate: f64,
    pub sweep: f64,
    pub oracle: f64,
    pub baselines: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<RunOutcome>,
    /// Not part of the serialized report, which is reproducible byte for byte.
    #[serde(skip)]
    pub timing: PhaseTimings,
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    fn index(&self, method: Method) -> Option<usize> {
        self.config.methods.iter().position(|&m| m == method)
    }

    /// Mean and standard error of the per-run difference in true positives
    /// between two methods.
    pub fn paired_difference(&self, a: Method, b: Method) -> Option<(f64, f64)> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let diffs: Vec<f64> = self
            .runs
            .iter()
            .map(|r| r.true_positives[ia] as f64 - r.true_positives[ib] as f64)
            .collect();
        Some(mean_and_stderr(&diffs))
    }

    /// True when every step-down procedure contained its single-step
    /// counterpart in every run.
    pub fn always_nested(&self) -> bool {
        self.runs.iter().all(|r| r.nested.iter().all(|&(_, ok)| ok))
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct RunTimes {
    simulate: Duration,
    sweep: Duration,
    oracle: Duration,
    baselines: Duration,
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

/// Runs every configured method on `n_runs` independent replicates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let scenario = config.scenario.clone().with_seed(config.seed);

    let reference_start = Instant::now();
    let reference = if config.needs_oracle() {
        Some(OracleReference::simulate(
            &scenario,
            &config.test,
            config.oracle_sims,
            config.seed,
            domain::ORACLE,
        )?)
    } else {
        None
    };
    let oracle_reference = reference_start.elapsed().as_secs_f64();

    let outcomes: Vec<(RunOutcome, RunTimes)> = (0..config.n_runs)
        .into_par_iter()
        .map(|run| one_run(config, &scenario, reference.as_ref(), run))
        .collect::<Result<_>>()?;

    let mut timing = PhaseTimings {
        oracle_reference,
        ..Default::default()
    };
    for (_, t) in &outcomes {
        timing.simulate += t.simulate.as_secs_f64();
        timing.sweep += t.sweep.as_secs_f64();
        timing.oracle += t.oracle.as_secs_f64();
        timing.baselines += t.baselines.as_secs_f64();
    }
    let runs: Vec<RunOutcome> = outcomes.into_iter().map(|(r, _)| r).collect();

    let n = runs.len() as f64;
    let summaries = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let tps: Vec<f64> = runs.iter().map(|r| r.true_positives[i] as f64).collect();
            let (mean_true_positives, tp_stderr) = mean_and_stderr(&tps);
            let errors = runs.iter().filter(|r| r.false_positives[i] > 0).count() as f64;
            let fwer = errors / n;
            MethodSummary {
                method,
                mean_true_positives,
                tp_stderr,
                fwer,
                fwer_stderr: (fwer * (1.0 - fwer) / n).sqrt(),
                mean_false_positives: runs.iter().map(|r| r.false_positives[i] as f64).sum::<f64>() / n,
            }
        })
        .collect();
    timing.total = started.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        config: config.clone(),
        summaries,
        runs,
        timing,
    })
}

fn one_run(
    config: &ExperimentConfig,
    scenario: &SimulationScenario,
    reference: Option<&OracleReference>,
    run: usize,
) -> Result<(RunOutcome, RunTimes)> {
    let mut times = RunTimes {
        simulate: Duration::ZERO,
        sweep: Duration::ZERO,
        oracle: Duration::ZERO,
        baselines: Duration::ZERO,
    };
    let replicate = timed(&mut times.simulate, || scenario.generate(run as u64))?;
    let data = &replicate.data;
    let partition = scenario.partition(&replicate.alternatives)?;

    let sweep = if config.needs_sweep() {
        Some(timed(&mut times.sweep, || {
            PermutedPValues::compute(data, &config.test, &config.run_plan(run as u64))
        })?)
    } else {
        None
    };
    let raw: Vec<f64> = match &sweep {
        Some(s) => s.raw().to_vec(),
        None => timed(&mut times.baselines, || config.test.raw_pvalues(data))?,
    };

    let mut results: Vec<AdjustmentResult> = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let result = match method {
            Method::Bonferroni => timed(&mut times.baselines, || bonferroni(&raw, config.alpha))?,
            Method::Holm => timed(&mut times.baselines, || holm(&raw, config.alpha))?,
            Method::WySingleStep => timed(&mut times.sweep, || sweep.as_ref().unwrap().single_step(config.alpha)),
            Method::WyStepDown => timed(&mut times.sweep, || sweep.as_ref().unwrap().step_down(config.alpha)),
            Method::OracleSingleStep => timed(&mut times.oracle, || {
                reference
                    .unwrap()
                    .single_step(&raw, &partition.true_nulls, config.alpha)
            })?,
            Method::OracleStepDown => timed(&mut times.oracle, || {
                reference.unwrap().step_down(&raw, &partition.true_nulls, config.alpha)
            })?,
        };
        results.push(result);
    }

    let (mut true_positives, mut false_positives) = (Vec::new(), Vec::new());
    for r in &results {
        let tp = r.rejections.iter().filter(|&&j| !partition.is_null(j)).count();
        true_positives.push(tp);
        false_positives.push(r.rejections.len() - tp);
    }
    let find = |m: Method| config.methods.iter().position(|&x| x == m).map(|i| &results[i]);
    let mut nested = Vec::new();
    for (single, down) in [
        (Method::Bonferroni, Method::Holm),
        (Method::OracleSingleStep, Method::OracleStepDown),
        (Method::WySingleStep, Method::WyStepDown),
    ] {
        if let (Some(s), Some(d)) = (find(single), find(down)) {
            nested.push((down, s.rejections.iter().all(|&j| d.is_rejected(j))));
        }
    }
    Ok((
        RunOutcome {
            run,
            true_positives,
            false_positives,
            nested,
        },
        times,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// m in {100, 1000, 10000}, 250 runs, 1000 permutations.
    Full,
    /// m in {100, 1000}, 50 runs, 200 permutations.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!("unknown preset '{other}' (expected full or desk)"))),
        }
    }
}

/// The (structure, m, rho) grid of the empirical study.
pub fn study_grid(preset: Preset, seed: u64) -> Vec<ExperimentConfig> {
    let (ms, runs, perms): (&[usize], usize, usize) = match preset {
        Preset::Full => (&[100, 1000, 10_000], 250, 1000),
        Preset::Desk => (&[100, 1000], 50, 200),
    };
    let mut structures = Vec::new();
    for rho in [0.95, 0.975, 0.99] {
        structures.push(Structure::Toeplitz { rho });
    }
    for rho in [0.6, 0.75, 0.9] {
        structures.push(Structure::Block { rho, block_size: 50 });
    }
    let mut grid = Vec::new();
    for structure in structures {
        for &m in ms {
            let scenario = SimulationScenario::study(m, structure, seed);
            grid.push(
                ExperimentConfig::study(scenario, seed)
                    .with_runs(runs)
                    .with_permutations(perms),
            );
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub threads: usize,
}

impl MachineInfo {
    pub fn current() -> Self {
        MachineInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: current_num_threads(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub m: usize,
    pub n: usize,
    pub permutations: usize,
    pub generate_secs: f64,
    pub sweep_secs: f64,
    pub threshold_secs: f64,
    pub total_secs: f64,
    pub per_hypothesis_secs: f64,
    pub threshold: f64,
    pub evaluations: u64,
    pub machine: MachineInfo,
}

/// Times one Westfall-Young single-step threshold on independent Gaussian
/// data with 50 + 50 samples and Wilcoxon marginals.
pub fn benchmark(m: usize, permutations: usize, seed: u64) -> Result<BenchmarkReport> {
    let scenario = SimulationScenario::null(m, 50, 50, Structure::Independent).with_seed(seed);
    let plan = PermutationPlan::sampled(permutations, seed);

    let t0 = Instant::now();
    let data = scenario.generate_null(domain::SIMULATION, 0)?;
    let generate = t0.elapsed();

    let t1 = Instant::now();
    let sweep = PermutedPValues::compute(&data, &MarginalTest::wilcoxon(), &plan)?;
    let sweep_time = t1.elapsed();

    let t2 = Instant::now();
    let result = sweep.single_step(0.05);
    let threshold_time = t2.elapsed();

    let total = generate + sweep_time + threshold_time;
    Ok(BenchmarkReport {
        m,
        n: scenario.n(),
        permutations,
        generate_secs: generate.as_secs_f64(),
        sweep_secs: sweep_time.as_secs_f64(),
        threshold_secs: threshold_time.as_secs_f64(),
        total_secs: total.as_secs_f64(),
        per_hypothesis_secs: total.as_secs_f64() / m.max(1) as f64,
        threshold: result.threshold,
        evaluations: sweep.evaluations(),
        machine: MachineInfo::current(),
    })
}
