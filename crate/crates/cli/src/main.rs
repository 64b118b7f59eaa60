use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wy_core::data::ResponseKind;
use wy_core::experiment::{benchmark, run_experiment, study_grid, ExperimentConfig, Preset};
use wy_core::marginal::wilcoxon::{null_distribution, wilcoxon_lattice_exact};
use wy_core::oracle::{effective_level, oracle_threshold_mc, DEFAULT_SIMS};
use wy_core::report::{emit_outputs, summary_csv, summary_rows};
use wy_core::{
    DataMatrix, Method, MarginalTest, PermutationPlan, PermutedPValues, SimulationScenario, TestKind, TiePolicy,
};

mod verify;

#[derive(Parser)]
#[command(name = "wy", version, about = "Westfall-Young permutation multiple testing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write result files into this directory instead of printing them.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Adjust the marginal p-values of a data file.
    Adjust(AdjustArgs),
    /// Run a simulation study and write its report.
    Simulate(SimulateArgs),
    /// Monte Carlo oracle threshold for a scenario.
    Oracle(OracleArgs),
    /// Attainable two-sided Wilcoxon p-values.
    Lattice(LatticeArgs),
    /// Cross-check fast paths against brute-force enumeration.
    Verify,
    /// Time the Westfall-Young sweep.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct AdjustArgs {
    /// Delimited file: first row the response, then one feature per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "wilcoxon")]
    test: TestKind,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    /// Enumerate every distinct relabelling instead of sampling.
    #[arg(long)]
    exhaustive: bool,
    /// Step-down instead of single-step adjustment.
    #[arg(long)]
    stepdown: bool,
    /// The file starts with a column-name row.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value_t = ResponseArg::Auto)]
    response: ResponseArg,
    /// Fall back to mid-rank permutation t when Wilcoxon values tie.
    #[arg(long)]
    permissive_ties: bool,
    /// Report progress on stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResponseArg {
    Auto,
    Categorical,
    Numeric,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML). Mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Run the study grid: desk or full.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long, default_value = "wilcoxon")]
    test: TestKind,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SIMS)]
    oracle_sims: usize,
    /// Comma-separated subset of methods (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "wilcoxon")]
    test: TestKind,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SIMS)]
    sims: usize,
    /// Fresh simulations for the effective level (0 skips it).
    #[arg(long, default_value_t = 0)]
    level_sims: usize,
}

#[derive(Args)]
struct LatticeArgs {
    /// Total sample size, split equally.
    #[arg(long, required_unless_present = "n1")]
    n: Option<usize>,
    #[arg(long, requires = "n2")]
    n1: Option<usize>,
    #[arg(long, requires = "n1")]
    n2: Option<usize>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .chain()
                .find_map(|e| e.downcast_ref::<wy_core::Error>())
                .is_some_and(|e| e.is_numerical());
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            bail!(wy_core::Error::InvalidInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Adjust(a) => adjust(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::Oracle(a) => oracle(g, a),
        Command::Lattice(a) => lattice(g, a),
        Command::Verify => Ok(Some(verify::run(g.format == Format::Json))),
        Command::Benchmark(a) => bench(g, a),
    }
    .map(|code| code.unwrap_or(ExitCode::SUCCESS))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!(wy_core::Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Writes `contents` to `dir/name` when `--out` is set, else to stdout.
fn emit(g: &Global, name: &str, contents: &str) -> Result<()> {
    match &g.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
        }
    }
    Ok(())
}

fn adjust(g: &Global, a: &AdjustArgs) -> Result<Option<ExitCode>> {
    check_alpha(a.alpha)?;
    let kind = match a.response {
        ResponseArg::Auto => ResponseKind::Auto,
        ResponseArg::Categorical => ResponseKind::Categorical,
        ResponseArg::Numeric => ResponseKind::Numeric,
    };
    let data = DataMatrix::read_path(&a.data, a.header, kind)?;
    let seed = g.seed.unwrap_or(1);
    let plan = if a.exhaustive {
        PermutationPlan::exhaustive()
    } else {
        PermutationPlan::sampled(a.permutations, seed)
    };
    let tie_policy = if a.permissive_ties {
        TiePolicy::Permissive
    } else {
        TiePolicy::Strict
    };
    let test = MarginalTest {
        inner_plan: plan,
        ..MarginalTest::new(a.test).with_tie_policy(tie_policy)
    };

    let started = Instant::now();
    let done = AtomicU64::new(0);
    let finished = AtomicBool::new(false);
    let sweep = std::thread::scope(|s| {
        if a.progress {
            s.spawn(|| {
                while !finished.load(Ordering::Relaxed) {
                    eprint!("\r{}/{} hypotheses", done.load(Ordering::Relaxed), data.m());
                    std::thread::sleep(Duration::from_millis(200));
                }
                eprintln!("\r{}/{} hypotheses", done.load(Ordering::Relaxed), data.m());
            });
        }
        let r = PermutedPValues::compute_with_progress(&data, &test, &plan, Some(&done));
        finished.store(true, Ordering::Relaxed);
        r
    })?;
    let sweep_secs = started.elapsed().as_secs_f64();
    let result = if a.stepdown {
        sweep.step_down(a.alpha)
    } else {
        sweep.single_step(a.alpha)
    };
    let total_secs = started.elapsed().as_secs_f64();

    let summary = json!({
        "method": result.method,
        "test": a.test,
        "alpha": a.alpha,
        "threshold": result.threshold,
        "rejections": result.rejections.len(),
        "m": data.m(),
        "n": data.n(),
        "plan": plan,
        "resamples": sweep.n_perm(),
        "timing": { "sweep_secs": sweep_secs, "total_secs": total_secs },
    });
    let rows: Vec<serde_json::Value> = (0..data.m())
        .map(|j| {
            json!({
                "hypothesis": j,
                "raw_p": result.raw_pvalues[j],
                "adjusted_p": result.adjusted_pvalues[j],
                "rejected": result.is_rejected(j),
            })
        })
        .collect();
    let mut csv = String::from("hypothesis,raw_p,adjusted_p,rejected\n");
    for j in 0..data.m() {
        csv.push_str(&format!(
            "{j},{},{},{}\n",
            result.raw_pvalues[j],
            result.adjusted_pvalues[j],
            result.is_rejected(j)
        ));
    }

    if g.out.is_some() {
        emit(g, "adjusted.csv", &csv)?;
        emit(g, "summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    } else {
        match g.format {
            Format::Csv => {
                emit(g, "", &csv)?;
                eprintln!("{summary}");
            }
            Format::Json => emit(
                g,
                "",
                &(serde_json::to_string_pretty(&json!({ "summary": summary, "hypotheses": rows }))? + "\n"),
            )?,
        }
    }
    Ok(None)
}

fn parse_methods(list: &Option<Vec<String>>) -> Result<Vec<Method>> {
    match list {
        None => Ok(Method::ALL.to_vec()),
        Some(names) => names
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                Method::parse(s).ok_or_else(|| {
                    anyhow::Error::new(wy_core::Error::InvalidInput(format!(
                        "unknown method '{s}' (expected one of {})",
                        Method::ALL.map(|m| m.as_str()).join(", ")
                    )))
                })
            })
            .collect(),
    }
}

fn read_scenario(path: &Path) -> Result<SimulationScenario> {
    Ok(SimulationScenario::read_path(path)?)
}

fn simulate(g: &Global, a: &SimulateArgs) -> Result<Option<ExitCode>> {
    check_alpha(a.alpha)?;
    let methods = parse_methods(&a.methods)?;
    let configs: Vec<ExperimentConfig> = match (&a.scenario, a.preset) {
        (Some(path), _) => {
            let scenario = read_scenario(path)?;
            let seed = g.seed.unwrap_or(scenario.seed);
            vec![ExperimentConfig::study(scenario, seed)]
        }
        (None, Some(preset)) => study_grid(preset, g.seed.unwrap_or(1)),
        (None, None) => bail!(wy_core::Error::InvalidInput("give --scenario FILE or --preset".into())),
    };
    let mut reports = Vec::with_capacity(configs.len());
    for mut config in configs {
        config.test = MarginalTest::new(a.test);
        config.methods = methods.clone();
        config.alpha = a.alpha;
        config.oracle_sims = a.oracle_sims;
        if let Some(runs) = a.runs {
            config.n_runs = runs;
        }
        if let Some(p) = a.permutations {
            config.plan = PermutationPlan::sampled(p, 0);
        }
        let s = &config.scenario;
        eprintln!(
            "{} m={} rho={}: {} runs",
            s.structure.name(),
            s.m,
            s.structure.rho(),
            config.n_runs
        );
        reports.push(run_experiment(&config)?);
    }
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("wy-out"));
    let paths = emit_outputs(&reports, &dir)?;
    eprintln!("wrote {}", dir.display());
    match g.format {
        Format::Csv => print!("{}", summary_csv(&summary_rows(&reports))?),
        Format::Json => println!("{}", serde_json::to_string_pretty(&paths)?),
    }
    Ok(None)
}

fn oracle(g: &Global, a: &OracleArgs) -> Result<Option<ExitCode>> {
    check_alpha(a.alpha)?;
    let scenario = read_scenario(&a.scenario)?;
    let seed = g.seed.unwrap_or(scenario.seed);
    let test = MarginalTest::new(a.test);
    let est = oracle_threshold_mc(&scenario, &test, a.alpha, a.sims, seed)?;
    let fresh = if a.level_sims > 0 {
        Some(effective_level(&scenario, &test, est.threshold, a.level_sims, seed)?)
    } else {
        None
    };
    let value = json!({
        "threshold": est.threshold,
        "effective_level": est.effective_level,
        "mc_stderr": est.mc_stderr,
        "n_sims": est.n_sims,
        "alpha": a.alpha,
        "fresh_level": fresh,
    });
    let text = match g.format {
        Format::Json => serde_json::to_string_pretty(&value)? + "\n",
        Format::Csv => {
            let mut s = format!(
                "quantity,value\nthreshold,{}\neffective_level,{}\nmc_stderr,{}\nn_sims,{}\n",
                est.threshold, est.effective_level, est.mc_stderr, est.n_sims
            );
            if let Some(f) = fresh {
                s.push_str(&format!("fresh_level,{}\nfresh_stderr,{}\n", f.level, f.stderr));
            }
            s
        }
    };
    emit(g, "oracle.json", &text)?;
    Ok(None)
}

fn lattice(g: &Global, a: &LatticeArgs) -> Result<Option<ExitCode>> {
    let values: Vec<(u128, u128)> = match (a.n, a.n1, a.n2) {
        (_, Some(n1), Some(n2)) => {
            let null = null_distribution(n1, n2)?;
            null.lattice_exact().into_iter().map(|r| (*r.numer(), *r.denom())).collect()
        }
        (Some(n), _, _) => wilcoxon_lattice_exact(n)?
            .into_iter()
            .map(|r| (*r.numer(), *r.denom()))
            .collect(),
        _ => unreachable!("clap enforces the argument groups"),
    };
    let text = match g.format {
        Format::Csv => {
            let mut s = String::from("index,numerator,denominator,value\n");
            for (i, (num, den)) in values.iter().enumerate() {
                s.push_str(&format!("{i},{num},{den},{}\n", *num as f64 / *den as f64));
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = values
                .iter()
                .map(|(num, den)| json!({ "numerator": num.to_string(), "denominator": den.to_string(), "value": *num as f64 / *den as f64 }))
                .collect();
            serde_json::to_string_pretty(&rows)? + "\n"
        }
    };
    emit(g, "lattice.csv", &text)?;
    Ok(None)
}

fn bench(g: &Global, a: &BenchmarkArgs) -> Result<Option<ExitCode>> {
    if a.m == 0 {
        bail!(wy_core::Error::InvalidInput("--m must be at least 1".into()));
    }
    let report = benchmark(a.m, a.permutations, g.seed.unwrap_or(1))?;
    let text = match g.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => format!(
            "m,n,permutations,threads,generate_secs,sweep_secs,threshold_secs,total_secs,per_hypothesis_secs\n{},{},{},{},{},{},{},{},{}\n",
            report.m,
            report.n,
            report.permutations,
            report.machine.threads,
            report.generate_secs,
            report.sweep_secs,
            report.threshold_secs,
            report.total_secs,
            report.per_hypothesis_secs
        ),
    };
    emit(g, "benchmark.json", &text)?;
    Ok(None)
}
