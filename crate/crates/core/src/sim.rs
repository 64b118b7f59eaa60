//! Gaussian two-sample location-shift scenarios with known truth.
//!
//! Features are `X = mu(y) + Z` where `Z` has unit variances and either
//! Toeplitz correlation `rho^|i-j|` (an AR(1) recursion across features) or
//! within-block correlation `rho` (a one-factor model per block). Both
//! constructions give the target covariance exactly in O(m n) time.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, HypothesisPartition, Response};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Alternatives are drawn from the first `DEFAULT_POOL` hypotheses unless
/// the scenario says otherwise.
pub const DEFAULT_POOL: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Structure {
    Independent,
    Toeplitz { rho: f64 },
    Block { rho: f64, block_size: usize },
}

impl Structure {
    pub fn name(&self) -> &'static str {
        match self {
            Structure::Independent => "independent",
            Structure::Toeplitz { .. } => "toeplitz",
            Structure::Block { .. } => "block",
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            Structure::Independent => 0.0,
            Structure::Toeplitz { rho } | Structure::Block { rho, .. } => rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alternatives {
    /// Explicit zero-based indices.
    Fixed(Vec<usize>),
    /// `count` indices drawn without replacement from `0..pool`.
    Random { count: usize, pool: usize },
}

/// A fully specified data-generating distribution with known true nulls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct SimulationScenario {
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub structure: Structure,
    pub alternatives: Alternatives,
    pub shift: f64,
    pub seed: u64,
    /// Draw a fresh alternative set for every replicate (random alternatives only).
    pub redraw_alternatives: bool,
}

/// Flat on-disk form of a scenario.
///
/// ```toml
/// m = 1000
/// n1 = 50
/// n2 = 50
/// structure = "block"      # independent | toeplitz | block
/// rho = 0.9
/// block_size = 50
/// alternatives = 10        # a count, or an explicit list like [0, 7, 42]
/// alternative_pool = 100
/// redraw_alternatives = true
/// shift = 0.75
/// seed = 1
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    m: usize,
    #[serde(default = "default_group")]
    n1: usize,
    #[serde(default = "default_group")]
    n2: usize,
    #[serde(default = "default_structure")]
    structure: String,
    #[serde(default)]
    rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block_size: Option<usize>,
    #[serde(default = "default_alternatives")]
    alternatives: AlternativesField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alternative_pool: Option<usize>,
    #[serde(default = "default_true")]
    redraw_alternatives: bool,
    #[serde(default)]
    shift: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum AlternativesField {
    Count(usize),
    List(Vec<usize>),
}

fn default_group() -> usize {
    50
}

fn default_structure() -> String {
    "independent".into()
}

fn default_alternatives() -> AlternativesField {
    AlternativesField::Count(0)
}

fn default_true() -> bool {
    true
}

impl TryFrom<ScenarioFile> for SimulationScenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let structure = match f.structure.as_str() {
            "independent" => Structure::Independent,
            "toeplitz" => Structure::Toeplitz { rho: f.rho },
            "block" => Structure::Block {
                rho: f.rho,
                block_size: f
                    .block_size
                    .ok_or_else(|| Error::invalid("block structure requires block_size"))?,
            },
            other => return Err(Error::invalid(format!("unknown structure '{other}'"))),
        };
        let alternatives = match f.alternatives {
            AlternativesField::List(list) => Alternatives::Fixed(list),
            AlternativesField::Count(count) => Alternatives::Random {
                count,
                pool: f.alternative_pool.unwrap_or(DEFAULT_POOL.min(f.m)),
            },
        };
        let s = SimulationScenario {
            m: f.m,
            n1: f.n1,
            n2: f.n2,
            structure,
            alternatives,
            shift: f.shift,
            seed: f.seed,
            redraw_alternatives: f.redraw_alternatives,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<SimulationScenario> for ScenarioFile {
    fn from(s: SimulationScenario) -> Self {
        let (alternatives, alternative_pool) = match s.alternatives {
            Alternatives::Fixed(list) => (AlternativesField::List(list), None),
            Alternatives::Random { count, pool } => (AlternativesField::Count(count), Some(pool)),
        };
        ScenarioFile {
            m: s.m,
            n1: s.n1,
            n2: s.n2,
            structure: s.structure.name().into(),
            rho: s.structure.rho(),
            block_size: match s.structure {
                Structure::Block { block_size, .. } => Some(block_size),
                _ => None,
            },
            alternatives,
            alternative_pool,
            redraw_alternatives: s.redraw_alternatives,
            shift: s.shift,
            seed: s.seed,
        }
    }
}

/// One simulated data set together with its truth.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub data: DataMatrix,
    pub alternatives: Vec<usize>,
}

impl SimulationScenario {
    /// Scenario with the given structure, no alternatives and no shift.
    pub fn null(m: usize, n1: usize, n2: usize, structure: Structure) -> Self {
        SimulationScenario {
            m,
            n1,
            n2,
            structure,
            alternatives: Alternatives::Fixed(Vec::new()),
            shift: 0.0,
            seed: 0,
            redraw_alternatives: true,
        }
    }

    /// The default empirical-study design: 50 + 50 samples, 10 alternatives
    /// drawn among the first 100 hypotheses, shift 0.75.
    pub fn study(m: usize, structure: Structure, seed: u64) -> Self {
        SimulationScenario {
            alternatives: Alternatives::Random {
                count: 10,
                pool: DEFAULT_POOL.min(m),
            },
            shift: 0.75,
            seed,
            ..Self::null(m, 50, 50, structure)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("scenario needs m >= 1"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::invalid("scenario needs both groups non-empty"));
        }
        check_rho(self.structure.rho())?;
        if let Structure::Block { block_size, .. } = self.structure {
            if block_size == 0 {
                return Err(Error::invalid("block_size must be at least 1"));
            }
        }
        if !self.shift.is_finite() {
            return Err(Error::invalid("shift must be finite"));
        }
        match &self.alternatives {
            Alternatives::Fixed(list) => {
                HypothesisPartition::new(self.m, list, None)?;
            }
            Alternatives::Random { count, pool } => {
                if *pool > self.m || count > pool {
                    return Err(Error::invalid(format!(
                        "cannot draw {count} alternatives from a pool of {pool} with m = {}",
                        self.m
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn response(&self) -> Response {
        Response::two_groups(self.n1, self.n2)
    }

    pub fn n_alternatives(&self) -> usize {
        match &self.alternatives {
            Alternatives::Fixed(list) => list.len(),
            Alternatives::Random { count, .. } => *count,
        }
    }

    /// The alternative set used by replicate `run`, sorted.
    pub fn alternatives_for_run(&self, run: u64) -> Vec<usize> {
        let mut alts = match &self.alternatives {
            Alternatives::Fixed(list) => list.clone(),
            Alternatives::Random { count, pool } => {
                let draw = if self.redraw_alternatives { run } else { 0 };
                let mut rng = substream(self.seed, domain::ALTERNATIVES, draw);
                rand::seq::index::sample(&mut rng, *pool, *count).into_vec()
            }
        };
        alts.sort_unstable();
        alts
    }

    /// Feature blocks of the block model; `None` for the other structures.
    pub fn blocks(&self) -> Option<Vec<Vec<usize>>> {
        match self.structure {
            Structure::Block { block_size, .. } => Some(
                (0..self.m)
                    .step_by(block_size)
                    .map(|s| (s..(s + block_size).min(self.m)).collect())
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn partition(&self, alternatives: &[usize]) -> Result<HypothesisPartition> {
        HypothesisPartition::new(self.m, alternatives, self.blocks())
    }

    /// Null noise `Z` for one replicate, row-major `m x n`.
    pub fn sample_noise(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (m, n) = (self.m, self.n());
        match self.structure {
            Structure::Independent => standard_normals(rng, m * n),
            Structure::Toeplitz { rho } => toeplitz_with(rng, m, n, rho),
            Structure::Block { rho, block_size } => block_with(rng, m, n, rho, block_size),
        }
    }

    /// Replicate `run`: its own noise stream and alternative set.
    pub fn generate(&self, run: u64) -> Result<Replicate> {
        let mut rng = substream(self.seed, domain::SIMULATION, run);
        let mut features = self.sample_noise(&mut rng);
        let alternatives = self.alternatives_for_run(run);
        let response = self.response();
        apply_shift(&mut features, &response, &alternatives, self.shift)?;
        Ok(Replicate {
            data: DataMatrix::new(response, features)?,
            alternatives,
        })
    }

    /// Complete-null replicate from stream `(domain, index)`; the shift is
    /// irrelevant because no hypothesis is an alternative.
    pub fn generate_null(&self, stream_domain: u64, index: u64) -> Result<DataMatrix> {
        let mut rng = substream(self.seed, stream_domain, index);
        DataMatrix::new(self.response(), self.sample_noise(&mut rng))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(format!("correlation {rho} outside [0, 1)")))
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn toeplitz_with(rng: &mut ChaCha8Rng, m: usize, n: usize, rho: f64) -> Vec<f64> {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut z = standard_normals(rng, m * n);
    for j in 1..m {
        let (prev, cur) = z.split_at_mut(j * n);
        let prev = &prev[(j - 1) * n..];
        for (c, &p) in cur[..n].iter_mut().zip(prev) {
            *c = rho * p + innovation * *c;
        }
    }
    z
}

fn block_with(rng: &mut ChaCha8Rng, m: usize, n: usize, rho: f64, block_size: usize) -> Vec<f64> {
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut z = Vec::with_capacity(m * n);
    for start in (0..m).step_by(block_size) {
        let factor = standard_normals(rng, n);
        for _ in start..(start + block_size).min(m) {
            z.extend(factor.iter().map(|&f| a * f + b * rng.sample::<f64, _>(StandardNormal)));
        }
    }
    z
}

/// `m x n` row-major matrix whose columns are AR(1) sequences with unit
/// variance: `Z_1 ~ N(0,1)`, `Z_j = rho Z_{j-1} + sqrt(1 - rho^2) e_j`.
pub fn sample_toeplitz(m: usize, n: usize, rho: f64, seed: u64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    Ok(toeplitz_with(&mut substream(seed, domain::SIMULATION, 0), m, n, rho))
}

/// `m x n` row-major matrix with within-block correlation `rho`:
/// `Z_j = sqrt(rho) F_b + sqrt(1 - rho) e_j`, blocks independent.
pub fn sample_block(m: usize, n: usize, rho: f64, block_size: usize, seed: u64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if block_size == 0 {
        return Err(Error::invalid("block_size must be at least 1"));
    }
    Ok(block_with(
        &mut substream(seed, domain::SIMULATION, 0),
        m,
        n,
        rho,
        block_size,
    ))
}

/// Adds `delta` to the group-2 entries of every alternative row.
pub fn apply_shift(features: &mut [f64], response: &Response, alternatives: &[usize], delta: f64) -> Result<()> {
    let n = response.len();
    if n == 0 || !features.len().is_multiple_of(n) {
        return Err(Error::invalid("feature matrix does not match the response length"));
    }
    let m = features.len() / n;
    let (labels, _, _) = response.two_groups_labels()?;
    for &j in alternatives {
        if j >= m {
            return Err(Error::invalid(format!("alternative index {j} out of range for m = {m}")));
        }
        let row = &mut features[j * n..(j + 1) * n];
        for (x, &c) in row.iter_mut().zip(&labels.codes) {
            if c == 1 {
                *x += delta;
            }
        }
    }
    Ok(())
}
