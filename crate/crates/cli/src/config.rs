//! Experiment configuration: a diff-able `key = value` file plus a handful
//! of command-line overrides.

use anyhow::{anyhow, bail, Context, Result};
use smh_core::{ModelKind, ProposalKind, StudyKernel, SurrogateOrder, Truncation};
use std::fs;
use std::path::{Path, PathBuf};

/// Truncation threshold as written in the config: `n`, `inf`, or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationSetting {
    FactorCount,
    Infinite,
    Fixed(f64),
}

impl TruncationSetting {
    pub fn resolve(self, factor_count: usize) -> f64 {
        match self {
            TruncationSetting::FactorCount => factor_count as f64,
            TruncationSetting::Infinite => f64::INFINITY,
            TruncationSetting::Fixed(r) => r,
        }
    }

    pub fn as_study(self) -> Truncation {
        match self {
            TruncationSetting::FactorCount => Truncation::FactorCount,
            TruncationSetting::Infinite => Truncation::None,
            TruncationSetting::Fixed(r) => Truncation::Fixed(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Mh,
    Smh1,
    Smh2,
    FmhNaive,
}

impl KernelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mh" => Ok(KernelChoice::Mh),
            "smh-1" => Ok(KernelChoice::Smh1),
            "smh-2" => Ok(KernelChoice::Smh2),
            "fmh-naive" => Ok(KernelChoice::FmhNaive),
            other => bail!("unknown kernel '{other}' (expected mh, smh-1, smh-2 or fmh-naive)"),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KernelChoice::Mh => "mh",
            KernelChoice::Smh1 => "smh-1",
            KernelChoice::Smh2 => "smh-2",
            KernelChoice::FmhNaive => "fmh-naive",
        }
    }

    /// Surrogate order the kernel samples with; MH and the naive kernel only
    /// need aggregate derivatives, which a first-order surrogate carries.
    pub fn surrogate_order(self) -> SurrogateOrder {
        match self {
            KernelChoice::Smh2 => SurrogateOrder::Second,
            _ => SurrogateOrder::First,
        }
    }

    pub fn as_study(self, truncation: TruncationSetting) -> StudyKernel {
        match self {
            KernelChoice::Mh => StudyKernel::Mh,
            KernelChoice::Smh1 => StudyKernel::Smh {
                order: SurrogateOrder::First,
                truncation: truncation.as_study(),
            },
            KernelChoice::Smh2 => StudyKernel::Smh {
                order: SurrogateOrder::Second,
                truncation: truncation.as_study(),
            },
            KernelChoice::FmhNaive => StudyKernel::FmhNaive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalChoice {
    ScaledRw,
    PrecondRw,
    FirstOrder,
    Pcn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Csv(PathBuf),
}

/// Everything a run or study needs; every field has a default and every
/// field can be set from the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub data: DataSource,
    pub n: usize,
    pub dim: usize,
    pub kernel: KernelChoice,
    pub truncation: TruncationSetting,
    pub proposal: ProposalChoice,
    pub sigma: f64,
    pub rho: f64,
    pub iterations: usize,
    /// Defaults to iterations/10 when not set explicitly.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub n_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub kernels: Vec<KernelChoice>,
    pub repetitions: usize,
    /// Quadrature nodes per axis for the oracle command.
    pub oracle_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelChoice {
    Logistic,
    Robust { nu: f64 },
}

impl ModelChoice {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelChoice::Logistic => ModelKind::LogisticRegression,
            ModelChoice::Robust { nu } => ModelKind::RobustLinearRegression { nu },
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::Logistic,
            data: DataSource::Synthetic,
            n: 1024,
            dim: 10,
            kernel: KernelChoice::Smh2,
            truncation: TruncationSetting::FactorCount,
            proposal: ProposalChoice::Pcn,
            sigma: 1.0,
            rho: 0.0,
            iterations: 10_000,
            burn_in: None,
            thin: 1,
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            n_grid: vec![1024, 4096, 16384, 65536],
            rho_grid: vec![0.0, 0.25, 0.5, 0.75],
            kernels: vec![KernelChoice::Mh, KernelChoice::Smh1, KernelChoice::Smh2],
            repetitions: 3,
            oracle_points: 4001,
        }
    }
}

impl RunConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 10)
    }

    pub fn proposal_kind(&self) -> ProposalKind {
        match self.proposal {
            ProposalChoice::ScaledRw => ProposalKind::ScaledRw { sigma: self.sigma },
            ProposalChoice::PrecondRw => ProposalKind::PreconditionedRw { sigma: self.sigma },
            ProposalChoice::FirstOrder => ProposalKind::FirstOrderReversible { sigma: self.sigma },
            ProposalChoice::Pcn => ProposalKind::Pcn { rho: self.rho },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected 'key = value'"))?;
            self.apply(key.trim(), value.trim())
                .with_context(|| format!("line {line_no}"))?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => {
                self.model = match value {
                    "logistic" => ModelChoice::Logistic,
                    "robust" => {
                        let nu = if let ModelChoice::Robust { nu } = self.model {
                            nu
                        } else {
                            4.0
                        };
                        ModelChoice::Robust { nu }
                    }
                    other => bail!("unknown model '{other}' (expected logistic or robust)"),
                }
            }
            "nu" => {
                let nu: f64 = parse(value, key)?;
                self.model = ModelChoice::Robust { nu };
            }
            "data" => {
                self.data = if value == "synthetic" {
                    DataSource::Synthetic
                } else {
                    DataSource::Csv(PathBuf::from(value))
                }
            }
            "n" => self.n = parse(value, key)?,
            "d" => self.dim = parse(value, key)?,
            "kernel" => self.kernel = KernelChoice::parse(value)?,
            "r" => {
                self.truncation = match value {
                    "n" => TruncationSetting::FactorCount,
                    "inf" => TruncationSetting::Infinite,
                    other => TruncationSetting::Fixed(parse(other, key)?),
                }
            }
            "proposal" => {
                self.proposal = match value {
                    "scaled-rw" => ProposalChoice::ScaledRw,
                    "precond-rw" => ProposalChoice::PrecondRw,
                    "first-order" => ProposalChoice::FirstOrder,
                    "pcn" => ProposalChoice::Pcn,
                    other => bail!(
                        "unknown proposal '{other}' (expected scaled-rw, precond-rw, first-order or pcn)"
                    ),
                }
            }
            "sigma" => self.sigma = parse(value, key)?,
            "rho" => self.rho = parse(value, key)?,
            "iterations" => self.iterations = parse(value, key)?,
            "burn_in" => self.burn_in = Some(parse(value, key)?),
            "thin" => self.thin = parse(value, key)?,
            "seed" => self.seed = parse(value, key)?,
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = parse(value, key)?,
            "n_grid" => self.n_grid = parse_list(value, key)?,
            "rho_grid" => self.rho_grid = parse_list(value, key)?,
            "kernels" => {
                self.kernels = value
                    .split(',')
                    .map(|s| KernelChoice::parse(s.trim()))
                    .collect::<Result<_>>()?
            }
            "repetitions" => self.repetitions = parse(value, key)?,
            "points" => self.oracle_points = parse(value, key)?,
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.iterations <= self.burn_in() {
            bail!("iterations ({}) must exceed burn_in ({})", self.iterations, self.burn_in());
        }
        if self.thin == 0 {
            bail!("thin must be at least 1");
        }
        if self.sigma <= 0.0 {
            bail!("sigma must be positive");
        }
        if !(0.0..1.0).contains(&self.rho) {
            bail!("rho must lie in [0, 1)");
        }
        if let ModelChoice::Robust { nu } = self.model {
            if nu <= 0.0 {
                bail!("nu must be positive");
            }
        }
        if let DataSource::Csv(path) = &self.data {
            if !path.exists() {
                bail!("data file {} does not exist", path.display());
            }
        }
        if self.n == 0 || self.dim == 0 {
            bail!("n and d must be at least 1");
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value '{value}' for {key}: {e}"))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|s| parse(s.trim(), key)).collect()
}
