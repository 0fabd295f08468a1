//! Run configuration, stored as JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sigpost::criteria::CriterionKind;
use sigpost::sampler::ChainConfig;
use sigpost::weight::{builtin_weight, WeightFunction, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Random dot product graph on the latent curve.
    RdpgCurve,
    /// Noisy matrix completion on the latent curve.
    Completion,
    /// Edge list read from `input`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Constant,
    Rdpg,
    Completion,
    NoisyRdpg,
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CriterionChoice {
    M,
    Gmm,
    Etel,
    All,
}

impl CriterionChoice {
    pub fn kinds(self) -> Vec<CriterionKind> {
        match self {
            CriterionChoice::M => vec![CriterionKind::M],
            CriterionChoice::Gmm => vec![CriterionKind::Gmm],
            CriterionChoice::Etel => vec![CriterionKind::Etel],
            CriterionChoice::All => CriterionKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    /// Observation probability (completion).
    pub p: f64,
    /// Entry noise s.d. (completion).
    pub sigma: f64,
    /// Contamination s.d.; also the `v` of the noisy-rdpg weight.
    pub v: f64,
    pub weight: WeightChoice,
    pub criterion: CriterionChoice,
    pub theta_radius: f64,
    pub burnin: usize,
    pub samples: usize,
    pub proposal_scale: f64,
    pub chains: usize,
    pub adapt: bool,
    pub replicates: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Edge list for the `file` scenario.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Index of the first vertex in `input` (0 or 1).
    #[serde(default = "default_index_base")]
    pub index_base: usize,
}

fn default_index_base() -> usize {
    1
}

impl RunConfig {
    /// Graph on the latent curve with the rdpg weight and `Θ = [−1, 1]`.
    pub fn scenario_one(n: usize) -> Self {
        let chain = ChainConfig::default();
        Self {
            scenario: Scenario::RdpgCurve,
            n,
            d: 1,
            p: 1.0,
            sigma: 0.0,
            v: 0.0,
            weight: WeightChoice::Rdpg,
            criterion: CriterionChoice::All,
            theta_radius: 1.0,
            burnin: chain.burnin,
            samples: chain.samples,
            proposal_scale: chain.proposal_scale,
            chains: chain.chains,
            adapt: chain.adapt,
            replicates: 1,
            seed: 0,
            output_dir: PathBuf::from("out"),
            input: None,
            index_base: 1,
        }
    }

    /// Noisy completion with `σ = 1`, the completion weight and `Θ = [−1.2, 1.2]`.
    pub fn scenario_two(n: usize, p: f64) -> Self {
        Self {
            scenario: Scenario::Completion,
            p,
            sigma: 1.0,
            weight: WeightChoice::Completion,
            theta_radius: 1.2,
            ..Self::scenario_one(n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            bail!("d must be at least 1");
        }
        if self.scenario != Scenario::File && self.n < self.d {
            bail!("n ({}) must be at least d ({})", self.n, self.d);
        }
        if matches!(self.scenario, Scenario::RdpgCurve | Scenario::Completion) && self.d != 1 {
            bail!("the latent-curve scenarios are one-dimensional; got d = {}", self.d);
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            bail!("p must lie in (0, 1], got {}", self.p);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bail!("sigma must be non-negative, got {}", self.sigma);
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            bail!("v must be non-negative, got {}", self.v);
        }
        if !(self.theta_radius > 0.0 && self.theta_radius.is_finite()) {
            bail!("theta_radius must be positive, got {}", self.theta_radius);
        }
        if self.replicates < 1 {
            bail!("replicates must be at least 1");
        }
        if self.index_base > 1 {
            bail!("index_base must be 0 or 1, got {}", self.index_base);
        }
        if self.scenario == Scenario::File && self.input.is_none() {
            bail!("the file scenario needs an input path");
        }
        self.chain_config(0).validate()?;
        Ok(())
    }

    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            burnin: self.burnin,
            samples: self.samples,
            proposal_scale: self.proposal_scale,
            seed,
            chains: self.chains,
            adapt: self.adapt,
        }
    }

    pub fn weight_function(&self) -> Result<WeightFunction> {
        let kind = match self.weight {
            WeightChoice::Constant => WeightKind::Constant,
            WeightChoice::Rdpg => WeightKind::Rdpg,
            WeightChoice::Completion => WeightKind::Completion { p: self.p },
            WeightChoice::NoisyRdpg => WeightKind::NoisyRdpg { v: self.v },
            WeightChoice::InverseVariance => WeightKind::bernoulli_inverse_variance(),
        };
        Ok(builtin_weight(kind)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
