//! Run configuration: one JSON file driving all workflow steps. Paths are
//! resolved relative to the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use predstack_core::dataset::{Dataset, Schema, VariableRole};
use predstack_core::model::{validate_ensemble, ModelSpec};
use predstack_core::sampler::{SamplerConfig, Trajectory};
use predstack_core::stacking::Objective;

#[derive(Debug, Clone, Deserialize)]
pub struct ModelPaths {
    pub core: PathBuf,
    pub candidates: Vec<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SamplerSettings {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default = "default_max_leapfrog")]
    pub max_leapfrog: usize,
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
}

fn default_chains() -> usize {
    4
}
fn default_warmup() -> usize {
    1000
}
fn default_draws() -> usize {
    1000
}
fn default_target_accept() -> f64 {
    0.8
}
fn default_max_leapfrog() -> usize {
    1024
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            chains: default_chains(),
            warmup: default_warmup(),
            draws: default_draws(),
            target_accept: default_target_accept(),
            max_leapfrog: default_max_leapfrog(),
            trajectory: None,
        }
    }
}

/// Quartile-binning derivation applied after loading the data.
#[derive(Debug, Clone, Deserialize)]
pub struct DeriveSpec {
    pub column: String,
    pub name: String,
    pub role: VariableRole,
}

/// Which focal contrast the gap tables report. The default convention is
/// reference minus comparison; `--gap-sign formula` swaps it.
#[derive(Debug, Clone, Deserialize)]
pub struct GapSpec {
    pub variable: String,
    pub reference: String,
    pub comparison: String,
}

/// Optional x-axis mapping for the comparison plot: per level of `level_of`,
/// the median of `numeric` becomes the x coordinate.
#[derive(Debug, Clone, Deserialize)]
pub struct CompareX {
    pub numeric: String,
    pub level_of: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveFlag {
    Logscore,
    Lsq,
}

impl From<ObjectiveFlag> for Objective {
    fn from(value: ObjectiveFlag) -> Self {
        match value {
            ObjectiveFlag::Logscore => Objective::LogScore,
            ObjectiveFlag::Lsq => Objective::SquaredError,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub models: ModelPaths,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveFlag,
    #[serde(default)]
    pub ppc_groupings: Vec<Vec<String>>,
    #[serde(default)]
    pub holdout: Option<String>,
    #[serde(default = "default_profile_quantiles")]
    pub profile_quantiles: Vec<f64>,
    #[serde(default)]
    pub derive: Vec<DeriveSpec>,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub gap: Option<GapSpec>,
    #[serde(default)]
    pub compare_x: Option<CompareX>,
}

fn default_objective() -> ObjectiveFlag {
    ObjectiveFlag::Logscore
}

fn default_profile_quantiles() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

/// The fully resolved run: config plus loaded model specs.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub core: ModelSpec,
    pub candidates: Vec<ModelSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.data = base.join(&config.data);
        config.schema = base.join(&config.schema);
        config.models.core = base.join(&config.models.core);
        config.models.candidates =
            config.models.candidates.iter().map(|p| base.join(p)).collect();
        config.out = base.join(&config.out);
        Ok(config)
    }

    pub fn resolve(self) -> Result<ResolvedRun> {
        if self.models.candidates.is_empty() {
            bail!("config field models.candidates: at least one candidate model is required");
        }
        for &q in &self.profile_quantiles {
            if !(0.0..=1.0).contains(&q) {
                bail!("config field profile_quantiles: {q} outside [0,1]");
            }
        }
        let core = load_model_spec(&self.models.core)?;
        let candidates: Vec<ModelSpec> = self
            .models
            .candidates
            .iter()
            .map(|p| load_model_spec(p))
            .collect::<Result<_>>()?;
        validate_ensemble(&core, &candidates)
            .map_err(|e| anyhow::anyhow!("config field models: {e}"))?;
        Ok(ResolvedRun { config: self, core, candidates })
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.sampler.chains,
            warmup: self.sampler.warmup,
            draws: self.sampler.draws,
            target_accept: self.sampler.target_accept,
            max_leapfrog: self.sampler.max_leapfrog,
            seed: self.seed,
            trajectory: self.sampler.trajectory.unwrap_or(Trajectory::Nuts),
        }
    }

    /// Loads the data, applies role schema and quartile derivations.
    pub fn load_data(&self) -> Result<Dataset> {
        let schema_text = std::fs::read_to_string(&self.schema)
            .with_context(|| format!("cannot read schema {}", self.schema.display()))?;
        let schema: Schema = serde_json::from_str(&schema_text)
            .with_context(|| format!("invalid schema {}", self.schema.display()))?;
        let mut data = Dataset::load_csv(&self.data, &schema)
            .with_context(|| format!("cannot load data {}", self.data.display()))?;
        for d in &self.derive {
            let (next, binning) = data
                .quartile_bin(&d.column, &d.name, d.role)
                .with_context(|| format!("derive {} from {}", d.name, d.column))?;
            log::info!(
                "derived {} from {} at cuts {:?}",
                d.name,
                d.column,
                binning.cuts
            );
            data = next;
        }
        Ok(data)
    }
}

fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model spec {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid model spec {}", path.display()))
}
