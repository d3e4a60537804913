//! JSON configuration documents for the subcommands and the observed-data
//! file format they share. Paths inside a config are resolved relative to
//! the process working directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use epismc::inference::Prior;
use epismc::model::{ModelKind, ModelParams};
use epismc::smc::PmfMode;

/// Observed-data file: the reported counts and, optionally, the latent
/// truth that generated them as one phase digit per agent per time step
/// (0 = susceptible, 1 = infected, 2 = recovered).
#[derive(Serialize, Deserialize)]
pub struct DataDocument {
    pub y: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_true: Option<Vec<Vec<u8>>>,
}

impl DataDocument {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading data file {}", path.display()))?;
        let doc: DataDocument = serde_json::from_str(&text)
            .with_context(|| format!("parsing data file {}", path.display()))?;
        if doc.y.is_empty() {
            anyhow::bail!("data file {} has no observations", path.display());
        }
        Ok(doc)
    }
}

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_exact() -> PmfMode {
    PmfMode::Exact
}

fn default_surface_particles() -> usize {
    64
}

fn default_chain_particles() -> usize {
    128
}

fn default_pmmh_step() -> f64 {
    0.2
}

fn default_gibbs_step() -> f64 {
    0.08
}

fn default_kernel_weight() -> f64 {
    0.5
}

fn default_block_size() -> usize {
    5
}

fn default_draws() -> usize {
    1000
}

/// `simulate`: draw one trajectory and write the data file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Existing model document to simulate from.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Model generator; exactly one of `model` / `generate` must be given.
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
    /// Final time index T; the series has T+1 observations.
    pub horizon: usize,
    /// Include the latent trajectory in the data file.
    #[serde(default)]
    pub include_truth: bool,
    /// Where to write the model document (required with `generate`).
    #[serde(default)]
    pub model_out: Option<PathBuf>,
}

/// Synthetic model: complete contact graph over `n` agents with generated
/// covariates and the given parameters.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "GenerateConfig::default_kind")]
    pub kind: ModelKind,
    pub n: usize,
    #[serde(default)]
    pub covariates: CovariateGen,
    pub theta: ModelParams,
}

impl GenerateConfig {
    fn default_kind() -> ModelKind {
        ModelKind::Sis
    }
}

/// Covariate generator: an optional leading intercept column followed by
/// independent Normal(mean, sd) columns.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateGen {
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default = "default_one")]
    pub normal_dims: usize,
    #[serde(default)]
    pub normal_mean: f64,
    #[serde(default = "CovariateGen::default_sd")]
    pub normal_sd: f64,
}

impl CovariateGen {
    fn default_sd() -> f64 {
        1.0
    }

    pub fn dims(&self) -> usize {
        usize::from(self.intercept) + self.normal_dims
    }
}

impl Default for CovariateGen {
    fn default() -> Self {
        Self {
            intercept: true,
            normal_dims: 1,
            normal_mean: 0.0,
            normal_sd: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMethod {
    Bpf,
    Apf,
    Csmc,
}

impl FilterMethod {
    pub fn name(self) -> &'static str {
        match self {
            FilterMethod::Bpf => "bpf",
            FilterMethod::Apf => "apf",
            FilterMethod::Csmc => "csmc",
        }
    }
}

/// Likelihood estimator for the MCMC and prediction commands: a particle
/// filter, or the exact forward algorithm at oracle sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Exact,
    Bpf,
    Apf,
    Csmc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistKind {
    #[default]
    Count,
    Clustered,
}

/// `filter`: replicate likelihood estimation with per-step diagnostics.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub method: FilterMethod,
    pub particles: usize,
    #[serde(default = "default_one")]
    pub reps: usize,
    #[serde(default = "default_exact")]
    pub mode: PmfMode,
    #[serde(default)]
    pub twist: TwistKind,
    #[serde(default)]
    pub clusters: Option<Vec<u32>>,
    #[serde(default)]
    pub perturb: Option<PerturbConfig>,
}

/// Observation perturbation applied before filtering: `halve` replaces
/// `y_t` by `⌊y_t/2⌋`, `double` by `min(2 y_t, N)`, at the listed times.
#[derive(Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub times: Vec<usize>,
    pub op: PerturbOp,
}

#[derive(Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbOp {
    Halve,
    Double,
}

impl PerturbConfig {
    pub fn apply(&self, y: &mut [u64], n: usize) -> anyhow::Result<()> {
        let horizon = y.len();
        for &t in &self.times {
            let obs = y.get_mut(t).with_context(|| {
                format!("perturbation time {t} outside the series (length {horizon})")
            })?;
            *obs = match self.op {
                PerturbOp::Halve => *obs / 2,
                PerturbOp::Double => (*obs * 2).min(n as u64),
            };
        }
        Ok(())
    }
}

/// `surface`: grid evaluation of the estimated log likelihood over two
/// parameter coordinates.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    #[serde(default = "default_surface_particles")]
    pub particles: usize,
    pub x: AxisConfig,
    pub y: AxisConfig,
    #[serde(default = "default_exact")]
    pub mode: PmfMode,
    #[serde(default)]
    pub twist: TwistKind,
    #[serde(default)]
    pub clusters: Option<Vec<u32>>,
}

/// One grid axis: a parameter coordinate (`"beta0[j]"`, `"beta_lambda[j]"`,
/// `"beta_gamma[j]"` or `"rho"`) swept over `steps` equispaced values.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub coord: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// Prior over the regression coordinates: a shared Normal, or one per
/// coordinate (β₀ then β_λ then β_γ). The reporting probability always has
/// the Uniform(0,1) prior.
#[derive(Clone, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum PriorConfig {
    Isotropic { mean: f64, sd: f64 },
    PerCoordinate { means: Vec<f64>, sds: Vec<f64> },
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Isotropic { mean: 0.0, sd: 3.0 }
    }
}

impl PriorConfig {
    pub fn build(&self, d: usize) -> anyhow::Result<Prior> {
        let prior = match self {
            PriorConfig::Isotropic { mean, sd } => Prior::isotropic(3 * d, *mean, *sd)?,
            PriorConfig::PerCoordinate { means, sds } => Prior::new(means.clone(), sds.clone())?,
        };
        if prior.beta_len() != 3 * d {
            anyhow::bail!(
                "prior covers {} coordinates, the model has 3·d = {}",
                prior.beta_len(),
                3 * d
            );
        }
        Ok(prior)
    }
}

/// `pmmh`: particle marginal Metropolis–Hastings chains.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmmhConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub estimator: EstimatorKind,
    #[serde(default = "default_chain_particles")]
    pub particles: usize,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub thin: usize,
    #[serde(default = "default_one")]
    pub reps: usize,
    #[serde(default = "default_pmmh_step")]
    pub step_sd: f64,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_exact")]
    pub mode: PmfMode,
    #[serde(default)]
    pub twist: TwistKind,
    #[serde(default)]
    pub clusters: Option<Vec<u32>>,
    #[serde(default)]
    pub update_mask: Option<Vec<bool>>,
}

/// `gibbs`: data-augmentation chains alternating trajectory kernels with a
/// Metropolis parameter update.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsCliConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub thin: usize,
    #[serde(default = "default_one")]
    pub reps: usize,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_kernel_weight")]
    pub single_site_weight: f64,
    #[serde(default = "default_kernel_weight")]
    pub swap_weight: f64,
    #[serde(default)]
    pub block_weight: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_true")]
    pub update_theta: bool,
    #[serde(default = "default_gibbs_step")]
    pub theta_step_sd: f64,
    #[serde(default)]
    pub update_mask: Option<Vec<bool>>,
}

/// `predict`: posterior-predictive quantiles of future counts from the
/// observations up to `t_obs`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    /// Last observed time index; prediction covers `t_obs+1 ..= T`.
    pub t_obs: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Particles of the per-draw filter that samples the state at `t_obs`.
    #[serde(default = "default_chain_particles")]
    pub particles: usize,
    pub inference: InferenceConfig,
}

/// Parameter-inference stage of `predict`: one PMMH chain on the prefix.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    pub estimator: EstimatorKind,
    #[serde(default = "default_chain_particles")]
    pub particles: usize,
    pub iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub thin: usize,
    #[serde(default = "default_pmmh_step")]
    pub step_sd: f64,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_exact")]
    pub mode: PmfMode,
    #[serde(default)]
    pub twist: TwistKind,
    #[serde(default)]
    pub clusters: Option<Vec<u32>>,
}

/// `oracle-check`: sizes of the exact-reference validation suites.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleCheckConfig {
    /// Random instances of the count-distribution identities.
    pub instances: usize,
    /// Largest population for the enumeration-backed suites (at most 8).
    pub n_max: usize,
    /// Replicates of each filter in the unbiasedness suite.
    pub unbiased_runs: usize,
    /// Random rate pairs in the divergence-bound suite.
    pub bound_pairs: usize,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            n_max: 6,
            unbiased_runs: 2000,
            bound_pairs: 200,
        }
    }
}
