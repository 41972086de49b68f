use std::path::Path;

use rtdlab::features::{FeatureConfig, DEFAULT_HANDPICKED, DEFAULT_VARIANCE_THRESHOLD};
use rtdlab::ml::{PipelineConfig, TrainConfig, DEFAULT_TREES};
use rtdlab::probsat::{SolverConfig, DEFAULT_CB, DEFAULT_CM};
use rtdlab::rng::derive_seed;
use rtdlab::rtd::DEFAULT_ALPHA;
use serde::{Deserialize, Serialize};

use crate::store::CliError;

/// Everything a pipeline stage needs besides its inputs. Loaded from
/// `--config` (JSON), then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Never part of any output: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub instances: InstanceConfig,
    pub solver: SolverParams,
    pub filter: FilterConfig,
    pub sampling: SamplingConfig,
    pub fit: FitConfig,
    pub features: FeaturesConfig,
    pub train: TrainSettings,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub n: Vec<u32>,
    pub ratio: Vec<f64>,
    /// Instances per (n, ratio) pair.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub cb: f64,
    pub cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub node_budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub runs: usize,
    pub timeout: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    /// Probe budget in flips per variable.
    pub probe_flips_per_var: u64,
    pub probe_runs: usize,
    pub lobjois_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub trees: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub variance_threshold: f64,
    pub handpicked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// `predicted`, `none`, `fixed:<t>` or `luby:<a>`; a trailing `n` on the
    /// number multiplies by the instance's variable count.
    pub policies: Vec<String>,
    pub runs: usize,
    pub budget: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: None,
            instances: InstanceConfig::default(),
            solver: SolverParams::default(),
            filter: FilterConfig::default(),
            sampling: SamplingConfig::default(),
            fit: FitConfig::default(),
            features: FeaturesConfig::default(),
            train: TrainSettings::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig { n: vec![150], ratio: vec![4.26], count: 10 }
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { cb: DEFAULT_CB, cm: DEFAULT_CM }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { node_budget: 10_000_000 }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { runs: 100, timeout: 10_000_000 }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { alpha: DEFAULT_ALPHA }
    }
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let d = FeatureConfig::default();
        FeaturesConfig {
            probe_flips_per_var: 20,
            probe_runs: d.probe_runs,
            lobjois_probes: d.lobjois_probes,
        }
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            trees: DEFAULT_TREES,
            max_epochs: t.max_epochs,
            patience: t.patience,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            handpicked: DEFAULT_HANDPICKED.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            policies: vec!["predicted".into(), "luby:20n".into(), "none".into()],
            runs: 100,
            budget: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate = 1,
    Sample = 2,
    Features = 3,
    Train = 4,
    Evaluate = 5,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))
            }
        }
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, stage as u64)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { cb: self.solver.cb, cm: self.solver.cm, ..SolverConfig::default() }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            probe_runs: self.features.probe_runs,
            lobjois_probes: self.features.lobjois_probes,
            ..FeatureConfig::default()
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n_trees: self.train.trees,
            variance_threshold: self.train.variance_threshold,
            handpicked: self.train.handpicked.clone(),
            train: TrainConfig {
                max_epochs: self.train.max_epochs,
                patience: self.train.patience,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.into()));
        if self.instances.n.is_empty() || self.instances.ratio.is_empty() {
            return bad("instances.n and instances.ratio need at least one value");
        }
        if self.sampling.runs == 0 || self.sampling.timeout == 0 {
            return bad("sampling.runs and sampling.timeout must be positive");
        }
        if !(self.fit.alpha > 0.0 && self.fit.alpha < 1.0) {
            return bad("fit.alpha must lie in (0, 1)");
        }
        if self.evaluate.runs == 0 || self.evaluate.budget == 0 {
            return bad("evaluate.runs and evaluate.budget must be positive");
        }
        if self.workers == Some(0) {
            return bad("--workers must be at least 1");
        }
        self.solver().with_max_flips(1).validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}
