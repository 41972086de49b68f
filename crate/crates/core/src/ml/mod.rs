//! Learning a runtime distribution from instance features: a random forest
//! picks the family, small networks predict its parameters.

pub mod forest;
pub mod loss;
pub mod mlp;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{Dist, DistError, DistFamily, DistParams, RestartRecommendation};
use crate::features::{
    feature_index, fit_normalization, select_by_variance, FeatureError, FeatureVector, NormalizationSpec,
    DEFAULT_HANDPICKED, DEFAULT_VARIANCE_THRESHOLD, TIMING_FEATURE,
};
use crate::rng::derive_seed;
use crate::rtd::{RtdSample, WinnerSelection};

pub use forest::{train_forest, ForestModel, DEFAULT_TREES, MIN_FOREST_EXAMPLES};
pub use loss::{anchor_loss, anchor_loss_value, AnchorLoss, AnchorTarget, ParamScaler};
pub use mlp::{train_mlp, Loss, Mlp, MlpSpec, Rmse, TrainConfig, TrainLog};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least {needed} training examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("instance {0} has no Weibull and lognormal fits")]
    MissingFit(String),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// One training instance: raw features, its W-vs-L label and both fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub instance_id: String,
    pub features: FeatureVector,
    pub label: DistFamily,
    pub weibull: DistParams,
    pub lognormal: DistParams,
    /// Median-rank observed runtime and its empirical cumulative probability.
    pub anchor_x: f64,
    pub anchor_prob: f64,
}

impl TrainingExample {
    /// Label is whichever of Weibull and lognormal has the higher KS p-value
    /// (ties to Weibull); GP fits are ignored here.
    pub fn new(
        features: FeatureVector,
        sel: &WinnerSelection,
        sample: &RtdSample,
    ) -> Result<Self, MlError> {
        let missing = || MlError::MissingFit(sample.instance_id.clone());
        let w = sel.fit(DistFamily::Weibull).ok_or_else(missing)?;
        let l = sel.fit(DistFamily::Lognormal).ok_or_else(missing)?;
        if sample.flips.is_empty() {
            return Err(missing());
        }
        let i = (sample.flips.len() - 1) / 2;
        let x = sample.flips[i];
        let at_or_below = sample.flips.partition_point(|&f| f <= x);
        Ok(TrainingExample {
            instance_id: sample.instance_id.clone(),
            features,
            label: if w.p_value >= l.p_value {
                DistFamily::Weibull
            } else {
                DistFamily::Lognormal
            },
            weibull: w.params,
            lognormal: l.params,
            anchor_x: x as f64,
            anchor_prob: at_or_below as f64 / sample.total_runs() as f64,
        })
    }

    pub fn params(&self, family: DistFamily) -> DistParams {
        match family {
            DistFamily::Lognormal => self.lognormal,
            _ => self.weibull,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_trees: usize,
    pub variance_threshold: f64,
    pub handpicked: Vec<String>,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_trees: DEFAULT_TREES,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            handpicked: DEFAULT_HANDPICKED.iter().map(|s| s.to_string()).collect(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyNet {
    pub net: Mlp,
    pub scaler: ParamScaler,
}

impl FamilyNet {
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<(f64, f64)>, MlError> {
        let out = self.net.predict(x)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|r| self.scaler.decode([r[0], r[1]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub n_examples: usize,
    pub config: PipelineConfig,
    pub weibull_log: TrainLog,
    pub lognormal_log: TrainLog,
    pub location_log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub selected_features: Vec<String>,
    pub normalization: NormalizationSpec,
    pub forest: ForestModel,
    pub weibull_net: FamilyNet,
    pub lognormal_net: FamilyNet,
    pub location_net: Mlp,
    /// Location net outputs are in units of the mean training location.
    pub location_scale: f64,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePrediction {
    pub family: DistFamily,
    pub params: DistParams,
    pub recommendation: RestartRecommendation,
}

fn matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

/// Normalizes, selects features and trains the forest, both family nets and
/// the location net. Each family net is trained on every instance's fit of
/// that family, not only on instances labelled with it.
pub fn train_pipeline(
    examples: &[TrainingExample],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<ModelBundle, MlError> {
    if examples.len() < MIN_FOREST_EXAMPLES {
        return Err(MlError::TooFewExamples {
            needed: MIN_FOREST_EXAMPLES,
            got: examples.len(),
        });
    }
    let raw: Vec<FeatureVector> = examples.iter().map(|e| e.features.clone()).collect();
    let mut normalization = fit_normalization(&raw)?;
    // unused by every model; keeps the bundle independent of wall-clock time
    let t = feature_index(TIMING_FEATURE)?;
    normalization.min[t] = 0.0;
    normalization.max[t] = 0.0;
    let normed: Vec<FeatureVector> = raw.iter().map(|v| normalization.apply(v)).collect();
    let hand: Vec<&str> = cfg.handpicked.iter().map(String::as_str).collect();
    let selected = select_by_variance(&normed, cfg.variance_threshold, &hand, &[TIMING_FEATURE])?;

    let raw_sel = raw.iter().map(|v| v.select(&selected)).collect::<Result<Vec<_>, _>>()?;
    let norm_sel = normed.iter().map(|v| v.select(&selected)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<DistFamily> = examples.iter().map(|e| e.label).collect();
    let forest = train_forest(&raw_sel, &labels, cfg.n_trees, derive_seed(seed, 0))?;

    let x = matrix(&norm_sel);
    let d = selected.len();
    let mut logs = Vec::new();
    let mut nets = Vec::new();
    for (k, fam) in [DistFamily::Weibull, DistFamily::Lognormal].into_iter().enumerate() {
        let params: Vec<DistParams> = examples.iter().map(|e| e.params(fam)).collect();
        let scaler = ParamScaler::fit(fam, &params)?;
        let targets = examples
            .iter()
            .map(|e| AnchorTarget {
                anchor_x: e.anchor_x - e.params(fam).location,
                anchor_prob: e.anchor_prob,
                label_shape: e.params(fam).shape,
            })
            .collect();
        let loss = AnchorLoss { scaler, targets };
        let tc = TrainConfig {
            seed: derive_seed(seed, 1 + k as u64),
            ..cfg.train
        };
        let (net, log) = train_mlp(MlpSpec::family_net(d), &x, &loss, &tc)?;
        nets.push(FamilyNet { net, scaler });
        logs.push(log);
    }

    let locs: Vec<f64> = examples.iter().map(|e| e.weibull.location).collect();
    let mean_loc = locs.iter().sum::<f64>() / locs.len() as f64;
    let location_scale = if mean_loc > 0.0 { mean_loc } else { 1.0 };
    let loss = Rmse {
        targets: locs.iter().map(|l| l / location_scale).collect(),
    };
    let tc = TrainConfig {
        seed: derive_seed(seed, 3),
        ..cfg.train
    };
    let (location_net, location_log) = train_mlp(MlpSpec::location_net(d), &x, &loss, &tc)?;

    let lognormal_net = nets.pop().unwrap();
    let weibull_net = nets.pop().unwrap();
    let lognormal_log = logs.pop().unwrap();
    let weibull_log = logs.pop().unwrap();
    Ok(ModelBundle {
        schema_version: SCHEMA_VERSION,
        selected_features: selected,
        normalization,
        forest,
        weibull_net,
        lognormal_net,
        location_net,
        location_scale,
        meta: TrainingMeta {
            seed,
            n_examples: examples.len(),
            config: cfg.clone(),
            weibull_log,
            lognormal_log,
            location_log,
        },
    })
}

/// A cutoff at or below the predicted location can never succeed and is
/// dropped.
pub fn compose_recommendation(rec: RestartRecommendation, location: f64) -> RestartRecommendation {
    match rec {
        RestartRecommendation::RestartAt { t, .. } if t <= location => {
            RestartRecommendation::NoRestart
        }
        r => r,
    }
}

impl ModelBundle {
    pub fn check(&self) -> Result<(), MlError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(MlError::Schema(self.schema_version));
        }
        self.normalization.check()?;
        Ok(())
    }

    /// Family and parameters for each raw feature vector.
    pub fn predict_params(
        &self,
        raw: &[FeatureVector],
    ) -> Result<Vec<(DistFamily, DistParams)>, MlError> {
        self.check()?;
        let raw_sel = raw
            .iter()
            .map(|v| v.select(&self.selected_features))
            .collect::<Result<Vec<_>, _>>()?;
        let norm_sel = raw
            .iter()
            .map(|v| self.normalization.apply(v).select(&self.selected_features))
            .collect::<Result<Vec<_>, _>>()?;
        let x = matrix(&norm_sel);
        let w = self.weibull_net.predict(&x)?;
        let l = self.lognormal_net.predict(&x)?;
        let loc = self.location_net.predict(&x)?;
        Ok(raw_sel
            .iter()
            .enumerate()
            .map(|(i, f)| match self.forest.predict(f) {
                DistFamily::Lognormal => (
                    DistFamily::Lognormal,
                    DistParams::new(l[i].0, l[i].1, 0.0),
                ),
                _ => (
                    DistFamily::Weibull,
                    DistParams::new(w[i].0, w[i].1, loc[[i, 0]] * self.location_scale),
                ),
            })
            .collect())
    }
}

/// Predicted distribution and the restart cutoff derived from it.
pub fn pipeline_predict(
    bundle: &ModelBundle,
    raw: &FeatureVector,
) -> Result<PipelinePrediction, MlError> {
    let (family, params) = bundle.predict_params(std::slice::from_ref(raw))?[0];
    prediction_from(family, params)
}

pub fn prediction_from(family: DistFamily, params: DistParams) -> Result<PipelinePrediction, MlError> {
    let dist = Dist::new(family, params)?;
    Ok(PipelinePrediction {
        family,
        params,
        recommendation: compose_recommendation(dist.optimal_restart_time(), params.location),
    })
}

/// Deterministic assignment of `n` items to `k` folds (shuffled, near-equal sizes).
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k.max(1);
    }
    fold
}

/// (recall(W) + recall(L)) / 2.
pub fn balanced_accuracy(truth: &[DistFamily], pred: &[DistFamily]) -> f64 {
    let recall = |c: DistFamily| {
        let total = truth.iter().filter(|&&t| t == c).count();
        let hit = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count();
        (total > 0).then(|| hit as f64 / total as f64)
    };
    let r: Vec<f64> = [DistFamily::Weibull, DistFamily::Lognormal]
        .into_iter()
        .filter_map(recall)
        .collect();
    r.iter().sum::<f64>() / r.len().max(1) as f64
}

/// Out-of-fold predictions: for each fold, the pipeline is trained on the
/// remaining folds and applied to the held-out instances.
pub fn cross_fit_predictions(
    examples: &[TrainingExample],
    k: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<PipelinePrediction>, MlError> {
    let fold = kfold_assignment(examples.len(), k, seed);
    let mut out: Vec<Option<PipelinePrediction>> = vec![None; examples.len()];
    for f in 0..k {
        let train: Vec<TrainingExample> = examples
            .iter()
            .zip(&fold)
            .filter(|(_, &g)| g != f)
            .map(|(e, _)| e.clone())
            .collect();
        let test: Vec<usize> = (0..examples.len()).filter(|&i| fold[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let bundle = train_pipeline(&train, cfg, derive_seed(seed, 1 + f as u64))?;
        let raw: Vec<FeatureVector> = test.iter().map(|&i| examples[i].features.clone()).collect();
        for (&i, (fam, p)) in test.iter().zip(bundle.predict_params(&raw)?) {
            out[i] = Some(prediction_from(fam, p)?);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every index is in a fold")).collect())
}

/// k-fold balanced accuracy of the family forest alone, on the selected raw features.
pub fn cross_validate_forest(
    examples: &[TrainingExample],
    k: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<f64, MlError> {
    let fold = kfold_assignment(examples.len(), k, seed);
    let mut pred = vec![DistFamily::Weibull; examples.len()];
    for f in 0..k {
        let train: Vec<&TrainingExample> =
            examples.iter().zip(&fold).filter(|(_, &g)| g != f).map(|(e, _)| e).collect();
        let raw: Vec<FeatureVector> = train.iter().map(|e| e.features.clone()).collect();
        let normed: Vec<FeatureVector> = {
            let spec = fit_normalization(&raw)?;
            raw.iter().map(|v| spec.apply(v)).collect()
        };
        let hand: Vec<&str> = cfg.handpicked.iter().map(String::as_str).collect();
        let selected =
            select_by_variance(&normed, cfg.variance_threshold, &hand, &[TIMING_FEATURE])?;
        let xs = raw.iter().map(|v| v.select(&selected)).collect::<Result<Vec<_>, _>>()?;
        let ys: Vec<DistFamily> = train.iter().map(|e| e.label).collect();
        let forest = train_forest(&xs, &ys, cfg.n_trees, derive_seed(seed, 1 + f as u64))?;
        for i in (0..examples.len()).filter(|&i| fold[i] == f) {
            pred[i] = forest.predict(&examples[i].features.select(&selected)?);
        }
    }
    let truth: Vec<DistFamily> = examples.iter().map(|e| e.label).collect();
    Ok(balanced_accuracy(&truth, &pred))
}
