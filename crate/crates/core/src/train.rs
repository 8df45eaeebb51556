//! Toy end-to-end training on synthetic scenes.
//!
//! The model splits the scene features into two halves standing in for the
//! two sensor streams, concatenates them back, runs the hierarchy and
//! classifies every voxel with the MLP head. Training is plain gradient
//! descent on `CE + λ1·Lovász`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::head::{classify, fuse_concat, split_channels, Mlp, OccupancyPrediction};
use crate::hierarchy::{HierarchyConfig, HierarchyParams, LevelPlan};
use crate::loss::{cross_entropy, lovasz_softmax_logits, total_loss, LossParts, LossWeights, IGNORE_LABEL};
use crate::metrics::{iou_from_confusion, ConfusionMatrix, IouReport};
use crate::nn::Parameters;
use crate::ordering::OrderingScheme;
use crate::synth::{generate_scene_with, SceneOptions, SceneSample};
use crate::tensor::{FeatureGrid, GridDims};

/// First seed of the held-out range; training seeds must stay below it.
pub const EVAL_SEED_START: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Seeds the parameter initialization.
    pub seed: u64,
    pub dims: [usize; 3],
    pub classes: usize,
    pub batch_size: usize,
    pub hierarchy: HierarchyConfig,
    pub weights: LossWeights,
    pub scene: SceneOptions,
    /// Step `s` (1-based) trains on scenes `train_seed_start + (s−1)·batch ..`.
    pub train_seed_start: u64,
    pub eval_seeds: Range<u64>,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let scene = SceneOptions::default();
        let hierarchy = HierarchyConfig::new(scene.channels, 4);
        Self {
            steps: 300,
            lr: 0.1,
            seed: 0,
            dims: [16, 16, 8],
            classes: 4,
            batch_size: 1,
            hierarchy,
            weights: LossWeights::default(),
            scene,
            train_seed_start: 0,
            eval_seeds: EVAL_SEED_START..EVAL_SEED_START + 8,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn scheme(&self) -> OrderingScheme {
        self.hierarchy.scheme
    }

    pub fn with_scheme(mut self, scheme: impl Into<OrderingScheme>) -> Self {
        self.hierarchy.scheme = scheme.into();
        self
    }

    pub fn grid_dims(&self) -> Result<GridDims> {
        GridDims::spatial(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(contract("steps, batch_size and eval_every must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(contract(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.hierarchy.base_width != self.scene.channels {
            return Err(contract(format!(
                "hierarchy width {} must equal the scene channel count {}",
                self.hierarchy.base_width, self.scene.channels
            )));
        }
        let last_train = (self.steps * self.batch_size) as u64;
        let train = self.train_seed_start..self.train_seed_start.saturating_add(last_train);
        if train.start < self.eval_seeds.end && self.eval_seeds.start < train.end {
            return Err(contract(format!("training seeds {train:?} overlap eval seeds {:?}", self.eval_seeds)));
        }
        self.grid_dims()?;
        self.hierarchy.validate()
    }
}

/// Trainable model plus the task it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub dims: [usize; 3],
    pub classes: usize,
    pub scene: SceneOptions,
    pub hierarchy: HierarchyParams,
    pub head: Mlp,
}

impl Parameters for ToyModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.hierarchy.params();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.hierarchy.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

struct Forward {
    hidden: FeatureGrid,
    cache: crate::hierarchy::HierarchyCache,
    head_cache: crate::head::MlpCache,
    prediction: OccupancyPrediction,
}

impl ToyModel {
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hierarchy = HierarchyParams::init(config.hierarchy.clone(), &mut rng)?;
        let head = Mlp::init(config.hierarchy.base_width, config.classes, &mut rng);
        Ok(Self { dims: config.dims, classes: config.classes, scene: config.scene, hierarchy, head })
    }

    pub fn plan(&self) -> Result<LevelPlan> {
        let [w, h, d] = self.dims;
        LevelPlan::new(&self.hierarchy.config, GridDims::spatial(w, h, d)?)
    }

    pub fn scene(&self, seed: u64) -> Result<SceneSample> {
        let [w, h, d] = self.dims;
        generate_scene_with(seed, GridDims::spatial(w, h, d)?, self.classes, &self.scene)
    }

    /// Both sensor halves, fused back along channels.
    fn fused_input(features: &FeatureGrid) -> Result<FeatureGrid> {
        let (lidar, camera) = split_channels(features, features.channels() / 2)?;
        fuse_concat(&lidar, &camera)
    }

    pub fn predict(&self, plan: &LevelPlan, features: &FeatureGrid) -> Result<OccupancyPrediction> {
        let hidden = self.hierarchy.forward(plan, &Self::fused_input(features)?)?;
        classify(&hidden, &self.head, self.classes)
    }

    fn forward_train(&self, plan: &LevelPlan, features: &FeatureGrid) -> Result<Forward> {
        let (hidden, cache) = self.hierarchy.forward_cached(plan, &Self::fused_input(features)?)?;
        let (logits, head_cache) = self.head.forward(hidden.data());
        let prediction = OccupancyPrediction::new(FeatureGrid::from_vec(hidden.dims().with_channels(self.classes), logits)?)?;
        Ok(Forward { hidden, cache, head_cache, prediction })
    }

    /// Loss parts on one scene; accumulates `scale ·` gradients into `grad`.
    fn loss_and_grad(
        &self,
        plan: &LevelPlan,
        sample: &SceneSample,
        weights: &LossWeights,
        scale: f64,
        grad: &mut ToyModel,
    ) -> Result<LossParts> {
        let f = self.forward_train(plan, &sample.features)?;
        let (ce, dce) = cross_entropy(&f.prediction, &sample.labels, IGNORE_LABEL)?;
        let (iou, diou) = lovasz_softmax_logits(&f.prediction, &sample.labels, IGNORE_LABEL)?;
        let dlogits: Vec<f64> =
            dce.data().iter().zip(diou.data()).map(|(a, b)| scale * (a + weights.iou * b)).collect();
        let dhidden = self.head.backward(f.hidden.data(), &f.head_cache, &dlogits, &mut grad.head);
        let dhidden = FeatureGrid::from_vec(f.hidden.dims(), dhidden)?;
        self.hierarchy.backward(plan, &f.cache, &dhidden, &mut grad.hierarchy)?;
        Ok(LossParts { ce, iou, ..Default::default() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
    pub ce: f64,
    pub lovasz: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub miou: Option<f64>,
}

pub struct TrainOutcome {
    pub log: Vec<TrainLogEntry>,
    pub model: ToyModel,
    /// Held-out report after the last step.
    pub report: IouReport,
}

/// A trained model together with the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub config: TrainConfig,
    pub model: ToyModel,
}

pub fn train_toy(config: &TrainConfig) -> Result<TrainOutcome> {
    train_toy_with(config, |_| {})
}

/// Like [`train_toy`], handing each log entry to `on_entry` as it is made.
pub fn train_toy_with(config: &TrainConfig, mut on_entry: impl FnMut(&TrainLogEntry)) -> Result<TrainOutcome> {
    let mut model = ToyModel::init(config)?;
    let plan = model.plan()?;
    let scale = 1.0 / config.batch_size as f64;
    let mut log = Vec::with_capacity(config.steps);
    let mut report = None;
    for step in 1..=config.steps {
        let mut grad = model.zeroed();
        let (mut ce, mut iou) = (0.0, 0.0);
        for item in 0..config.batch_size {
            let seed = config.train_seed_start + ((step - 1) * config.batch_size + item) as u64;
            let parts = model.loss_and_grad(&plan, &model.scene(seed)?, &config.weights, scale, &mut grad)?;
            ce += parts.ce * scale;
            iou += parts.iou * scale;
        }
        let loss = total_loss(&LossParts { ce, iou, ..Default::default() }, &config.weights);
        if !loss.is_finite() || grad.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric(format!("training diverged at step {step}")));
        }
        model.sgd_step(&grad, config.lr);
        let mut entry = TrainLogEntry { step, loss, ce, lovasz: iou, miou: None };
        if step % config.eval_every == 0 || step == config.steps {
            let r = evaluate(&model, config.eval_seeds.clone())?;
            entry.miou = r.miou;
            report = Some(r);
        }
        on_entry(&entry);
        log.push(entry);
    }
    let report = report.expect("the last step always evaluates");
    Ok(TrainOutcome { log, model, report })
}

/// Confusion over the scenes generated from `seeds`, merged in seed order.
pub fn evaluate(model: &ToyModel, seeds: Range<u64>) -> Result<IouReport> {
    let plan = model.plan()?;
    let seeds: Vec<u64> = seeds.collect();
    let matrices = seeds
        .par_iter()
        .map(|&seed| {
            let sample = model.scene(seed)?;
            let pred = model.predict(&plan, &sample.features)?;
            let mut cm = ConfusionMatrix::new(model.classes)?;
            cm.accumulate(&pred.labels(), &sample.labels)?;
            Ok(cm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ConfusionMatrix::new(model.classes)?;
    for cm in &matrices {
        total.merge(cm)?;
    }
    Ok(iou_from_confusion(&total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        let scene = SceneOptions { channels: 4, ..Default::default() };
        TrainConfig {
            steps: 3,
            dims: [4, 4, 4],
            scene,
            hierarchy: HierarchyConfig { blocks_per_group: 1, state_dim: 2, ..HierarchyConfig::new(4, 2) },
            eval_seeds: EVAL_SEED_START..EVAL_SEED_START + 2,
            eval_every: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let cfg = TrainConfig { lr: 0.0, train_seed_start: 5, batch_size: 1, ..tiny() };
        let out = train_toy(&cfg).unwrap();
        assert_eq!(out.model, ToyModel::init(&cfg).unwrap());
        // each step sees a different scene, so compare against a fresh model on that scene
        for (i, entry) in out.log.iter().enumerate() {
            let single = TrainConfig { steps: 1, train_seed_start: 5 + i as u64, ..cfg.clone() };
            assert_eq!(train_toy(&single).unwrap().log[0].loss, entry.loss);
        }
    }

    #[test]
    fn one_step_logs_once_and_evaluates() {
        let out = train_toy(&TrainConfig { steps: 1, ..tiny() }).unwrap();
        assert_eq!(out.log.len(), 1);
        assert!(out.log[0].miou.is_some());
        assert_eq!(out.log[0].loss, out.log[0].ce + out.log[0].lovasz);
    }

    #[test]
    fn evaluation_schedule() {
        let out = train_toy(&TrainConfig { steps: 5, ..tiny() }).unwrap();
        let evaluated: Vec<_> = out.log.iter().filter(|e| e.miou.is_some()).map(|e| e.step).collect();
        assert_eq!(evaluated, vec![2, 4, 5]);
        assert_eq!(out.report.miou, out.log[4].miou);
    }

    #[test]
    fn reproducible() {
        let a = train_toy(&tiny()).unwrap();
        let b = train_toy(&tiny()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn divergence_reports_step() {
        let cfg = TrainConfig { lr: 1e300, steps: 4, ..tiny() };
        match train_toy(&cfg) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("step")),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected divergence"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { steps: 0, ..tiny() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..tiny() }.validate().is_err());
        assert!(TrainConfig { eval_seeds: 0..3, ..tiny() }.validate().is_err());
        let mut wrong = tiny();
        wrong.scene.channels = 6;
        assert!(wrong.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_scenes_are_undefined() {
        let model = ToyModel::init(&tiny()).unwrap();
        assert!(evaluate(&model, 10..10).unwrap().undefined);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"steps": 7}"#).unwrap();
        assert_eq!(cfg, TrainConfig { steps: 7, ..TrainConfig::default() });
        assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 7}"#).is_err());
    }
}
