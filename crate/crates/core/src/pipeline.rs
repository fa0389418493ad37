//! Multi-stage iterative refinement over the feature pyramid.
//!
//! Stage 1 anchors come from the prototype generator on level 5. Every stage
//! samples its level (fusing LiDAR features when present), predicts one
//! proposal per anchor and hands all proposals on as the next anchors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchors::{
    combine_metas, materialize, pool_and_weigh_batch, Anchor3D, AnchorMetas, MetaRanges, MetaScaling, PaagWeights,
    PrototypeBank,
};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::head::{predict_batch, HeadWeights, Proposal};
use crate::sampling::{fuse, sample_anchor, sample_anchor_lidar, AnchorFeature, FeatureMap, FeatureVolume};

/// Level the anchor generator reads.
pub const GENERATOR_LEVEL: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub level: u8,
    pub weights: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl Default for StagePlan {
    fn default() -> Self {
        let stage = |i: usize, level: u8| Stage { level, weights: format!("stage{i}") };
        Self { stages: vec![stage(0, 5), stage(1, 5), stage(2, 4), stage(3, 3)] }
    }
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("stage plan is empty".into()));
        }
        if let Some(s) = self.stages.iter().find(|s| !(3..=5).contains(&s.level)) {
            return Err(Error::InvalidConfig(format!("pyramid level {} not in 3..=5", s.level)));
        }
        Ok(())
    }

    pub fn weight_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.stages.iter().map(|s| s.weights.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Sensor inputs for one frame.
#[derive(Debug, Clone)]
pub struct FrameInputs {
    pub rig: CameraRig,
    pub features: BTreeMap<u8, FeatureMap>,
    pub lidar: Option<BTreeMap<u8, FeatureVolume>>,
}

/// Sample-adaptive sparse anchor generation.
#[derive(Debug, Clone)]
pub struct AnchorGenerator {
    pub bank: PrototypeBank,
    pub paag: PaagWeights,
    pub ranges: MetaRanges,
    pub scaling: MetaScaling,
    pub y_samples: Vec<f64>,
}

pub type GeneratedAnchors = (Vec<AnchorMetas>, Vec<Anchor3D>);

impl AnchorGenerator {
    pub fn generate(&self, feature: &FeatureMap) -> Result<GeneratedAnchors> {
        Ok(self.generate_batch(&[feature])?.pop().expect("one frame in, one out"))
    }

    pub fn generate_batch(&self, features: &[&FeatureMap]) -> Result<Vec<GeneratedAnchors>> {
        pool_and_weigh_batch(features, &self.paag, self.bank.sizes())?
            .iter()
            .map(|coeffs| {
                let metas = combine_metas(&self.bank, coeffs, &self.ranges, self.scaling)?;
                let anchors = metas.iter().map(|m| materialize(m, &self.y_samples)).collect();
                Ok((metas, anchors))
            })
            .collect()
    }
}

/// Anything that turns sampled anchor features into proposals.
pub trait Predictor: Sync {
    fn predict(
        &self,
        stage_index: usize,
        stage: &Stage,
        features: &[AnchorFeature],
        anchors: &[Anchor3D],
    ) -> Result<Vec<Proposal>>;

    /// One call for several frames; by default frame by frame.
    fn predict_batch(
        &self,
        stage_index: usize,
        stage: &Stage,
        features: &[&[AnchorFeature]],
        anchors: &[&[Anchor3D]],
    ) -> Result<Vec<Vec<Proposal>>> {
        features.iter().zip(anchors).map(|(f, a)| self.predict(stage_index, stage, f, a)).collect()
    }
}

/// The learned head, one [`HeadWeights`] per id referenced by the plan.
#[derive(Debug, Clone, Default)]
pub struct LearnedHead {
    pub heads: BTreeMap<String, HeadWeights>,
}

impl Predictor for LearnedHead {
    fn predict(
        &self,
        stage_index: usize,
        stage: &Stage,
        features: &[AnchorFeature],
        anchors: &[Anchor3D],
    ) -> Result<Vec<Proposal>> {
        Ok(self.predict_batch(stage_index, stage, &[features], &[anchors])?.pop().expect("one frame"))
    }

    fn predict_batch(
        &self,
        _stage_index: usize,
        stage: &Stage,
        features: &[&[AnchorFeature]],
        anchors: &[&[Anchor3D]],
    ) -> Result<Vec<Vec<Proposal>>> {
        let w =
            self.heads.get(&stage.weights).ok_or_else(|| Error::MissingTensor(format!("head.{}", stage.weights)))?;
        predict_batch(features, anchors, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub level: u8,
    pub weights: String,
    pub anchors: Vec<Anchor3D>,
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub metas: Vec<AnchorMetas>,
    pub proposals: Vec<Proposal>,
    pub trace: Vec<StageTrace>,
}

/// Samples every anchor at one pyramid level, fusing LiDAR features if given.
pub fn gather_features(
    anchors: &[Anchor3D],
    fm: &FeatureMap,
    volume: Option<&FeatureVolume>,
    rig: &CameraRig,
) -> Result<Vec<AnchorFeature>> {
    let (h, w, _) = fm.dims();
    let level_rig;
    let rig = if rig.feature_size() == [h, w] {
        rig
    } else {
        level_rig = rig.with_feature_size([h, w])?;
        &level_rig
    };
    anchors
        .iter()
        .map(|a| {
            let cam = sample_anchor(a, fm, rig)?;
            match volume {
                Some(v) => fuse(&cam, &sample_anchor_lidar(a, v, rig)?),
                None => Ok(cam),
            }
        })
        .collect()
}

/// Frames per [`run_pipeline_batch`] call in the batch drivers.
pub const FRAME_BATCH: usize = 8;

pub fn run_pipeline<P: Predictor + ?Sized>(
    inputs: &FrameInputs,
    generator: &AnchorGenerator,
    predictor: &P,
    plan: &StagePlan,
) -> Result<PipelineOutput> {
    Ok(run_pipeline_batch(&[inputs], generator, predictor, plan)?.pop().expect("one frame in, one out"))
}

fn level(inputs: &FrameInputs, level: u8) -> Result<(&FeatureMap, Option<&FeatureVolume>)> {
    let fm = inputs
        .features
        .get(&level)
        .ok_or_else(|| Error::InvalidConfig(format!("feature level {level} missing from inputs")))?;
    let volume = match &inputs.lidar {
        Some(levels) => Some(
            levels
                .get(&level)
                .ok_or_else(|| Error::InvalidConfig(format!("LiDAR level {level} missing from inputs")))?,
        ),
        None => None,
    };
    Ok((fm, volume))
}

/// Runs several frames stage by stage so each stage's weights are applied
/// to all frames at once. Outputs are in input order.
pub fn run_pipeline_batch<P: Predictor + ?Sized>(
    inputs: &[&FrameInputs],
    generator: &AnchorGenerator,
    predictor: &P,
    plan: &StagePlan,
) -> Result<Vec<PipelineOutput>> {
    plan.validate()?;
    let f5 = inputs
        .iter()
        .map(|i| level(i, GENERATOR_LEVEL).map(|l| l.0))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage(0))?;
    let generated = generator.generate_batch(&f5).map_err(|e| e.at_stage(0))?;
    let (metas, mut anchors): (Vec<_>, Vec<_>) = generated.into_iter().unzip();

    let mut traces: Vec<Vec<StageTrace>> = inputs.iter().map(|_| Vec::with_capacity(plan.stages.len())).collect();
    for (i, stage) in plan.stages.iter().enumerate() {
        let run = || -> Result<Vec<Vec<Proposal>>> {
            let features = inputs
                .iter()
                .zip(&anchors)
                .map(|(inp, a)| {
                    let (fm, volume) = level(inp, stage.level)?;
                    gather_features(a, fm, volume, &inp.rig)
                })
                .collect::<Result<Vec<_>>>()?;
            let f: Vec<&[AnchorFeature]> = features.iter().map(|f| f.as_slice()).collect();
            let a: Vec<&[Anchor3D]> = anchors.iter().map(|a| a.as_slice()).collect();
            predictor.predict_batch(i, stage, &f, &a)
        };
        let proposals = run().map_err(|e| e.at_stage(i))?;
        if proposals.len() != inputs.len() {
            return Err(Error::LengthMismatch { left: inputs.len(), right: proposals.len() }.at_stage(i));
        }
        for ((frame_anchors, props), trace) in anchors.iter_mut().zip(proposals).zip(&mut traces) {
            let next = props.iter().map(Proposal::to_anchor).collect();
            trace.push(StageTrace {
                stage: i,
                level: stage.level,
                weights: stage.weights.clone(),
                anchors: std::mem::replace(frame_anchors, next),
                proposals: props,
            });
        }
    }
    Ok(metas
        .into_iter()
        .zip(traces)
        .map(|(metas, trace)| {
            let proposals = trace.last().map(|t| t.proposals.clone()).unwrap_or_default();
            PipelineOutput { metas, proposals, trace }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_schedule() {
        let plan = StagePlan::default();
        let levels: Vec<u8> = plan.stages.iter().map(|s| s.level).collect();
        assert_eq!(levels, vec![5, 5, 4, 3]);
        assert_eq!(plan.weight_ids().len(), 4);
        assert!(StagePlan { stages: vec![] }.validate().is_err());
        let bad = StagePlan { stages: vec![Stage { level: 2, weights: "a".into() }] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batch_matches_single_frames() {
        use crate::config::RunConfig;
        use crate::model::Model;
        use crate::synth::{frame_inputs, generate_scene, SceneSpec};

        let cfg = RunConfig::default();
        let model = Model::init_synthetic(&cfg, 3).unwrap();
        let inputs: Vec<FrameInputs> = (0..3)
            .map(|i| {
                let scene = generate_scene(&SceneSpec::random(i), &cfg.profile).unwrap();
                frame_inputs(&scene, cfg.feature_channels, 0, 1.5).unwrap()
            })
            .collect();
        let refs: Vec<&FrameInputs> = inputs.iter().collect();
        let batch = run_pipeline_batch(&refs, &model.generator, &model.head, &cfg.plan).unwrap();
        for (inp, b) in inputs.iter().zip(&batch) {
            let single = run_pipeline(inp, &model.generator, &model.head, &cfg.plan).unwrap();
            assert_eq!(single.proposals.len(), b.proposals.len());
            for (p, q) in single.proposals.iter().zip(&b.proposals) {
                for (u, v) in p.x.iter().zip(&q.x) {
                    assert!((u - v).abs() < 1e-9);
                }
                assert!((p.score - q.score).abs() < 1e-9);
            }
        }
    }
}
