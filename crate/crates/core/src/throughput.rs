//! Forward + evaluate throughput on synthetic frames.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::evaluation::{evaluate_openlane, EvalFrame, EvalReport, Prediction};
use crate::exec::{self, Execution};
use crate::lane::Lane3D;
use crate::model::Model;
use crate::pipeline::{run_pipeline_batch, FrameInputs, FRAME_BATCH};
use crate::synth::{frame_inputs, generate_scene, SceneSpec};

/// Gaussian width (cells) of the synthetic feature splats.
pub const SPLAT_SIGMA: f64 = 1.5;

pub struct Workload {
    pub model: Model,
    pub cfg: RunConfig,
    pub frames: Vec<(Vec<Lane3D>, FrameInputs)>,
}

impl Workload {
    /// `pool` distinct random scenes, reused cyclically by [`Workload::run`].
    pub fn synthetic(cfg: &RunConfig, pool: usize, seed: u64) -> Result<Self> {
        let model = Model::init_synthetic(cfg, seed)?;
        let lidar = if cfg.fusion { cfg.lidar_channels } else { 0 };
        let frames = (0..pool.max(1) as u64)
            .map(|i| {
                let scene = generate_scene(&SceneSpec::random(seed.wrapping_add(i)), &cfg.profile)?;
                let inputs = frame_inputs(&scene, cfg.feature_channels, lidar, SPLAT_SIGMA)?;
                Ok((scene.lanes, inputs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, cfg: cfg.clone(), frames })
    }

    /// Runs the pipeline on `count` frames and evaluates the predictions.
    pub fn run(&self, count: usize, exec: Execution) -> Result<EvalReport> {
        let batches = count.div_ceil(FRAME_BATCH);
        let per_batch = exec::map_range(exec, batches, |b| -> Result<Vec<EvalFrame>> {
            let ids: Vec<usize> = (b * FRAME_BATCH..((b + 1) * FRAME_BATCH).min(count)).collect();
            let frames: Vec<_> = ids.iter().map(|i| &self.frames[i % self.frames.len()]).collect();
            let inputs: Vec<&FrameInputs> = frames.iter().map(|f| &f.1).collect();
            let outs = run_pipeline_batch(&inputs, &self.model.generator, &self.model.head, &self.cfg.plan)?;
            Ok(ids
                .iter()
                .zip(frames)
                .zip(outs)
                .map(|((i, (gts, _)), out)| EvalFrame {
                    id: format!("{i:06}"),
                    gts: gts.clone(),
                    preds: out.proposals.iter().map(|p| Prediction { lane: p.to_lane(), score: p.score }).collect(),
                })
                .collect())
        });
        let mut eval_frames = Vec::with_capacity(count);
        for batch in per_batch {
            eval_frames.extend(batch?);
        }
        Ok(evaluate_openlane(&eval_frames, &self.cfg.eval_openlane, exec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub threads: usize,
    pub seconds: f64,
    pub frames_per_second: f64,
}

pub fn measure(workload: &Workload, frames: usize, exec: Execution, threads: usize) -> Result<BenchReport> {
    let start = Instant::now();
    workload.run(frames, exec)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchReport { frames, threads, seconds, frames_per_second: frames as f64 / seconds.max(f64::MIN_POSITIVE) })
}
