use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use lane3d_core::evaluation::{evaluate_once, evaluate_openlane};
use lane3d_core::io::{self, eval_frames, LaneFile, LaneFrame, LaneRecord, Tensor};
use lane3d_core::losses::{assign, total_loss};
use lane3d_core::model::Model;
use lane3d_core::pipeline::{run_pipeline_batch, FrameInputs, StageTrace, FRAME_BATCH, GENERATOR_LEVEL};
use lane3d_core::sampling::{Extent, FeatureMap, FeatureVolume};
use lane3d_core::synth::{self, SceneSpec};
use lane3d_core::throughput::{self, Workload};
use lane3d_core::{exec, Error, Execution, RunConfig};

use crate::svg;
use crate::Protocol;

/// A check ran to completion and failed.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<VerificationFailed>().is_some() {
        return 3;
    }
    match e.downcast_ref::<Error>() {
        Some(core) if !core.is_input_error() => 3,
        _ => 2,
    }
}

fn load_config(path: Option<PathBuf>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::from_json(&text, &p.display().to_string())?)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write_bytes(path, text.as_bytes())?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

const GT_FILE: &str = "gt.json";
const FEATURE_DIR: &str = "features";

fn feature_path(scene: &Path, id: &str) -> PathBuf {
    scene.join(FEATURE_DIR).join(format!("{id}.a3t"))
}

fn inputs_to_tensors(inputs: &FrameInputs) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for (level, fm) in &inputs.features {
        let (h, w, c) = fm.dims();
        out.insert(format!("level{level}"), Tensor::from_f64(vec![h, w, c], fm.data().iter().copied())?);
    }
    if let Some(volumes) = &inputs.lidar {
        for (level, v) in volumes {
            out.insert(format!("lidar{level}"), Tensor::from_f64(v.dims().to_vec(), v.data().iter().copied())?);
            let e = v.extent();
            let ext = e.min.iter().chain(&e.max).copied();
            out.insert("lidar_extent".into(), Tensor::from_f64(vec![2, 3], ext)?);
        }
    }
    Ok(out)
}

fn feature_map(t: &Tensor, level: u8, name: &str) -> Result<FeatureMap> {
    if t.dims.len() != 3 {
        return Err(Error::ShapeMismatch {
            context: format!("feature tensor {name}"),
            expected: "[H, W, C]".into(),
            actual: format!("{:?}", t.dims),
        }
        .into());
    }
    Ok(FeatureMap::new(t.dims[0], t.dims[1], t.dims[2], level, t.to_f64())?)
}

fn tensors_to_inputs(
    tensors: &BTreeMap<String, Tensor>,
    frame: &LaneFrame,
    cfg: &RunConfig,
    path: &Path,
) -> Result<FrameInputs> {
    let rig = frame.camera.clone().with_context(|| format!("frame {} has no camera", frame.id))?;
    let mut features = BTreeMap::new();
    for (name, t) in tensors {
        if let Some(level) = name.strip_prefix("level").and_then(|l| l.parse::<u8>().ok()) {
            features.insert(level, feature_map(t, level, name)?);
        }
    }
    let lidar = if cfg.fusion {
        let ext = tensors
            .get("lidar_extent")
            .ok_or_else(|| Error::MissingTensor(format!("{}: lidar_extent", path.display())))?;
        if ext.data.len() != 6 {
            bail!(Error::ShapeMismatch {
                context: "lidar_extent".into(),
                expected: "[2, 3]".into(),
                actual: format!("{:?}", ext.dims)
            });
        }
        let e = ext.to_f64();
        let extent = Extent { min: [e[0], e[1], e[2]], max: [e[3], e[4], e[5]] };
        let mut volumes = BTreeMap::new();
        for (name, t) in tensors {
            if let Some(level) = name.strip_prefix("lidar").and_then(|l| l.parse::<u8>().ok()) {
                let dims: [usize; 4] = t.dims.clone().try_into().map_err(|_| Error::ShapeMismatch {
                    context: format!("volume tensor {name}"),
                    expected: "[D, H, W, C]".into(),
                    actual: format!("{:?}", t.dims),
                })?;
                volumes.insert(level, FeatureVolume::new(dims, extent, t.to_f64())?);
            }
        }
        Some(volumes)
    } else {
        None
    };
    Ok(FrameInputs { rig, features, lidar })
}

pub fn gen_scene(spec: Option<PathBuf>, config: Option<PathBuf>, frames: usize, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let spec: SceneSpec = match spec {
        None => SceneSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| Error::malformed_json(&p.display().to_string(), &e))?
        }
    };
    spec.validate()?;
    std::fs::create_dir_all(out.join(FEATURE_DIR)).with_context(|| format!("creating {}", out.display()))?;
    let lidar = if cfg.fusion { cfg.lidar_channels } else { 0 };
    let mut file = LaneFile::default();
    for i in 0..frames {
        let frame_spec = SceneSpec { seed: spec.seed.wrapping_add(i as u64), ..spec.clone() };
        let scene = synth::generate_scene(&frame_spec, &cfg.profile)?;
        let id = format!("frame-{i:06}");
        let inputs = synth::frame_inputs(&scene, cfg.feature_channels, lidar, throughput::SPLAT_SIGMA)?;
        io::write_named(&feature_path(out, &id), &inputs_to_tensors(&inputs)?)?;
        file.frames.push(LaneFrame {
            id,
            camera: Some(scene.rig),
            lanes: scene.lanes.iter().map(LaneRecord::from_lane).collect(),
            tags: vec![],
        });
    }
    file.write(&out.join(GT_FILE))?;
    write_json(&out.join("spec.json"), &spec)?;
    eprintln!("wrote {} frame(s) to {}", frames, out.display());
    Ok(())
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<Model> {
    let tensors = io::read_named(path)?;
    Model::from_tensors(&tensors, cfg).with_context(|| format!("loading weights from {}", path.display()))
}

pub fn anchors(config: Option<PathBuf>, features: &Path, weights: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_model(weights, &cfg)?;
    let tensors = io::read_named(features)?;
    let name = format!("level{GENERATOR_LEVEL}");
    let t = tensors
        .get(&name)
        .or_else(|| tensors.get(""))
        .ok_or_else(|| Error::MissingTensor(format!("{}: {name}", features.display())))?;
    let fm = feature_map(t, GENERATOR_LEVEL, &name)?;
    let (metas, anchors) = model.generator.generate(&fm)?;
    #[derive(Serialize)]
    struct Out<'a> {
        metas: &'a [lane3d_core::anchors::AnchorMetas],
        anchors: &'a [lane3d_core::anchors::Anchor3D],
    }
    write_json(out, &Out { metas: &metas, anchors: &anchors })
}

#[derive(Serialize)]
struct FrameTrace {
    id: String,
    stages: Vec<StageTrace>,
}

pub fn forward(config: Option<PathBuf>, scene: &Path, weights: &Path, out: &Path, trace: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_model(weights, &cfg)?;
    let gt = LaneFile::read(&scene.join(GT_FILE))?;
    let chunks: Vec<&[LaneFrame]> = gt.frames.chunks(FRAME_BATCH).collect();
    let results = exec::map(Execution::Parallel, &chunks, |chunk| -> Result<_> {
        let inputs = chunk
            .iter()
            .map(|frame| {
                let path = feature_path(scene, &frame.id);
                let tensors = io::read_named(&path)?;
                tensors_to_inputs(&tensors, frame, &cfg, &path)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&FrameInputs> = inputs.iter().collect();
        let first = &chunk[0].id;
        let last = &chunk[chunk.len() - 1].id;
        run_pipeline_batch(&refs, &model.generator, &model.head, &cfg.plan)
            .with_context(|| format!("frames {first}..={last}"))
    });
    let mut outputs = Vec::with_capacity(gt.frames.len());
    for r in results {
        outputs.extend(r?);
    }
    let mut preds = LaneFile::default();
    let mut traces = Vec::new();
    for (frame, output) in gt.frames.iter().zip(outputs) {
        preds.frames.push(LaneFrame {
            id: frame.id.clone(),
            camera: frame.camera.clone(),
            lanes: output.proposals.iter().map(LaneRecord::from_proposal).collect(),
            tags: frame.tags.clone(),
        });
        traces.push(FrameTrace { id: frame.id.clone(), stages: output.trace });
    }
    preds.write(out)?;
    if let Some(path) = trace {
        write_json(path, &traces)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FrameLoss {
    id: String,
    cls: f64,
    reg: f64,
    ew: f64,
    total: f64,
    positives: usize,
}

#[derive(Serialize)]
struct LossReport {
    cls: f64,
    reg: f64,
    ew: f64,
    total: f64,
    frames: Vec<FrameLoss>,
}

pub fn loss(config: Option<PathBuf>, gt: &Path, pred: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let gt = LaneFile::read(gt)?;
    let preds = LaneFile::read(pred)?;
    let classes = cfg.profile.num_classes();
    let mut frames = Vec::with_capacity(gt.frames.len());
    for frame in &gt.frames {
        let gts: Vec<_> = frame.lanes.iter().map(LaneRecord::to_lane).collect();
        let props: Vec<_> = preds
            .frame(&frame.id)
            .map(|f| f.lanes.iter().map(|l| l.to_proposal(classes)).collect())
            .unwrap_or_default();
        let a = assign(&gts, &props, &cfg.loss).with_context(|| format!("frame {}", frame.id))?;
        let l = total_loss(&gts, &props, &a, &cfg.loss).with_context(|| format!("frame {}", frame.id))?;
        frames.push(FrameLoss {
            id: frame.id.clone(),
            cls: l.cls,
            reg: l.reg,
            ew: l.ew,
            total: l.total,
            positives: a.positives().len(),
        });
    }
    let n = frames.len().max(1) as f64;
    let mean = |f: fn(&FrameLoss) -> f64| frames.iter().map(f).sum::<f64>() / n;
    let report =
        LossReport { cls: mean(|f| f.cls), reg: mean(|f| f.reg), ew: mean(|f| f.ew), total: mean(|f| f.total), frames };
    print_json(&report)
}

pub fn evaluate(
    protocol: Protocol,
    config: Option<PathBuf>,
    gt: &Path,
    pred: &Path,
    tag: Option<&str>,
    out: Option<&Path>,
    plot: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let gt = LaneFile::read(gt)?;
    let preds = LaneFile::read(pred)?;
    let frames = eval_frames(&gt, &preds, tag);
    let (json, table) = match protocol {
        Protocol::Openlane => {
            let r = evaluate_openlane(&frames, &cfg.eval_openlane, Execution::Parallel);
            for id in &r.empty_gt_frames {
                eprintln!("warning: frame {id} has no ground-truth lanes");
            }
            (serde_json::to_string_pretty(&r)?, r.table())
        }
        Protocol::Once => {
            let r = evaluate_once(&frames, &cfg.eval_once, Execution::Parallel);
            (serde_json::to_string_pretty(&r)?, r.table())
        }
    };
    // the table goes to stderr when stdout carries the JSON
    match out {
        Some(path) => {
            io::write_bytes(path, format!("{json}\n").as_bytes())?;
            print!("{table}");
        }
        None => {
            println!("{json}");
            eprint!("{table}");
        }
    }
    if let Some(dir) = plot {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for f in &frames {
            io::write_bytes(&dir.join(format!("{}.svg", f.id)), svg::top_view(f).as_bytes())?;
        }
    }
    Ok(())
}

pub fn grad_check(config: Option<PathBuf>, trials: usize, seed: u64) -> Result<()> {
    let cfg = load_config(config)?;
    let report = lane3d_core::gradcheck::run_grad_check(trials, seed, &cfg.loss)?;
    print_json(&report)?;
    if !report.passed {
        bail!(VerificationFailed(format!(
            "max relative error ew {:.3e}, reg {:.3e}, total {:.3e} (tolerance {:.0e})",
            report.max_rel_error_ew,
            report.max_rel_error_reg,
            report.max_rel_error_total,
            lane3d_core::gradcheck::TOLERANCE
        )));
    }
    Ok(())
}

pub fn bench(config: Option<PathBuf>, frames: usize, threads: usize) -> Result<()> {
    let cfg = load_config(config)?;
    if frames == 0 || threads == 0 {
        bail!(Error::InvalidConfig("--frames and --threads must be positive".into()));
    }
    let workload = Workload::synthetic(&cfg, 16, cfg.seed)?;
    let report = if threads == 1 {
        throughput::measure(&workload, frames, Execution::Sequential, 1)?
    } else {
        run_in_pool(threads, || throughput::measure(&workload, frames, Execution::Parallel, threads))??
    };
    print_json(&report)
}

#[cfg(feature = "parallel")]
fn run_in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn run_in_pool<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

pub fn init_weights(config: Option<PathBuf>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let model = Model::init_synthetic(&cfg, seed.unwrap_or(cfg.seed))?;
    io::write_named(out, &model.to_tensors())?;
    Ok(())
}

pub fn default_config() -> Result<()> {
    print_json(&RunConfig::default())
}
