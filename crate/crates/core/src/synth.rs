//! Synthetic scenes: ground-truth lanes, a forward-looking camera rig,
//! Gaussian-splatted feature maps, and perturbed copies of the ground truth
//! standing in for model predictions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::Anchor3D;
use crate::config::DatasetProfile;
use crate::error::{Error, Result};
use crate::geometry::{project_to_feature, project_to_lidar, CameraRig, GroundPoint, Mat3, Mat3x4};
use crate::head::Proposal;
use crate::lane::Lane3D;
use crate::pipeline::{FrameInputs, Predictor, Stage};
use crate::sampling::{AnchorFeature, Extent, FeatureMap, FeatureVolume};

/// `[H, W]` of the synthetic camera.
pub const IMAGE_SIZE: [usize; 2] = [384, 640];
pub const FOCAL: f64 = 320.0;

/// Feature map size of pyramid level `level` (stride `2^level`).
pub fn level_size(level: u8) -> [usize; 2] {
    [IMAGE_SIZE[0] >> level, IMAGE_SIZE[1] >> level]
}

pub fn intrinsics() -> Mat3 {
    [[FOCAL, 0.0, IMAGE_SIZE[1] as f64 / 2.0], [0.0, FOCAL, IMAGE_SIZE[0] as f64 / 2.0], [0.0, 0.0, 1.0]]
}

/// Extra curvature applied to one lane so it diverges from its neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fork {
    pub lane: usize,
    pub curvature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_lanes: usize,
    pub spacing: f64,
    /// Coefficients of `x(y)`, lowest order first.
    pub curvature: Vec<f64>,
    /// Coefficients of `z(y)`, lowest order first.
    pub slope: Vec<f64>,
    pub camera_height: f64,
    pub camera_pitch: f64,
    pub seed: u64,
    pub fork: Option<Fork>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_lanes: 2,
            spacing: 3.5,
            curvature: vec![],
            slope: vec![],
            camera_height: 1.5,
            camera_pitch: 0.0,
            seed: 0,
            fork: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_lanes == 0 {
            return Err(Error::InvalidConfig("n_lanes must be >= 1".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig("spacing must be > 0".into()));
        }
        if !(self.camera_height > 0.0 && self.camera_height.is_finite()) {
            return Err(Error::InvalidConfig("camera_height must be > 0".into()));
        }
        if !(self.camera_pitch.abs() < 1.0) {
            return Err(Error::InvalidConfig("camera_pitch must be within (-1, 1) rad".into()));
        }
        let fork = self.fork.iter().flat_map(|f| f.curvature.iter());
        if self.curvature.iter().chain(&self.slope).chain(fork).any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite polynomial coefficient".into()));
        }
        if let Some(f) = &self.fork {
            if f.lane >= self.n_lanes {
                return Err(Error::InvalidConfig(format!("fork lane {} out of range", f.lane)));
            }
        }
        Ok(())
    }

    /// A random but well-conditioned spec: 1-4 lanes, gentle curves and slopes.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            n_lanes: rng.random_range(1..=4),
            spacing: rng.random_range(3.6..4.0),
            curvature: vec![rng.random_range(-1.0..1.0), rng.random_range(-0.02..0.02), rng.random_range(-2e-4..2e-4)],
            slope: vec![0.0, rng.random_range(-0.02..0.02)],
            camera_height: rng.random_range(1.3..1.8),
            camera_pitch: rng.random_range(0.0..0.05),
            seed,
            fork: None,
        }
    }
}

fn poly(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub lanes: Vec<Lane3D>,
    pub rig: CameraRig,
}

/// Lanes offset by `spacing` around the curvature polynomial, sharing the
/// slope polynomial, sampled at the profile's forward positions. A point is
/// visible when it projects inside the image.
pub fn generate_scene(spec: &SceneSpec, profile: &DatasetProfile) -> Result<Scene> {
    spec.validate()?;
    profile.validate()?;
    let rig =
        CameraRig::looking_forward(intrinsics(), spec.camera_height, spec.camera_pitch, IMAGE_SIZE, level_size(5))?
            .with_lidar(lidar_extrinsics())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centre = (spec.n_lanes - 1) as f64 / 2.0;
    let lanes = (0..spec.n_lanes)
        .map(|i| {
            let offset = (i as f64 - centre) * spec.spacing;
            let fork = spec.fork.as_ref().filter(|f| f.lane == i);
            let points: Vec<GroundPoint> = profile
                .y_samples
                .iter()
                .map(|&y| {
                    let extra = fork.map_or(0.0, |f| poly(&f.curvature, y));
                    GroundPoint::new(offset + poly(&spec.curvature, y) + extra, y, poly(&spec.slope, y))
                })
                .collect();
            let visibility = points.iter().map(|p| if rig.sees(p) { 1.0 } else { 0.0 }).collect();
            let category = rng.random_range(1..=profile.num_categories);
            Lane3D::new(category, points, visibility)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene { lanes, rig })
}

/// LiDAR frame = ground frame.
pub fn lidar_extrinsics() -> Mat3x4 {
    [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
}

/// Splats a Gaussian bump (peak 1, standard deviation `sigma` cells) at every
/// visible lane point into channel 0, keeping the per-cell maximum.
pub fn rasterize_features(
    gts: &[Lane3D],
    rig: &CameraRig,
    dims: (usize, usize, usize),
    level: u8,
    sigma: f64,
) -> Result<FeatureMap> {
    let (h, w, c) = dims;
    if h == 0 || w == 0 || c == 0 || !(sigma > 0.0) {
        return Err(Error::InvalidConfig("feature dims and sigma must be positive".into()));
    }
    let mut fm = FeatureMap::zeros(h, w, c, level);
    let rig = rig.with_feature_size([h, w])?;
    let radius = (6.0 * sigma).ceil();
    let data = fm.data_mut();
    for lane in gts {
        for (k, p) in lane.points.iter().enumerate() {
            if !lane.is_visible(k) {
                continue;
            }
            let Ok(fp) = project_to_feature(p, &rig) else { continue };
            let r0 = (fp.v - radius).floor().max(0.0) as usize;
            let r1 = (fp.v + radius).ceil().min(h as f64 - 1.0);
            let c0 = (fp.u - radius).floor().max(0.0) as usize;
            let c1 = (fp.u + radius).ceil().min(w as f64 - 1.0);
            if r1 < 0.0 || c1 < 0.0 {
                continue;
            }
            for row in r0..=r1 as usize {
                for col in c0..=c1 as usize {
                    let d2 = (row as f64 - fp.v).powi(2) + (col as f64 - fp.u).powi(2);
                    let g = (-d2 / (2.0 * sigma * sigma)).exp();
                    let cell = &mut data[(row * w + col) * c];
                    *cell = cell.max(g);
                }
            }
        }
    }
    Ok(fm)
}

pub fn lidar_extent() -> Extent {
    Extent { min: [-20.0, 0.0, -4.0], max: [20.0, 110.0, 4.0] }
}

/// `[D, H, W]` voxel counts of the LiDAR volume at `level`.
pub fn volume_size(level: u8) -> [usize; 3] {
    let s = 1usize << (5 - level.min(5));
    [2 * s, 16 * s, 8 * s]
}

/// Channel-0 Gaussian bumps (in voxel units) around every visible lane point.
pub fn rasterize_volume(
    gts: &[Lane3D],
    rig: &CameraRig,
    dims: [usize; 4],
    extent: Extent,
    sigma: f64,
) -> Result<FeatureVolume> {
    let [d, h, w, c] = dims;
    let mut data = vec![0.0f64; d * h * w * c];
    let size = [w, h, d];
    let voxel = |a: usize| (extent.max[a] - extent.min[a]) / size[a] as f64;
    for lane in gts {
        for (k, p) in lane.points.iter().enumerate() {
            if !lane.is_visible(k) {
                continue;
            }
            let q = project_to_lidar(p, rig)?;
            let q = [q.x, q.y, q.z];
            // continuous voxel index, centres at integers
            let idx: Vec<f64> = (0..3).map(|a| (q[a] - extent.min[a]) / voxel(a) - 0.5).collect();
            let lo = |a: usize| (idx[a] - 3.0 * sigma).floor().max(0.0) as usize;
            let hi = |a: usize| ((idx[a] + 3.0 * sigma).ceil().max(-1.0) as isize).min(size[a] as isize - 1);
            for zi in lo(2) as isize..=hi(2) {
                for yi in lo(1) as isize..=hi(1) {
                    for xi in lo(0) as isize..=hi(0) {
                        let d2 =
                            (xi as f64 - idx[0]).powi(2) + (yi as f64 - idx[1]).powi(2) + (zi as f64 - idx[2]).powi(2);
                        let g = (-d2 / (2.0 * sigma * sigma)).exp();
                        let cell = &mut data[((zi as usize * h + yi as usize) * w + xi as usize) * c];
                        *cell = cell.max(g);
                    }
                }
            }
        }
    }
    FeatureVolume::new(dims, extent, data)
}

/// Camera feature pyramid (levels 3-5) and, with `lidar_channels > 0`, the
/// matching LiDAR volumes.
pub fn frame_inputs(scene: &Scene, channels: usize, lidar_channels: usize, sigma: f64) -> Result<FrameInputs> {
    let mut features = BTreeMap::new();
    let mut volumes = BTreeMap::new();
    for level in 3..=5u8 {
        let [h, w] = level_size(level);
        features.insert(level, rasterize_features(&scene.lanes, &scene.rig, (h, w, channels), level, sigma)?);
        if lidar_channels > 0 {
            let [d, vh, vw] = volume_size(level);
            volumes.insert(
                level,
                rasterize_volume(&scene.lanes, &scene.rig, [d, vh, vw, lidar_channels], lidar_extent(), 1.0)?,
            );
        }
    }
    Ok(FrameInputs { rig: scene.rig.clone(), features, lidar: (lidar_channels > 0).then_some(volumes) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionNoise {
    pub lateral_offset: f64,
    pub z_offset: f64,
    pub score: f64,
    pub drop_rate: f64,
}

impl Default for PredictionNoise {
    fn default() -> Self {
        Self { lateral_offset: 0.0, z_offset: 0.0, score: 1.0, drop_rate: 0.0 }
    }
}

/// Copies of `gts` shifted by the noise offsets, with probability `score` on
/// the ground-truth class (the rest on non-lane) and lanes dropped at random.
pub fn perturb_predictions(gts: &[Lane3D], noise: &PredictionNoise, num_classes: usize, seed: u64) -> Vec<Proposal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gts.iter()
        .filter(|_| !rng.random_bool(noise.drop_rate.clamp(0.0, 1.0)))
        .map(|g| {
            let mut probs = vec![0.0; num_classes.max(g.category + 1)];
            probs[g.category] = noise.score;
            probs[0] += 1.0 - noise.score;
            Proposal::new(
                probs,
                g.ys(),
                g.points.iter().map(|p| p.x + noise.lateral_offset).collect(),
                g.points.iter().map(|p| p.z + noise.z_offset).collect(),
                g.visibility.clone(),
            )
        })
        .collect()
}

/// A predictor that snaps every anchor onto the closest ground-truth lane.
#[derive(Debug, Clone)]
pub struct OracleHead {
    pub gts: Vec<Lane3D>,
    pub num_classes: usize,
}

impl Predictor for OracleHead {
    fn predict(&self, _: usize, _: &Stage, _: &[AnchorFeature], anchors: &[Anchor3D]) -> Result<Vec<Proposal>> {
        let exact = perturb_predictions(&self.gts, &PredictionNoise::default(), self.num_classes, 0);
        Ok(anchors
            .iter()
            .map(|a| {
                let nearest = self
                    .gts
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let d: f64 = a.points.iter().zip(&g.points).map(|(p, q)| (p.x - q.x).abs()).sum();
                        (i, d)
                    })
                    .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                        Some((_, bd)) if bd <= d => best,
                        _ => Some((i, d)),
                    });
                match nearest {
                    Some((i, _)) => exact[i].clone(),
                    None => {
                        let mut probs = vec![0.0; self.num_classes];
                        probs[0] = 1.0;
                        let pts = &a.points;
                        Proposal::new(
                            probs,
                            pts.iter().map(|p| p.y).collect(),
                            pts.iter().map(|p| p.x).collect(),
                            pts.iter().map(|p| p.z).collect(),
                            vec![0.0; pts.len()],
                        )
                    }
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{materialize, AnchorMetas};
    use crate::losses::{ew_loss, LossConfig};
    use crate::sampling::sample_anchor;

    #[test]
    fn two_parallel_lanes() {
        let scene = generate_scene(&SceneSpec::default(), &DatasetProfile::openlane()).unwrap();
        assert_eq!(scene.lanes.len(), 2);
        assert!(scene.lanes[0].points.iter().all(|p| p.x == -1.75 && p.z == 0.0));
        assert!(scene.lanes[1].points.iter().all(|p| p.x == 1.75));
        assert!(scene.lanes.iter().all(|l| l.visibility.iter().all(|v| *v == 1.0)));
        let props = perturb_predictions(&scene.lanes, &PredictionNoise::default(), 15, 0);
        let refs: Vec<&Proposal> = props.iter().collect();
        assert_eq!(ew_loss(&refs, &LossConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn slope_is_shared() {
        let profile = DatasetProfile { y_samples: vec![10.0, 50.0], ..DatasetProfile::openlane() };
        let spec = SceneSpec { n_lanes: 3, slope: vec![0.0, 0.02], ..Default::default() };
        let scene = generate_scene(&spec, &profile).unwrap();
        assert!(scene.lanes.iter().all(|l| (l.points[1].z - 1.0).abs() < 1e-15));
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SceneSpec::random(11);
        let a = generate_scene(&spec, &DatasetProfile::openlane()).unwrap();
        let b = generate_scene(&SceneSpec::random(11), &DatasetProfile::openlane()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn splat_peak_and_tail() {
        let profile = DatasetProfile::openlane();
        let spec = SceneSpec { n_lanes: 1, ..Default::default() };
        let scene = generate_scene(&spec, &profile).unwrap();
        let sigma = 5.0;
        let [h, w] = level_size(2);
        let fm = rasterize_features(&scene.lanes, &scene.rig, (h, w, 2), 2, sigma).unwrap();
        let rig = scene.rig.with_feature_size([h, w]).unwrap();
        let on = materialize(&AnchorMetas { xs: 0.0, phi: 0.0, theta: 0.0 }, &profile.y_samples);
        let f = sample_anchor(&on, &fm, &rig).unwrap();
        for k in 0..f.num_points() {
            assert!(f.point(k)[0] >= 0.99, "point {k}: {}", f.point(k)[0]);
            assert_eq!(f.point(k)[1], 0.0);
        }

        // a single lane point, and a probe 5 sigma to its right
        let lane = Lane3D::new(1, vec![GroundPoint::new(0.0, 10.0, 0.0)], vec![1.0]).unwrap();
        let fm = rasterize_features(std::slice::from_ref(&lane), &scene.rig, (h, w, 1), 2, sigma).unwrap();
        let fp = project_to_feature(&lane.points[0], &rig).unwrap();
        let far = crate::sampling::bilinear_sample(&fm, fp.u + 5.0 * sigma, fp.v);
        assert!(far.values[0] < 1e-5);

        let empty = rasterize_features(&[], &scene.rig, (h, w, 3), 2, sigma).unwrap();
        assert!(empty.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn perturbation() {
        let scene =
            generate_scene(&SceneSpec { n_lanes: 3, ..Default::default() }, &DatasetProfile::openlane()).unwrap();
        let noise = PredictionNoise { lateral_offset: 0.5, score: 0.8, ..Default::default() };
        let p = perturb_predictions(&scene.lanes, &noise, 15, 1);
        assert_eq!(p.len(), 3);
        assert!((p[0].x[0] - scene.lanes[0].points[0].x - 0.5).abs() < 1e-15);
        assert_eq!(p[0].score, 0.8);
        assert_eq!(p[0].category(), scene.lanes[0].category);
        let none = perturb_predictions(&scene.lanes, &PredictionNoise { drop_rate: 1.0, ..Default::default() }, 15, 1);
        assert!(none.is_empty());
    }

    #[test]
    fn volume_has_peak_at_lane() {
        let scene =
            generate_scene(&SceneSpec { n_lanes: 1, ..Default::default() }, &DatasetProfile::openlane()).unwrap();
        let [d, h, w] = volume_size(3);
        let v = rasterize_volume(&scene.lanes, &scene.rig, [d, h, w, 2], lidar_extent(), 1.0).unwrap();
        let max = v.data().iter().cloned().fold(0.0, f64::max);
        assert!(max > 0.5 && max <= 1.0);
    }
}
