//! Ground, camera, LiDAR and feature-map coordinate frames.
//!
//! The ground frame has its origin on the road directly below the camera,
//! `x` to the right, `y` forward and `z` up. Projection into a feature map
//! goes through the pinhole model
//!
//! ```text
//! [ũ, ṽ, d]ᵀ = K · T_gc · [x, y, z, 1]ᵀ
//! u = (W_F / W_I) · ũ / d
//! v = (H_F / H_I) · ṽ / d
//! ```
//!
//! All matrices are row-major and every computation is carried out in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depths at or below this value are treated as behind the camera plane.
pub const MIN_DEPTH: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-6;

pub type Mat3 = [[f64; 3]; 3];
pub type Mat3x4 = [[f64; 4]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn homogeneous(&self) -> [f64; 4] {
        [self.x, self.y, self.z, 1.0]
    }
}

impl From<[f64; 3]> for GroundPoint {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

impl From<GroundPoint> for [f64; 3] {
    fn from(p: GroundPoint) -> Self {
        [p.x, p.y, p.z]
    }
}

/// A point in feature-grid coordinates (`u` along the width, `v` along the
/// height, cell centres at integers) together with its camera depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl FeaturePoint {
    /// Whether the point lies in front of the camera and inside the
    /// `[0, W_F-1] × [0, H_F-1]` sampling domain.
    pub fn in_grid(&self, feature_size: [usize; 2]) -> bool {
        let [h, w] = feature_size;
        self.depth > MIN_DEPTH
            && self.u >= 0.0
            && self.v >= 0.0
            && self.u <= (w as f64 - 1.0)
            && self.v <= (h as f64 - 1.0)
    }
}

/// JSON form of a [`CameraRig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRigJson {
    #[serde(rename = "K")]
    k: Mat3,
    #[serde(rename = "T_gc")]
    t_gc: Mat3x4,
    #[serde(rename = "T_gl", default)]
    t_gl: Option<Mat3x4>,
    image_size: [usize; 2],
    feature_size: [usize; 2],
}

/// Calibrated camera (and optionally LiDAR) extrinsics plus the image and
/// feature-map resolutions used for projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRigJson", into = "CameraRigJson")]
pub struct CameraRig {
    k: Mat3,
    t_gc: Mat3x4,
    t_gl: Option<Mat3x4>,
    image_size: [usize; 2],
    feature_size: [usize; 2],
    // derived
    proj: Mat3x4,
    scale_u: f64,
    scale_v: f64,
}

impl TryFrom<CameraRigJson> for CameraRig {
    type Error = Error;

    fn try_from(j: CameraRigJson) -> Result<Self> {
        CameraRig::new(j.k, j.t_gc, j.t_gl, j.image_size, j.feature_size)
    }
}

impl From<CameraRig> for CameraRigJson {
    fn from(r: CameraRig) -> Self {
        CameraRigJson { k: r.k, t_gc: r.t_gc, t_gl: r.t_gl, image_size: r.image_size, feature_size: r.feature_size }
    }
}

impl CameraRig {
    /// Builds a rig, checking that `K` is an upper-triangular pinhole matrix,
    /// that the rotation block of `T_gc` is orthonormal and that the feature
    /// size divides the image size.
    pub fn new(
        k: Mat3,
        t_gc: Mat3x4,
        t_gl: Option<Mat3x4>,
        image_size: [usize; 2],
        feature_size: [usize; 2],
    ) -> Result<Self> {
        let finite = k.iter().flatten().all(|v| v.is_finite())
            && t_gc.iter().flatten().all(|v| v.is_finite())
            && t_gl.iter().flat_map(|m| m.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidRig("non-finite matrix entry".into()));
        }
        if k[2][2] != 1.0 || k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(Error::InvalidRig("K must be upper triangular with K[2][2] == 1".into()));
        }
        if k[0][0] == 0.0 || k[1][1] == 0.0 {
            return Err(Error::InvalidRig("K has a zero focal length".into()));
        }
        let r = rotation(&t_gc);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|c| r[i][c] * r[j][c]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidRig("rotation block of T_gc is not orthonormal".into()));
                }
            }
        }
        for axis in 0..2 {
            let (img, feat) = (image_size[axis], feature_size[axis]);
            if img == 0 || feat == 0 || img % feat != 0 {
                return Err(Error::InvalidRig(format!(
                    "feature size {feature_size:?} must divide image size {image_size:?}"
                )));
            }
        }

        let mut proj = [[0.0; 4]; 3];
        for (i, row) in proj.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = (0..3).map(|c| k[i][c] * t_gc[c][j]).sum();
            }
        }
        Ok(Self {
            k,
            t_gc,
            t_gl,
            image_size,
            feature_size,
            proj,
            scale_u: feature_size[1] as f64 / image_size[1] as f64,
            scale_v: feature_size[0] as f64 / image_size[0] as f64,
        })
    }

    /// A rig mounted `height` metres above the ground origin, looking along
    /// `+y` and pitched down by `pitch` radians.
    pub fn looking_forward(
        k: Mat3,
        height: f64,
        pitch: f64,
        image_size: [usize; 2],
        feature_size: [usize; 2],
    ) -> Result<Self> {
        let (s, c) = pitch.sin_cos();
        let r = [[1.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]];
        // t = -R · (0, 0, height)
        let t = [0.0, c * height, s * height];
        let mut t_gc = [[0.0; 4]; 3];
        for i in 0..3 {
            t_gc[i][..3].copy_from_slice(&r[i]);
            t_gc[i][3] = t[i];
        }
        Self::new(k, t_gc, None, image_size, feature_size)
    }

    pub fn with_lidar(mut self, t_gl: Mat3x4) -> Result<Self> {
        if !t_gl.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidRig("non-finite T_gl entry".into()));
        }
        self.t_gl = Some(t_gl);
        Ok(self)
    }

    /// Same rig with a different feature-map resolution.
    pub fn with_feature_size(&self, feature_size: [usize; 2]) -> Result<Self> {
        Self::new(self.k, self.t_gc, self.t_gl, self.image_size, feature_size)
    }

    pub fn k(&self) -> &Mat3 {
        &self.k
    }

    pub fn t_gc(&self) -> &Mat3x4 {
        &self.t_gc
    }

    pub fn t_gl(&self) -> Option<&Mat3x4> {
        self.t_gl.as_ref()
    }

    /// `(H_I, W_I)`
    pub fn image_size(&self) -> [usize; 2] {
        self.image_size
    }

    /// `(H_F, W_F)`
    pub fn feature_size(&self) -> [usize; 2] {
        self.feature_size
    }

    /// Homogeneous image coordinates `(ũ, ṽ, d)` of a ground point.
    pub fn to_image_homogeneous(&self, p: &GroundPoint) -> [f64; 3] {
        let h = p.homogeneous();
        let row = |r: &[f64; 4]| r[0] * h[0] + r[1] * h[1] + r[2] * h[2] + r[3] * h[3];
        [row(&self.proj[0]), row(&self.proj[1]), row(&self.proj[2])]
    }

    /// Pixel coordinates `(u_px, v_px)` and depth, without the feature scaling.
    pub fn project_to_image(&self, p: &GroundPoint) -> Result<(f64, f64, f64)> {
        let [uh, vh, d] = self.to_image_homogeneous(p);
        if d <= MIN_DEPTH {
            return Err(Error::DepthNonPositive { depth: d });
        }
        Ok((uh / d, vh / d, d))
    }

    /// Whether a ground point lands inside the image in front of the camera.
    pub fn sees(&self, p: &GroundPoint) -> bool {
        match self.project_to_image(p) {
            Ok((u, v, _)) => {
                let [h, w] = self.image_size;
                u >= 0.0 && v >= 0.0 && u <= w as f64 - 1.0 && v <= h as f64 - 1.0
            }
            Err(_) => false,
        }
    }
}

fn rotation(t: &Mat3x4) -> Mat3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        r[i].copy_from_slice(&t[i][..3]);
    }
    r
}

/// Projects a ground point onto the rig's feature grid.
pub fn project_to_feature(p: &GroundPoint, rig: &CameraRig) -> Result<FeaturePoint> {
    let [uh, vh, d] = rig.to_image_homogeneous(p);
    if d <= MIN_DEPTH {
        return Err(Error::DepthNonPositive { depth: d });
    }
    Ok(FeaturePoint { u: rig.scale_u * (uh / d), v: rig.scale_v * (vh / d), depth: d })
}

/// Maps a ground point into the LiDAR frame with `T_gl`.
pub fn project_to_lidar(p: &GroundPoint, rig: &CameraRig) -> Result<GroundPoint> {
    let t = rig.t_gl.as_ref().ok_or(Error::MissingLidarExtrinsics)?;
    let h = p.homogeneous();
    let row = |r: &[f64; 4]| r[0] * h[0] + r[1] * h[1] + r[2] * h[2] + r[3] * h[3];
    Ok(GroundPoint::new(row(&t[0]), row(&t[1]), row(&t[2])))
}

/// Inverse of [`project_to_feature`] for a known depth.
pub fn back_project(fp: &FeaturePoint, rig: &CameraRig) -> Result<GroundPoint> {
    if !(fp.depth > 0.0) {
        return Err(Error::DepthNonPositive { depth: fp.depth });
    }
    let d = fp.depth;
    let uh = fp.u / rig.scale_u * d;
    let vh = fp.v / rig.scale_v * d;
    let k = &rig.k;
    // K is upper triangular: solve from the bottom row up.
    let yc = (vh - k[1][2] * d) / k[1][1];
    let xc = (uh - k[0][1] * yc - k[0][2] * d) / k[0][0];
    let cam = [xc - rig.t_gc[0][3], yc - rig.t_gc[1][3], d - rig.t_gc[2][3]];
    // p = Rᵀ (c - t)
    let r = rotation(&rig.t_gc);
    let g = |j: usize| r[0][j] * cam[0] + r[1][j] * cam[1] + r[2][j] * cam[2];
    Ok(GroundPoint::new(g(0), g(1), g(2)))
}
