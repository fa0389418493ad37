//! Dense feature grids and the interpolation used to gather per-anchor features.
//!
//! Grids are centre-aligned: cell `i` of an axis sits at integer coordinate
//! `i`. Samples outside the grid return zeros and are reported invalid.

use serde::{Deserialize, Serialize};

use crate::anchors::Anchor3D;
use crate::error::{Error, Result};
use crate::geometry::{project_to_feature, project_to_lidar, CameraRig, GroundPoint};

/// An `H × W × C` feature map stored row-major (channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    level: u8,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, level: u8, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape("feature map data", height * width * channels, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature map contains non-finite values".into()));
        }
        Ok(Self { height, width, channels, level, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, level: u8) -> Self {
        Self { height, width, channels, level, data: vec![0.0; height * width * channels] }
    }

    /// `(H, W, C)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let at = (row * self.width + col) * self.channels;
        &self.data[at..at + self.channels]
    }

    /// Bilinear interpolation at column `u`, row `v`, written into `out`.
    /// Returns `false` (and zeroes `out`) outside `[0, W-1] × [0, H-1]`.
    pub fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.channels);
        let max_u = self.width as f64 - 1.0;
        let max_v = self.height as f64 - 1.0;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            out.fill(0.0);
            return false;
        }
        let (u0, v0) = (u.floor() as usize, v.floor() as usize);
        let (u1, v1) = ((u0 + 1).min(self.width - 1), (v0 + 1).min(self.height - 1));
        let (fu, fv) = (u - u0 as f64, v - v0 as f64);
        let weights = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
        let corners = [self.cell(v0, u0), self.cell(v0, u1), self.cell(v1, u0), self.cell(v1, u1)];
        out.fill(0.0);
        for (w, cell) in weights.iter().zip(corners) {
            if *w == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(cell) {
                *o += w * c;
            }
        }
        true
    }
}

/// Axis-aligned box in LiDAR-frame metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// A `D × H × W × C` voxel feature volume. `D` runs along `z`, `H` along `y`
/// and `W` along `x`; voxel centres sit half a voxel inside the extent.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    dims: [usize; 4],
    extent: Extent,
    data: Vec<f64>,
}

impl FeatureVolume {
    pub fn new(dims: [usize; 4], extent: Extent, data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape("feature volume data", len, data.len()));
        }
        if dims[..3].contains(&0) {
            return Err(Error::InvalidConfig("feature volume has an empty axis".into()));
        }
        if (0..3).any(|a| !(extent.min[a] < extent.max[a])) {
            return Err(Error::InvalidConfig("feature volume extent is empty".into()));
        }
        Ok(Self { dims, extent, data })
    }

    /// `[D, H_L, W_L, C_L]`
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims[3]
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn voxel(&self, d: usize, h: usize, w: usize) -> &[f64] {
        let [_, hh, ww, c] = self.dims;
        let at = ((d * hh + h) * ww + w) * c;
        &self.data[at..at + c]
    }

    /// Centre of voxel `(d, h, w)` in LiDAR-frame metres.
    pub fn voxel_center(&self, d: usize, h: usize, w: usize) -> GroundPoint {
        let c = |axis: usize, i: usize, n: usize| {
            let size = (self.extent.max[axis] - self.extent.min[axis]) / n as f64;
            self.extent.min[axis] + (i as f64 + 0.5) * size
        };
        let [dd, hh, ww, _] = self.dims;
        GroundPoint::new(c(0, w, ww), c(1, h, hh), c(2, d, dd))
    }

    /// Trilinear interpolation at a LiDAR-frame point. Points inside the
    /// extent but beyond the outermost voxel centres clamp to the border.
    pub fn sample_into(&self, p: &GroundPoint, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.channels());
        let [dd, hh, ww, _] = self.dims;
        let coords = [p.x, p.y, p.z];
        let counts = [ww, hh, dd];
        let mut frac = [0.0; 3];
        for axis in 0..3 {
            let (lo, hi) = (self.extent.min[axis], self.extent.max[axis]);
            if !(coords[axis] >= lo && coords[axis] <= hi) {
                out.fill(0.0);
                return false;
            }
            let n = counts[axis];
            let idx = (coords[axis] - lo) / (hi - lo) * n as f64 - 0.5;
            frac[axis] = idx.clamp(0.0, n as f64 - 1.0);
        }
        let base = |f: f64, n: usize| {
            let i0 = f.floor() as usize;
            (i0, (i0 + 1).min(n - 1), f - i0 as f64)
        };
        let (x0, x1, fx) = base(frac[0], ww);
        let (y0, y1, fy) = base(frac[1], hh);
        let (z0, z1, fz) = base(frac[2], dd);
        out.fill(0.0);
        for (z, wz) in [(z0, 1.0 - fz), (z1, fz)] {
            for (y, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                for (x, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                    let w = wz * wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    for (o, v) in out.iter_mut().zip(self.voxel(z, y, x)) {
                        *o += w * v;
                    }
                }
            }
        }
        true
    }
}

/// Per-anchor feature: `N` per-point feature vectors concatenated in point order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFeature {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub channels: usize,
}

impl AnchorFeature {
    pub fn num_points(&self) -> usize {
        self.valid.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub valid: bool,
}

pub fn bilinear_sample(fm: &FeatureMap, u: f64, v: f64) -> Sample {
    let mut values = vec![0.0; fm.channels()];
    let valid = fm.sample_into(u, v, &mut values);
    Sample { values, valid }
}

pub fn trilinear_sample(fv: &FeatureVolume, p: &GroundPoint) -> Sample {
    let mut values = vec![0.0; fv.channels()];
    let valid = fv.sample_into(p, &mut values);
    Sample { values, valid }
}

/// Projects every anchor point into `fm` and bilinearly samples it.
pub fn sample_anchor(anchor: &Anchor3D, fm: &FeatureMap, rig: &CameraRig) -> Result<AnchorFeature> {
    let (h, w, c) = fm.dims();
    if rig.feature_size() != [h, w] {
        return Err(Error::shape(
            "feature map vs rig.feature_size",
            format!("{:?}", rig.feature_size()),
            format!("{:?}", [h, w]),
        ));
    }
    let n = anchor.len();
    let mut values = vec![0.0; n * c];
    let mut valid = vec![false; n];
    for (k, p) in anchor.points.iter().enumerate() {
        if let Ok(fp) = project_to_feature(p, rig) {
            valid[k] = fm.sample_into(fp.u, fp.v, &mut values[k * c..(k + 1) * c]);
        }
    }
    Ok(AnchorFeature { values, valid, channels: c })
}

/// Transforms every anchor point into the LiDAR frame and trilinearly samples `fv`.
pub fn sample_anchor_lidar(anchor: &Anchor3D, fv: &FeatureVolume, rig: &CameraRig) -> Result<AnchorFeature> {
    let c = fv.channels();
    let n = anchor.len();
    let mut values = vec![0.0; n * c];
    let mut valid = vec![false; n];
    for (k, p) in anchor.points.iter().enumerate() {
        let q = project_to_lidar(p, rig)?;
        valid[k] = fv.sample_into(&q, &mut values[k * c..(k + 1) * c]);
    }
    Ok(AnchorFeature { values, valid, channels: c })
}

/// Per-point channel concatenation, camera channels first.
pub fn fuse(camera: &AnchorFeature, lidar: &AnchorFeature) -> Result<AnchorFeature> {
    let n = camera.num_points();
    if lidar.num_points() != n {
        return Err(Error::LengthMismatch { left: n, right: lidar.num_points() });
    }
    let channels = camera.channels + lidar.channels;
    let mut values = Vec::with_capacity(n * channels);
    for k in 0..n {
        values.extend_from_slice(camera.point(k));
        values.extend_from_slice(lidar.point(k));
    }
    let valid = camera.valid.iter().zip(&lidar.valid).map(|(a, b)| *a || *b).collect();
    Ok(AnchorFeature { values, valid, channels })
}
