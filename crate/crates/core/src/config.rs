//! Run configuration: dataset profile, anchor/loss/eval settings and the
//! stage plan, all serialisable with every default spelled out.

use serde::{Deserialize, Serialize};

use crate::anchors::{MetaRanges, MetaScaling};
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfigOL, EvalConfigONCE};
use crate::lane::uniform_samples;
use crate::losses::LossConfig;
use crate::pipeline::StagePlan;

/// Forward sample positions and category count of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub y_samples: Vec<f64>,
    /// Lane categories `S`, excluding the non-lane class.
    pub num_categories: usize,
}

impl DatasetProfile {
    pub fn openlane() -> Self {
        Self { name: "openlane".into(), y_samples: uniform_samples(3.0, 103.0, 20), num_categories: 14 }
    }

    pub fn apollosim() -> Self {
        Self { name: "apollosim".into(), y_samples: uniform_samples(3.0, 103.0, 20), num_categories: 1 }
    }

    pub fn once() -> Self {
        Self { name: "once".into(), y_samples: uniform_samples(3.0, 48.0, 10), num_categories: 1 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "openlane" => Some(Self::openlane()),
            "apollosim" => Some(Self::apollosim()),
            "once" => Some(Self::once()),
            _ => None,
        }
    }

    pub fn num_points(&self) -> usize {
        self.y_samples.len()
    }

    /// `S + 1`
    pub fn num_classes(&self) -> usize {
        self.num_categories + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.y_samples.len() < 2 {
            return Err(Error::InvalidConfig("profile needs at least two y-samples".into()));
        }
        if self.y_samples.windows(2).any(|w| !(w[1] > w[0])) || self.y_samples.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidConfig("profile y-samples must be finite and strictly increasing".into()));
        }
        if self.num_categories == 0 {
            return Err(Error::InvalidConfig("profile needs at least one lane category".into()));
        }
        Ok(())
    }
}

impl Default for DatasetProfile {
    fn default() -> Self {
        Self::openlane()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub profile: DatasetProfile,
    /// `M_a`
    pub num_anchors: usize,
    /// `[M_x, M_phi, M_theta]`
    pub prototypes: [usize; 3],
    pub meta_ranges: MetaRanges,
    pub meta_scaling: MetaScaling,
    /// `C_F` of every pyramid level.
    pub feature_channels: usize,
    /// Width `d` of the query/key/value projections.
    pub attn_dim: usize,
    pub loss: LossConfig,
    pub eval_openlane: EvalConfigOL,
    pub eval_once: EvalConfigONCE,
    pub plan: StagePlan,
    pub fusion: bool,
    /// LiDAR voxel channels when `fusion` is on.
    pub lidar_channels: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: DatasetProfile::default(),
            num_anchors: 30,
            prototypes: [30, 15, 5],
            meta_ranges: MetaRanges::default(),
            meta_scaling: MetaScaling::default(),
            feature_channels: 64,
            attn_dim: 32,
            loss: LossConfig::default(),
            eval_openlane: EvalConfigOL::default(),
            eval_once: EvalConfigONCE::default(),
            plan: StagePlan::default(),
            fusion: false,
            lidar_channels: 16,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.meta_ranges.validate()?;
        self.loss.validate()?;
        self.plan.validate()?;
        if self.num_anchors == 0 || self.prototypes.contains(&0) {
            return Err(Error::InvalidConfig("anchor and prototype counts must be positive".into()));
        }
        if self.feature_channels == 0 || self.attn_dim == 0 {
            return Err(Error::InvalidConfig("feature_channels and attn_dim must be positive".into()));
        }
        if self.fusion && self.lidar_channels == 0 {
            return Err(Error::InvalidConfig("fusion needs lidar_channels > 0".into()));
        }
        let ol = &self.eval_openlane;
        if !(ol.tp_fraction > 0.0 && ol.tp_fraction <= 1.0) || !(ol.tp_point_threshold > 0.0) {
            return Err(Error::InvalidConfig("eval_openlane thresholds out of range".into()));
        }
        let once = &self.eval_once;
        if [once.iou_threshold, once.tau_cd, once.lane_width, once.grid_cell].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("eval_once settings must be positive".into()));
        }
        Ok(())
    }

    /// Per-anchor feature length `C_a = N · (C_F [+ C_L])`.
    pub fn anchor_feature_len(&self) -> usize {
        let c = self.feature_channels + if self.fusion { self.lidar_channels } else { 0 };
        self.profile.num_points() * c
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::malformed_json(path, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, "c").unwrap(), cfg);
        assert_eq!(cfg.anchor_feature_len(), 20 * 64);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"attn_dim": 48}"#, "c").unwrap();
        assert_eq!(cfg.attn_dim, 48);
        assert_eq!(cfg.num_anchors, 30);
        assert!(RunConfig::from_json(r#"{"attn_dim": 0}"#, "c").is_err());
        assert!(matches!(RunConfig::from_json("{", "c"), Err(Error::MalformedJson { .. })));
    }
}
