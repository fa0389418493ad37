use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GroundPoint;

/// Class index reserved for "not a lane".
pub const NON_LANE: usize = 0;

/// A ground-truth (or reference) 3D lane sampled at fixed forward distances.
///
/// Lane categories are `1..=S`; index `0` is reserved for the non-lane class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane3D {
    pub category: usize,
    pub points: Vec<GroundPoint>,
    pub visibility: Vec<f64>,
}

impl Lane3D {
    pub fn new(category: usize, points: Vec<GroundPoint>, visibility: Vec<f64>) -> Result<Self> {
        let lane = Self { category, points, visibility };
        lane.validate()?;
        Ok(lane)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.visibility.len() {
            return Err(Error::InvalidLane(format!(
                "{} points but {} visibility flags",
                self.points.len(),
                self.visibility.len()
            )));
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidLane("non-finite coordinate".into()));
        }
        if self.visibility.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidLane("visibility outside [0, 1]".into()));
        }
        if self.points.windows(2).any(|w| !(w[1].y > w[0].y)) {
            return Err(Error::InvalidLane("y must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn is_visible(&self, k: usize) -> bool {
        self.visibility[k] >= 0.5
    }
}

/// Evenly spaced forward sample positions over `[start, end]`, inclusive.
pub fn uniform_samples(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|k| start + step * k as f64).collect();
            v[n - 1] = end;
            v
        }
    }
}
