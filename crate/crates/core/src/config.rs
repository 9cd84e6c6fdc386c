//! Per-room configuration.

use serde::{Deserialize, Serialize};

use crate::gaze::{GridSpec, HeatKernel};
use crate::model::Mode;
use crate::nod::TrailParams;

pub const MAX_AUDIENCES: usize = 256;

/// How a gaze room renders its aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeDisplay {
    #[default]
    Heatmap,
    Dots,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeParams {
    pub window: usize,
    pub grid: GridSpec,
    pub bandwidth: f64,
    /// `None` disables temporal decay.
    pub half_life_s: Option<f64>,
    /// Positions older than this no longer contribute.
    pub horizon_s: f64,
    pub display: GazeDisplay,
    pub dense_threshold: f64,
}

impl Default for GazeParams {
    fn default() -> Self {
        GazeParams {
            window: 6,
            grid: GridSpec::default(),
            bandwidth: 0.03,
            half_life_s: Some(2.0),
            horizon_s: 6.0,
            display: GazeDisplay::Heatmap,
            dense_threshold: 0.5,
        }
    }
}

impl GazeParams {
    pub fn kernel(&self) -> HeatKernel {
        HeatKernel {
            bandwidth: self.bandwidth,
            half_life_s: self.half_life_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomConfig {
    pub mode: Mode,
    pub tick_hz: u32,
    pub max_audiences: usize,
    /// Audiences silent for longer than this are evicted.
    pub liveness_s: f64,
    /// Empty rooms are destroyed after this grace period.
    pub empty_grace_s: f64,
    pub gaze: GazeParams,
    pub nod: TrailParams,
    /// Session seed; drawn at room creation when absent.
    pub seed: Option<u64>,
    pub record: bool,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            mode: Mode::Gaze,
            tick_hz: 15,
            max_audiences: MAX_AUDIENCES,
            liveness_s: 5.0,
            empty_grace_s: 60.0,
            gaze: GazeParams::default(),
            nod: TrailParams::default(),
            seed: None,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid room config: {0}")]
pub struct ConfigError(pub String);

impl RoomConfig {
    pub fn with_mode(mode: Mode) -> Self {
        RoomConfig {
            mode,
            ..RoomConfig::default()
        }
    }

    pub fn tick_period_s(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if !(1..=60).contains(&self.tick_hz) {
            return err(format!("tick_hz {} outside [1, 60]", self.tick_hz));
        }
        if self.max_audiences == 0 || self.max_audiences > MAX_AUDIENCES {
            return err(format!("max_audiences must be in 1..={MAX_AUDIENCES}"));
        }
        if !(self.liveness_s > 0.0 && self.empty_grace_s >= 0.0) {
            return err("liveness_s must be positive and empty_grace_s non-negative".into());
        }
        let g = &self.gaze;
        if g.window == 0 {
            return err("gaze.window must be at least 1".into());
        }
        if g.grid.width == 0 || g.grid.height == 0 {
            return err("gaze.grid must be non-empty".into());
        }
        if !(g.bandwidth.is_finite() && g.bandwidth > 0.0) {
            return err("gaze.bandwidth must be positive".into());
        }
        if let Some(h) = g.half_life_s {
            if !(h.is_finite() && h > 0.0) {
                return err("gaze.half_life_s must be positive".into());
            }
        }
        if g.horizon_s.is_nan() || g.horizon_s <= 0.0 {
            return err("gaze.horizon_s must be positive".into());
        }
        if !(g.dense_threshold > 0.0 && g.dense_threshold <= 1.0) {
            return err("gaze.dense_threshold outside (0, 1]".into());
        }
        self.nod.validate().map_err(ConfigError)
    }
}
