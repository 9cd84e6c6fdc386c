//! Head-motion trails driven by nose-tip velocity.
//!
//! Each audience owns a cursor that integrates its nose-tip velocity with a
//! leaky integrator, so a downward nod stroke extends the trail from the rest
//! point downward and the trail drifts back once the head is still. The room
//! superimposes every trail with a symmetric horizontal offset; vertical
//! gain larger than horizontal gain makes collective nodding stand out.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::V_MAX;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum VelocityError {
    #[error("BAD_DT: dt={0}s outside (0, 1]")]
    BadDt(f64),
    #[error("non-finite landmark position")]
    NonFinite,
    #[error("viewport must have positive size")]
    BadViewport,
}

/// Nose-tip velocity in normalized units per second from two landmark positions in pixels.
///
/// Positive `vy` is downward (image rows grow downward). Intervals over one
/// second are treated as landmark dropout.
pub fn nose_velocity(
    prev: (f64, f64),
    curr: (f64, f64),
    dt: f64,
    viewport: (f64, f64),
) -> Result<(f64, f64), VelocityError> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(VelocityError::BadDt(dt));
    }
    if ![prev.0, prev.1, curr.0, curr.1].iter().all(|v| v.is_finite()) {
        return Err(VelocityError::NonFinite);
    }
    if !(viewport.0 > 0.0 && viewport.1 > 0.0) {
        return Err(VelocityError::BadViewport);
    }
    let vx = (curr.0 - prev.0) / (viewport.0 * dt);
    let vy = (curr.1 - prev.1) / (viewport.1 * dt);
    Ok((vx.clamp(-V_MAX, V_MAX), vy.clamp(-V_MAX, V_MAX)))
}

/// Trail dynamics and layout parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrailParams {
    pub history_len: usize,
    /// Per-tick recentering factor in `[0, 1)`.
    pub recenter: f64,
    pub gain_x: f64,
    pub gain_y: f64,
    pub clamp_u: f64,
    pub clamp_v: f64,
    /// Horizontal distance between adjacent slots.
    pub spacing: f64,
}

impl Default for TrailParams {
    fn default() -> Self {
        TrailParams {
            history_len: 24,
            recenter: 0.90,
            gain_x: 1.0,
            gain_y: 2.5,
            clamp_u: 0.5,
            clamp_v: 0.5,
            spacing: 0.02,
        }
    }
}

impl TrailParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.history_len == 0 {
            return Err("history_len must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.recenter) {
            return Err(format!("recenter {} outside [0, 1)", self.recenter));
        }
        for (name, v) in [
            ("gain_x", self.gain_x),
            ("gain_y", self.gain_y),
            ("clamp_u", self.clamp_u),
            ("clamp_v", self.clamp_v),
            ("spacing", self.spacing),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrailState {
    cursor: (f64, f64),
    history: VecDeque<(f64, f64)>,
    capacity: usize,
}

impl TrailState {
    /// Cursor at rest with a single rest point in its history.
    pub fn new(history_len: usize) -> Self {
        let capacity = history_len.max(1);
        let mut history = VecDeque::with_capacity(capacity + 1);
        history.push_back((0.0, 0.0));
        TrailState {
            cursor: (0.0, 0.0),
            history,
            capacity,
        }
    }

    pub fn cursor(&self) -> (f64, f64) {
        self.cursor
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.history.iter().copied()
    }

    /// One tick: `cursor <- clamp(recenter * cursor + gain * v * dt)`.
    pub fn advance(&mut self, params: &TrailParams, vx: f64, vy: f64, dt: f64) {
        let (u, v) = self.cursor;
        let u = (params.recenter * u + params.gain_x * vx * dt).clamp(-params.clamp_u, params.clamp_u);
        let v = (params.recenter * v + params.gain_y * vy * dt).clamp(-params.clamp_v, params.clamp_v);
        self.cursor = (u, v);
        self.history.push_back(self.cursor);
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrailFrame {
    pub spacing: f64,
    pub slots: Vec<Vec<(f64, f64)>>,
    pub tick_seq: u64,
}

impl TrailFrame {
    pub fn n_audiences(&self) -> usize {
        self.slots.len()
    }
}

/// Horizontal offset of slot `i` among `n` symmetric slots.
pub fn slot_offset(i: usize, n: usize, spacing: f64) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * spacing
}

/// Superimposes trails, already in slot order, each shifted by its slot offset.
pub fn compose_trails<'a, I>(trails: I, spacing: f64, tick_seq: u64) -> TrailFrame
where
    I: IntoIterator<Item = &'a TrailState>,
    I::IntoIter: ExactSizeIterator,
{
    let trails = trails.into_iter();
    let n = trails.len();
    let slots = trails
        .enumerate()
        .map(|(i, trail)| {
            let offset = slot_offset(i, n, spacing);
            trail.history().map(|(u, v)| (u + offset, v)).collect()
        })
        .collect();
    TrailFrame {
        spacing,
        slots,
        tick_seq,
    }
}

fn extent(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo.is_finite() && hi.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Summed vertical extent over summed horizontal extent of all slots.
///
/// Offsets cancel inside each extent. Still frames give 0; purely vertical
/// motion gives `f64::INFINITY`.
pub fn vertical_dominance(slots: &[Vec<(f64, f64)>]) -> f64 {
    let vertical: f64 = slots.iter().map(|s| extent(s.iter().map(|p| p.1))).sum();
    let horizontal: f64 = slots.iter().map(|s| extent(s.iter().map(|p| p.0))).sum();
    if horizontal == 0.0 {
        if vertical == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        vertical / horizontal
    }
}
