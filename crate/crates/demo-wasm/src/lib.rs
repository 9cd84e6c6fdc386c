//! Browser demo of the aggregation pipelines, compiled to WebAssembly.
//!
//! Three toys share the core crate with the server: a click-to-gaze heat map
//! with a dense-area threshold, a room of simulated nodders and shakers drawn
//! as trails, and the moving-average smoother applied to a noisy signal.

use calmrelay_core::gaze::{accumulate_heatmap, dense_area_map, GridSpec, HeatKernel, Smoother, TimedPosition};
use calmrelay_core::nod::{compose_trails, vertical_dominance, TrailParams, TrailState};
use calmrelay_core::scenario::{generate_nod, GeneratorState, NodBehavior};
use wasm_bindgen::prelude::*;

const HORIZON_MS: i64 = 6_000;

#[wasm_bindgen]
pub struct HeatDemo {
    grid: GridSpec,
    kernel: HeatKernel,
    positions: Vec<TimedPosition>,
    now: i64,
}

#[wasm_bindgen]
impl HeatDemo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> HeatDemo {
        HeatDemo {
            grid: GridSpec::default(),
            kernel: HeatKernel {
                bandwidth: 0.03,
                half_life_s: Some(2.0),
            },
            positions: Vec::new(),
            now: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn set_bandwidth(&mut self, h: f64) {
        if h.is_finite() && h > 0.0 {
            self.kernel.bandwidth = h;
        }
    }

    /// Records a gaze at the current time; coordinates are clamped to the unit square.
    pub fn gaze(&mut self, x: f64, y: f64) {
        self.positions.push(TimedPosition {
            x: x.clamp(0.0, 1.0),
            y: y.clamp(0.0, 1.0),
            t: self.now,
        });
    }

    pub fn advance(&mut self, dt_ms: u32) {
        self.now += dt_ms as i64;
        let horizon = self.now - HORIZON_MS;
        self.positions.retain(|p| p.t >= horizon);
    }

    pub fn clear(&mut self) {
        self.positions.clear();
    }

    /// Row-major densities scaled to [0, 1]. Cells below `threshold` of the
    /// peak are zeroed when `threshold` is in (0, 1].
    pub fn render(&self, threshold: f64) -> Vec<f64> {
        let map = accumulate_heatmap(&self.positions, self.now, self.grid, &self.kernel);
        let cells = if threshold > 0.0 && threshold <= 1.0 {
            dense_area_map(&map, threshold).expect("threshold checked").cells
        } else {
            map.cells
        };
        let max = map.max_density;
        if max > 0.0 {
            cells.iter().map(|c| c / max).collect()
        } else {
            cells
        }
    }
}

impl Default for HeatDemo {
    fn default() -> Self {
        Self::new()
    }
}

/// A room of simulated audiences, some nodding and some shaking.
#[wasm_bindgen]
pub struct TrailDemo {
    params: TrailParams,
    trails: Vec<TrailState>,
    behaviors: Vec<NodBehavior>,
    generators: Vec<GeneratorState>,
    tick: u64,
    tick_hz: f64,
}

#[wasm_bindgen]
impl TrailDemo {
    /// `nodders` of the `n` audiences nod at `freq_hz`; the rest shake.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, nodders: usize, freq_hz: f64) -> TrailDemo {
        let params = TrailParams::default();
        let amp = 0.05;
        TrailDemo {
            trails: (0..n).map(|_| TrailState::new(params.history_len)).collect(),
            behaviors: (0..n)
                .map(|i| {
                    if i < nodders {
                        NodBehavior::Nod { freq_hz, amp }
                    } else {
                        NodBehavior::Shake { freq_hz, amp }
                    }
                })
                .collect(),
            generators: (0..n as u64).map(|i| GeneratorState::new(7, i)).collect(),
            params,
            tick: 0,
            tick_hz: 15.0,
        }
    }

    pub fn set_gains(&mut self, gain_x: f64, gain_y: f64) {
        self.params.gain_x = gain_x.max(0.0);
        self.params.gain_y = gain_y.max(0.0);
    }

    pub fn set_recenter(&mut self, recenter: f64) {
        self.params.recenter = recenter.clamp(0.0, 0.999);
    }

    pub fn slots(&self) -> usize {
        self.trails.len()
    }

    /// Advances one tick and returns the frame flattened as
    /// `[len, u0, v0, u1, v1, ...]` per slot, slots in order.
    pub fn step(&mut self) -> Vec<f64> {
        self.tick += 1;
        let dt = 1.0 / self.tick_hz;
        let t = self.tick as f64 * dt;
        for ((trail, behavior), generator) in self.trails.iter_mut().zip(&self.behaviors).zip(&mut self.generators) {
            let (vx, vy) = generate_nod(behavior, t, generator);
            trail.advance(&self.params, vx, vy, dt);
        }
        let frame = compose_trails(self.trails.iter(), self.params.spacing, self.tick);
        let mut out = Vec::new();
        for slot in &frame.slots {
            out.push(slot.len() as f64);
            for &(u, v) in slot {
                out.push(u);
                out.push(v);
            }
        }
        out
    }

    /// Vertical over horizontal trail extent of the current frame.
    pub fn dominance(&self) -> f64 {
        let frame = compose_trails(self.trails.iter(), self.params.spacing, self.tick);
        vertical_dominance(&frame.slots)
    }
}

/// Moving average of `values` over `window` samples, as the gaze pipeline applies it.
#[wasm_bindgen]
pub fn smooth_series(values: &[f64], window: usize) -> Vec<f64> {
    let mut smoother = Smoother::new(window.max(1));
    values.iter().map(|&v| smoother.smooth(v, 0.0).0).collect()
}
