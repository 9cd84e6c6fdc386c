//! Gaze smoothing and collective aggregation: dots, heat map, dense-area mask.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Millis;

/// Moving-average smoother over the last `window` admitted positions.
#[derive(Debug, Clone)]
pub struct Smoother {
    window: usize,
    buf: VecDeque<(f64, f64)>,
}

impl Smoother {
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Smoother {
            window,
            buf: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Inserts a position and returns the mean of the buffer.
    pub fn smooth(&mut self, x: f64, y: f64) -> (f64, f64) {
        self.buf.push_back((x, y));
        while self.buf.len() > self.window {
            self.buf.pop_front();
        }
        self.mean().expect("buffer holds at least the new sample")
    }

    pub fn mean(&self) -> Option<(f64, f64)> {
        if self.buf.is_empty() {
            return None;
        }
        // deviations from the oldest entry, so constant input is reproduced exactly
        let n = self.buf.len() as f64;
        let (x0, y0) = self.buf[0];
        let (dx, dy) = self
            .buf
            .iter()
            .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + (x - x0), ay + (y - y0)));
        Some((x0 + dx / n, y0 + dy / n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 64,
            height: 36,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Cell containing a normalized position; the far edges belong to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x * self.width as f64).floor().max(0.0) as usize).min(self.width - 1);
        let j = ((y * self.height as f64).floor().max(0.0) as usize).min(self.height - 1);
        (i, j)
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 + 0.5) / self.width as f64,
            (j as f64 + 0.5) / self.height as f64,
        )
    }
}

/// Kernel and decay parameters for heat-map accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernel {
    /// Gaussian bandwidth in normalized units. Support is truncated at `3 * bandwidth`.
    pub bandwidth: f64,
    /// Half-life of temporal decay in seconds; `None` disables decay.
    pub half_life_s: Option<f64>,
}

impl Default for HeatKernel {
    fn default() -> Self {
        HeatKernel {
            bandwidth: 0.03,
            half_life_s: Some(2.0),
        }
    }
}

impl HeatKernel {
    pub fn weight_at_age(&self, age_ms: Millis) -> f64 {
        match self.half_life_s {
            None => 1.0,
            Some(half_life) => {
                let tau = half_life / std::f64::consts::LN_2;
                let age_s = age_ms.max(0) as f64 / 1000.0;
                (-age_s / tau).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPosition {
    pub x: f64,
    pub y: f64,
    pub t: Millis,
}

/// Row-major density grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub grid: GridSpec,
    pub cells: Vec<f64>,
    pub max_density: f64,
}

impl HeatMap {
    pub fn zeros(grid: GridSpec) -> Self {
        HeatMap {
            grid,
            cells: vec![0.0; grid.cells()],
            max_density: 0.0,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[j * self.grid.width + i]
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Cell holding the maximum density. Exact ties resolve to the highest
    /// row-major index, the same side [`GridSpec::cell_of`] gives boundary points.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        if self.max_density <= 0.0 {
            return None;
        }
        let k = self.cells.iter().rposition(|&c| c == self.max_density)?;
        Some((k % self.grid.width, k / self.grid.width))
    }

    fn refresh_max(&mut self) {
        self.max_density = self.cells.iter().copied().fold(0.0, f64::max);
    }
}

/// Heat map plus frame metadata. Carries a count, never identities.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapFrame {
    pub map: HeatMap,
    pub tick_seq: u64,
    pub n_audiences: usize,
}

/// Deposits one truncated, edge-renormalized Gaussian per position.
///
/// Each position carries unit mass before its temporal weight
/// `exp(-(now - t) / tau)` is applied.
pub fn accumulate_heatmap(
    positions: &[TimedPosition],
    now: Millis,
    grid: GridSpec,
    kernel: &HeatKernel,
) -> HeatMap {
    let mut map = HeatMap::zeros(grid);
    let h = kernel.bandwidth;
    let radius = 3.0 * h;
    let r2 = radius * radius;
    let inv_two_h2 = 1.0 / (2.0 * h * h);
    let w = grid.width as f64;
    let hgt = grid.height as f64;
    let mut scratch: Vec<(usize, f64)> = Vec::new();

    for p in positions {
        let weight = kernel.weight_at_age(now - p.t);
        // candidate box, one cell wider than needed; the disk test decides membership
        let i0 = ((p.x - radius) * w - 1.0).floor().max(0.0) as usize;
        let i1 = (((p.x + radius) * w + 1.0).ceil().max(0.0) as usize).min(grid.width - 1);
        let j0 = ((p.y - radius) * hgt - 1.0).floor().max(0.0) as usize;
        let j1 = (((p.y + radius) * hgt + 1.0).ceil().max(0.0) as usize).min(grid.height - 1);

        scratch.clear();
        let mut norm = 0.0;
        for j in j0..=j1 {
            let dy = (j as f64 + 0.5) / hgt - p.y;
            for i in i0..=i1 {
                let dx = (i as f64 + 0.5) / w - p.x;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2 {
                    let k = (-d2 * inv_two_h2).exp();
                    norm += k;
                    scratch.push((j * grid.width + i, k));
                }
            }
        }

        if norm > 0.0 {
            for &(idx, k) in &scratch {
                map.cells[idx] += weight * k / norm;
            }
        } else {
            // support narrower than a cell: all mass to the containing cell
            let (i, j) = grid.cell_of(p.x, p.y);
            map.cells[j * grid.width + i] += weight;
        }
    }
    map.refresh_max();
    map
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("INVALID_THRESHOLD: {0} is outside (0, 1]")]
pub struct InvalidThreshold(pub f64);

/// Cells at or above `threshold * max_density`. All false for an empty map.
pub fn dense_area_mask(map: &HeatMap, threshold: f64) -> Result<Vec<bool>, InvalidThreshold> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(InvalidThreshold(threshold));
    }
    if map.max_density <= 0.0 {
        return Ok(vec![false; map.cells.len()]);
    }
    let cut = threshold * map.max_density;
    Ok(map.cells.iter().map(|&c| c >= cut).collect())
}

/// Heat map with every cell outside the dense-area mask zeroed.
pub fn dense_area_map(map: &HeatMap, threshold: f64) -> Result<HeatMap, InvalidThreshold> {
    let mask = dense_area_mask(map, threshold)?;
    let cells = map
        .cells
        .iter()
        .zip(&mask)
        .map(|(&c, &keep)| if keep { c } else { 0.0 })
        .collect();
    Ok(HeatMap {
        grid: map.grid,
        cells,
        max_density: map.max_density,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotsFrame {
    pub points: Vec<(f64, f64)>,
    pub tick_seq: u64,
}

/// One point per active audience, in a fresh seeded permutation.
pub fn dots_frame(latest: &[(f64, f64)], frame_seed: u64, tick_seq: u64) -> DotsFrame {
    let mut points = latest.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
    points.shuffle(&mut rng);
    DotsFrame { points, tick_seq }
}
