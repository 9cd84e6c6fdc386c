//! Independent reference computations used by the integration and acceptance suites.
//!
//! These deliberately avoid the library's code paths: the heat-map oracle
//! scans every cell for every position, and the trail oracles use closed
//! forms or direct convolution sums instead of the recursive update.

#![allow(dead_code)]

/// Direct kernel sum over the full grid, returned row-major.
pub fn brute_force_heatmap(
    positions: &[(f64, f64, i64)],
    now: i64,
    width: usize,
    height: usize,
    bandwidth: f64,
    half_life_s: Option<f64>,
) -> Vec<f64> {
    let mut cells = vec![0.0; width * height];
    let cutoff = (3.0 * bandwidth).powi(2);
    for &(px, py, t) in positions {
        let weight = match half_life_s {
            None => 1.0,
            Some(hl) => 0.5f64.powf(((now - t).max(0) as f64 / 1000.0) / hl),
        };
        let mut kernel = vec![0.0; width * height];
        let mut total = 0.0;
        for j in 0..height {
            for i in 0..width {
                let cx = (i as f64 + 0.5) / width as f64;
                let cy = (j as f64 + 0.5) / height as f64;
                let d2 = (cx - px).powi(2) + (cy - py).powi(2);
                if d2 <= cutoff {
                    let k = (-d2 / (2.0 * bandwidth * bandwidth)).exp();
                    kernel[j * width + i] = k;
                    total += k;
                }
            }
        }
        if total == 0.0 {
            let i = ((px * width as f64) as usize).min(width - 1);
            let j = ((py * height as f64) as usize).min(height - 1);
            cells[j * width + i] += weight;
        } else {
            for (c, k) in cells.iter_mut().zip(&kernel) {
                *c += weight * k / total;
            }
        }
    }
    cells
}

/// Cursor coordinate after `n` ticks of constant velocity from rest, ignoring the clamp.
pub fn geometric_series(gain: f64, velocity: f64, dt: f64, recenter: f64, n: u32) -> f64 {
    gain * velocity * dt * (1.0 - recenter.powi(n as i32)) / (1.0 - recenter)
}

/// Cursor coordinate after the full input sequence, as an explicit convolution
/// `sum_k recenter^(n-k) * gain * v_k * dt`, ignoring the clamp.
pub fn convolution(gain: f64, velocities: &[f64], dt: f64, recenter: f64) -> f64 {
    let n = velocities.len();
    velocities
        .iter()
        .enumerate()
        .map(|(k, v)| recenter.powi((n - 1 - k) as i32) * gain * v * dt)
        .sum()
}

/// Composite Simpson rule over `[a, b]` with `intervals` (even) sub-intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Local maxima over the 8-neighbourhood, as `(i, j, value)`.
pub fn local_maxima(cells: &[f64], width: usize, height: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for j in 0..height {
        for i in 0..width {
            let v = cells[j * width + i];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= width as i64 || nj >= height as i64 {
                        continue;
                    }
                    if cells[nj as usize * width + ni as usize] > v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((i, j, v));
            }
        }
    }
    out
}
