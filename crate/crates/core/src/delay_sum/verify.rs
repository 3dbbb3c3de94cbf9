//! Matching a numeric surface against a peak prediction.
//!
//! A predicted peak at or above the threshold must have a surface local
//! maximum (of any level) within one cell, and every surface local maximum
//! at or above the threshold must lie within one cell of some predicted peak
//! (of any level). Tolerating sub-threshold partners on the other side keeps
//! grid-sampling losses of a few hundredths of a dB from flipping a verdict.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::predict::{PeakClass, PeakPrediction, PredictedPeak};
use super::surface::AfSurface;

pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = -13.0;

/// Amplitude threshold for a dynamic range in dB (sign ignored).
pub fn threshold_from_db(dynamic_range_db: f64) -> f64 {
    10f64.powf(-dynamic_range_db.abs() / 20.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("grid too coarse: predicted peaks at ({0:.3e} s, {1:.3e} Hz) and ({2:.3e} s, {3:.3e} Hz) are closer than two cells")]
    GridTooCoarse(f64, f64, f64, f64),
    #[error("grid is empty")]
    EmptyGrid,
}

/// Normalized magnitudes on a delay × Doppler grid, optionally periodic.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakGrid {
    pub tau_axis_sec: Vec<f64>,
    pub fd_axis_hz: Vec<f64>,
    /// `values[tau_index][fd_index]`.
    pub values: Vec<Vec<f64>>,
    pub tau_period_sec: Option<f64>,
    pub fd_period_hz: Option<f64>,
}

impl From<&AfSurface> for PeakGrid {
    fn from(s: &AfSurface) -> Self {
        Self {
            tau_axis_sec: s.tau_axis_sec.clone(),
            fd_axis_hz: s.fd_axis_hz.clone(),
            values: s.magnitudes.clone(),
            tau_period_sec: None,
            fd_period_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericPeak {
    pub tau_index: usize,
    pub fd_index: usize,
    pub tau_sec: f64,
    pub fd_hz: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub threshold: f64,
    pub matched: usize,
    /// Required predicted peaks without a nearby surface maximum.
    pub missing: Vec<PredictedPeak>,
    /// Surface maxima above threshold that nothing predicts.
    pub unexpected: Vec<NumericPeak>,
    /// Surface maxima at or above the threshold.
    pub numeric_peaks: Vec<NumericPeak>,
    /// Required predicted peaks lying outside the grid.
    pub out_of_grid: usize,
}

impl MatchReport {
    pub fn mismatch_count(&self) -> usize {
        self.missing.len() + self.unexpected.len()
    }

    pub fn is_clean(&self) -> bool {
        self.mismatch_count() == 0
    }
}

/// Local maxima, strictly greater than every neighbour in the 8-neighbourhood.
/// A plateau of equal cells counts once, at its first cell in row-major order.
pub fn local_maxima(grid: &PeakGrid) -> Vec<NumericPeak> {
    let rows = grid.values.len();
    let cols = grid.values.first().map_or(0, Vec::len);
    let wrap_r = grid.tau_period_sec.is_some();
    let wrap_c = grid.fd_period_hz.is_some();
    let neighbours = |r: usize, c: usize| {
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (mut rr, mut cc) = (r as i64 + dr, c as i64 + dc);
                if wrap_r {
                    rr = rr.rem_euclid(rows as i64);
                }
                if wrap_c {
                    cc = cc.rem_euclid(cols as i64);
                }
                if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                    continue;
                }
                let cell = (rr as usize, cc as usize);
                if cell != (r, c) && !out.contains(&cell) {
                    out.push(cell);
                }
            }
        }
        out
    };

    let mut visited = vec![false; rows * cols];
    let mut peaks = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if visited[r * cols + c] {
                continue;
            }
            let v = grid.values[r][c];
            let mut is_max = true;
            let mut queue = VecDeque::from([(r, c)]);
            visited[r * cols + c] = true;
            while let Some((cr, cc)) = queue.pop_front() {
                for (nr, nc) in neighbours(cr, cc) {
                    let w = grid.values[nr][nc];
                    if w == v {
                        if !visited[nr * cols + nc] {
                            visited[nr * cols + nc] = true;
                            queue.push_back((nr, nc));
                        }
                    } else if w > v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                peaks.push(NumericPeak {
                    tau_index: r,
                    fd_index: c,
                    tau_sec: grid.tau_axis_sec[r],
                    fd_hz: grid.fd_axis_hz[c],
                    level: v,
                });
            }
        }
    }
    peaks
}

fn cell(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        (axis[axis.len() - 1] - axis[0]).abs() / (axis.len() - 1) as f64
    }
}

fn distance(a: f64, b: f64, period: Option<f64>) -> f64 {
    let d = (a - b).abs();
    match period {
        Some(p) => {
            let m = d.rem_euclid(p);
            m.min(p - m)
        }
        None => d,
    }
}

fn inside(axis: &[f64], x: f64, period: Option<f64>, tol: f64) -> bool {
    if period.is_some() || axis.is_empty() {
        return true;
    }
    let (lo, hi) = (axis[0].min(axis[axis.len() - 1]), axis[0].max(axis[axis.len() - 1]));
    x >= lo - tol && x <= hi + tol
}

/// [`verify_grid`] on an ambiguity surface.
pub fn verify_prediction(
    surface: &AfSurface,
    prediction: &PeakPrediction,
    dynamic_range_db: f64,
) -> Result<MatchReport, VerifyError> {
    verify_grid(&PeakGrid::from(surface), prediction, dynamic_range_db)
}

/// Two-way match between grid local maxima and `prediction`.
pub fn verify_grid(
    grid: &PeakGrid,
    prediction: &PeakPrediction,
    dynamic_range_db: f64,
) -> Result<MatchReport, VerifyError> {
    if grid.values.is_empty() || grid.values[0].is_empty() {
        return Err(VerifyError::EmptyGrid);
    }
    let threshold = threshold_from_db(dynamic_range_db);
    let cell_tau = cell(&grid.tau_axis_sec);
    let cell_fd = cell(&grid.fd_axis_hz);
    let slack = 1.0 + 1e-6;
    let tol_tau = cell_tau * 1e-6 + 1e-15;
    let tol_fd = cell_fd * 1e-6 + 1e-9;

    let main = PredictedPeak {
        tau_sec: prediction.main_tau_sec,
        fd_hz: prediction.main_fd_hz,
        fd_peak_hz: prediction.main_fd_hz,
        level: 1.0,
        class: PeakClass::Main,
        lattice: None,
    };
    let expected: Vec<&PredictedPeak> = std::iter::once(&main).chain(prediction.peaks.iter()).collect();

    let near = |p: &PredictedPeak, tau: f64, fd: f64, cells: f64| {
        distance(p.tau_sec, tau, grid.tau_period_sec) <= cells * cell_tau * slack + tol_tau
            && [p.fd_hz, p.fd_peak_hz]
                .iter()
                .any(|&f| distance(f, fd, grid.fd_period_hz) <= cells * cell_fd * slack + tol_fd)
    };

    let mut out_of_grid = 0;
    let required: Vec<&PredictedPeak> = expected
        .iter()
        .copied()
        .filter(|p| p.level >= threshold)
        .filter(|p| {
            let ok = inside(&grid.tau_axis_sec, p.tau_sec, grid.tau_period_sec, tol_tau)
                && inside(&grid.fd_axis_hz, p.fd_hz, grid.fd_period_hz, tol_fd);
            if !ok {
                out_of_grid += 1;
            }
            ok
        })
        .collect();

    for (i, a) in required.iter().enumerate() {
        for b in &required[i + 1..] {
            let dt = distance(a.tau_sec, b.tau_sec, grid.tau_period_sec);
            let df = distance(a.fd_hz, b.fd_hz, grid.fd_period_hz);
            let close_tau = dt < 2.0 * cell_tau - tol_tau || dt <= tol_tau;
            let close_fd = df < 2.0 * cell_fd - tol_fd || df <= tol_fd;
            if close_tau && close_fd {
                return Err(VerifyError::GridTooCoarse(a.tau_sec, a.fd_hz, b.tau_sec, b.fd_hz));
            }
        }
    }

    let all_maxima = local_maxima(grid);
    let mut matched = 0;
    let mut missing = Vec::new();
    for p in &required {
        if all_maxima.iter().any(|m| near(p, m.tau_sec, m.fd_hz, 1.0)) {
            matched += 1;
        } else {
            missing.push((*p).clone());
        }
    }
    let numeric_peaks: Vec<NumericPeak> =
        all_maxima.into_iter().filter(|m| m.level >= threshold).collect();
    let unexpected = numeric_peaks
        .iter()
        .filter(|m| !expected.iter().any(|p| near(p, m.tau_sec, m.fd_hz, 1.0)))
        .cloned()
        .collect();
    Ok(MatchReport { threshold, matched, missing, unexpected, numeric_peaks, out_of_grid })
}
