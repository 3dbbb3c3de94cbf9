//! Brute-force ambiguity surfaces.
//!
//! The correlator uses the receiver sign convention
//! `A(d, f) = |Σ_n a(n)·b*(n−d)·e^{−j2π f n Δt}|`, so an echo delayed by `d*`
//! samples and shifted by `f*` Hz peaks at `(d*, f*)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::PatternConfig;
use crate::waveform::TimeFrame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AfError {
    #[error("delay {tau_sec} s is not a multiple of the sample period {sample_period_sec} s")]
    OffGridDelay { tau_sec: f64, sample_period_sec: f64 },
    #[error("delay and Doppler grids must be non-empty")]
    EmptyGrid,
    #[error("frame has zero energy")]
    ZeroEnergy,
    #[error("received and reference frames use different sample periods")]
    SamplePeriodMismatch,
}

/// Which products enter the correlation sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfWindow {
    /// Only products where both `n` and `n − d` fall inside the same RS
    /// symbol window `[i·S_sym·N', i·S_sym·N' + N')`.
    PerSymbol,
    /// Every product with both indices inside the frames.
    FullFrame,
}

/// Discretized `|A(τ, f_d)|` over a delay × Doppler grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfSurface {
    pub tau_axis_sec: Vec<f64>,
    pub fd_axis_hz: Vec<f64>,
    /// `magnitudes[tau_index][fd_index]`.
    pub magnitudes: Vec<Vec<f64>>,
    /// Energy used for normalization (`E_s`, or `sqrt(E_r·E_s)` for a cross surface).
    pub normalization_energy: f64,
    pub sample_period_sec: f64,
}

impl AfSurface {
    pub fn value(&self, tau_index: usize, fd_index: usize) -> f64 {
        self.magnitudes[tau_index][fd_index]
    }

    pub fn max(&self) -> f64 {
        self.magnitudes.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Delay index holding `delay_samples`, if it is on the grid.
    pub fn tau_index(&self, delay_samples: i64) -> Option<usize> {
        self.tau_axis_sec
            .iter()
            .position(|&t| (t / self.sample_period_sec).round() as i64 == delay_samples)
    }

    /// Doppler index nearest to `fd_hz`.
    pub fn fd_index(&self, fd_hz: f64) -> usize {
        nearest(&self.fd_axis_hz, fd_hz)
    }

    /// Copy rescaled so the largest cell is 1.
    pub fn normalized_to_max(&self) -> Self {
        let peak = self.max();
        let mut out = self.clone();
        if peak > 0.0 {
            for v in out.magnitudes.iter_mut().flatten() {
                *v /= peak;
            }
        }
        out
    }
}

pub(crate) fn nearest(axis: &[f64], x: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map_or(0, |(i, _)| i)
}

/// Doppler grid step `1/(8·M·T)`.
pub fn doppler_step_hz(config: &PatternConfig) -> f64 {
    1.0 / (8.0 * config.m_symbols as f64 * config.numerology.t_sec())
}

/// One-sample delay steps over `[0, T_s)`.
pub fn default_tau_grid(config: &PatternConfig) -> Vec<f64> {
    let dt = config.numerology.sample_period_sec();
    (0..config.numerology.n_fft).map(|d| d as f64 * dt).collect()
}

/// `[−1/T, 1/T]` at `1/(8·M·T)` steps (`16·M + 1` points).
pub fn default_fd_grid(config: &PatternConfig) -> Vec<f64> {
    fd_grid(config, 16 * config.m_symbols + 1)
}

/// `points` evenly spaced Doppler values covering `[−1/T, 1/T]`.
pub fn fd_grid(config: &PatternConfig, points: usize) -> Vec<f64> {
    let span = 1.0 / config.numerology.t_sec();
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let half = (points - 1) as f64 / 2.0;
            (0..points).map(|k| (k as f64 - half) / half * span).collect()
        }
    }
}

fn delays_in_samples(tau_grid_sec: &[f64], dt: f64) -> Result<Vec<i64>, AfError> {
    tau_grid_sec
        .iter()
        .map(|&tau| {
            let x = tau / dt;
            if (x - x.round()).abs() > 1e-6 || !x.is_finite() {
                Err(AfError::OffGridDelay { tau_sec: tau, sample_period_sec: dt })
            } else {
                Ok(x.round() as i64)
            }
        })
        .collect()
}

/// Nonzero-window products `a(n)·b*(n−d)` for one delay.
fn products(
    a: &[Complex64],
    b: &[Complex64],
    d: i64,
    windows: Option<(&[usize], usize)>,
) -> Vec<(usize, Complex64)> {
    let la = a.len() as i64;
    let lb = b.len() as i64;
    let ranges: Vec<(i64, i64)> = match windows {
        Some((starts, width)) => starts
            .iter()
            .map(|&s| {
                let s = s as i64;
                (s + d.max(0), s + width as i64 + d.min(0))
            })
            .collect(),
        None => vec![(d.max(0), la.min(lb + d))],
    };
    let mut out = Vec::new();
    for (lo, hi) in ranges {
        let lo = lo.max(0).max(d);
        let hi = hi.min(la).min(lb + d);
        for n in lo..hi {
            let v = a[n as usize] * b[(n - d) as usize].conj();
            if v != Complex64::new(0.0, 0.0) {
                out.push((n as usize, v));
            }
        }
    }
    out
}

fn correlate(
    a: &[Complex64],
    b: &[Complex64],
    delays: &[i64],
    fd_grid_hz: &[f64],
    dt: f64,
    windows: Option<(&[usize], usize)>,
) -> Vec<Vec<f64>> {
    let per_delay: Vec<Vec<(usize, Complex64)>> =
        delays.par_iter().map(|&d| products(a, b, d, windows)).collect();
    let rows: Vec<Vec<f64>> = fd_grid_hz
        .par_iter()
        .map(|&f| {
            let cycles_per_sample = f * dt;
            let phase: Vec<Complex64> = (0..a.len())
                .map(|n| {
                    let turns = (cycles_per_sample * n as f64).fract();
                    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * turns)
                })
                .collect();
            per_delay
                .iter()
                .map(|prods| prods.iter().map(|&(n, v)| v * phase[n]).sum::<Complex64>().norm())
                .collect()
        })
        .collect();
    (0..delays.len())
        .map(|t| rows.iter().map(|row| row[t]).collect())
        .collect()
}

fn window_spec(frame: &TimeFrame, window: AfWindow) -> Option<(&[usize], usize)> {
    match window {
        AfWindow::PerSymbol => Some((&frame.symbol_starts, frame.config.numerology.n_prime())),
        AfWindow::FullFrame => None,
    }
}

/// Self-ambiguity surface of `frame`, normalized by its energy so `A(0, 0) = 1`.
pub fn compute_af(
    frame: &TimeFrame,
    tau_grid_sec: &[f64],
    fd_grid_hz: &[f64],
    window: AfWindow,
) -> Result<AfSurface, AfError> {
    compute_cross_af(frame, frame, tau_grid_sec, fd_grid_hz, window)
}

/// Cross-ambiguity surface of a received frame against a reference frame,
/// normalized by `sqrt(E_r·E_s)`. The symbol windows come from the reference.
pub fn compute_cross_af(
    received: &TimeFrame,
    reference: &TimeFrame,
    tau_grid_sec: &[f64],
    fd_grid_hz: &[f64],
    window: AfWindow,
) -> Result<AfSurface, AfError> {
    if tau_grid_sec.is_empty() || fd_grid_hz.is_empty() {
        return Err(AfError::EmptyGrid);
    }
    let dt = reference.sample_period_sec;
    if (received.sample_period_sec - dt).abs() > 1e-12 * dt {
        return Err(AfError::SamplePeriodMismatch);
    }
    let delays = delays_in_samples(tau_grid_sec, dt)?;
    let energy = (received.energy() * reference.energy()).sqrt();
    if energy <= 0.0 {
        return Err(AfError::ZeroEnergy);
    }
    let mut magnitudes = correlate(
        &received.samples,
        &reference.samples,
        &delays,
        fd_grid_hz,
        dt,
        window_spec(reference, window),
    );
    for v in magnitudes.iter_mut().flatten() {
        *v /= energy;
    }
    Ok(AfSurface {
        tau_axis_sec: tau_grid_sec.to_vec(),
        fd_axis_hz: fd_grid_hz.to_vec(),
        magnitudes,
        normalization_energy: energy,
        sample_period_sec: dt,
    })
}
