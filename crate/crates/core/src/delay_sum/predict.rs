//! Analytic side-peak catalog for the delay-and-sum receiver.
//!
//! At a lattice delay `d = l·N/S_sub` every product `s(n)·s*(n−d)` inside a
//! symbol window equals `|s|²·e^{j2πF_i l/S_sub}`, so for constant-envelope
//! symbols the surface along Doppler factors exactly into an array term over
//! the RS symbols and a Dirichlet term over the window:
//!
//! `D_l(f) = |Σ_i e^{j2πF_i l/S_sub} e^{−j2πf i S_sym T}| · |Σ_{n<N'−d} e^{−j2πf nΔt}| / (M·N')`
//!
//! The scheme lattices name the peaks of this profile; any other profile
//! maximum is reported as a sidelobe so the catalog is complete.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::pattern::{PatternConfig, Scheme};

/// Profile maxima below this level are not reported.
pub const PREDICTION_FLOOR: f64 = 1e-3;

/// Receiver whose ambiguity is being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DelaySum,
    Fft2d,
}

/// Why a peak is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeakClass {
    /// The true target itself.
    Main,
    /// Lattice peak `(l·T_s/S_sub, (r_l + k)/(S_sym·T))`.
    Comb { l: usize, k: i64 },
    /// Scheme B odd-`l` lattice peak at `(1/2 + k)/(S_sym·T)`.
    HalfComb { l: usize, k: i64 },
    /// Scheme C peak located from the profile.
    Staggered { l: usize },
    /// Array or window sidelobe of the profile at lattice delay `l`.
    Sidelobe { l: usize },
    /// `(0, ±1/T)` alias of the 2D FFT receiver.
    Exception,
    /// Closed-form 2D FFT peak, delay index `z1`, Doppler index `z2`.
    Grid { z1: i64, z2: i64 },
    /// Numerically located 2D FFT peak at delay index `z1`, Doppler bin `q`.
    Periodogram { z1: i64, q: i64 },
}

/// Exact peak position in units of `T_s` (delay) and `1/T` (Doppler).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub tau_ts: Ratio<i64>,
    pub fd_t: Ratio<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPeak {
    pub tau_sec: f64,
    /// Nominal Doppler of the peak.
    pub fd_hz: f64,
    /// Doppler of the nearest profile maximum (equal to `fd_hz` when the
    /// nominal point is itself the maximum).
    pub fd_peak_hz: f64,
    /// Predicted normalized magnitude.
    pub level: f64,
    pub class: PeakClass,
    pub lattice: Option<LatticePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPrediction {
    pub algorithm: Algorithm,
    /// True target position `(τ*, f_d*)`.
    pub main_tau_sec: f64,
    pub main_fd_hz: f64,
    pub peaks: Vec<PredictedPeak>,
    /// `(τ, f_d)` points that are lattice positions but carry no peak for
    /// this algorithm.
    pub exceptions: Vec<(f64, f64)>,
}

impl PeakPrediction {
    /// Peaks at or above `threshold`.
    pub fn required(&self, threshold: f64) -> impl Iterator<Item = &PredictedPeak> {
        self.peaks.iter().filter(move |p| p.level >= threshold)
    }
}

/// `D_l(f)`: normalized delay-and-sum magnitude at delay `l·N/S_sub`.
pub fn doppler_profile(config: &PatternConfig, l: usize, fd_hz: f64) -> f64 {
    let num = &config.numerology;
    let s = config.s_sub as f64;
    let n_prime = num.n_prime();
    let d = l * num.n_fft / config.s_sub;
    if d >= n_prime {
        return 0.0;
    }
    let block = fd_hz * config.s_sym as f64 * num.t_sec();
    let array: Complex64 = config
        .offsets
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let turns = (f * l) as f64 / s - block * i as f64;
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns.fract())
        })
        .sum();
    let window = dirichlet(n_prime - d, fd_hz * num.sample_period_sec());
    array.norm() * window / (config.m_symbols * n_prime) as f64
}

/// `|Σ_{n<len} e^{−j2πxn}|`.
fn dirichlet(len: usize, x: f64) -> f64 {
    let den = (std::f64::consts::PI * x).sin();
    if den.abs() < 1e-12 {
        len as f64
    } else {
        ((std::f64::consts::PI * len as f64 * x).sin() / den).abs()
    }
}

/// Local maxima `(fd_hz, level)` of the profile over `[lo, hi]`, endpoints included.
fn profile_maxima(config: &PatternConfig, l: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let t = config.numerology.t_sec();
    let step = 1.0 / (128.0 * (config.m_symbols * config.s_sym) as f64 * t);
    let steps = ((hi - lo) / step).ceil().max(1.0) as usize;
    let xs: Vec<f64> = (0..=steps).map(|j| lo + (hi - lo) * j as f64 / steps as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&f| doppler_profile(config, l, f)).collect();
    let mut out = Vec::new();
    for j in 0..ys.len() {
        let left = if j > 0 { ys[j - 1] } else { f64::NEG_INFINITY };
        let right = if j + 1 < ys.len() { ys[j + 1] } else { f64::NEG_INFINITY };
        if ys[j] > left && ys[j] >= right && ys[j] >= PREDICTION_FLOOR {
            out.push((xs[j], ys[j]));
        }
    }
    out
}

/// Lattice Doppler numerators at delay index `l`, in units of `1/(2·S_sub·S_sym·T)`.
fn lattice_residue(config: &PatternConfig, l: usize) -> Option<i64> {
    let s = config.s_sub as i64;
    let l = l as i64;
    if l == 0 || l == s {
        return Some(0);
    }
    match config.scheme {
        Scheme::A => Some(0),
        Scheme::B => Some(if l % 2 == 0 { 0 } else { s }),
        Scheme::C => None,
        Scheme::D => Some(2 * (config.slope_mod() as i64 * l % s)),
    }
}

/// [`predict_side_peaks_over`] on the default Doppler span `[−1/T, 1/T]`.
pub fn predict_side_peaks(config: &PatternConfig, algorithm: Algorithm) -> PeakPrediction {
    let span = 1.0 / config.numerology.t_sec();
    predict_side_peaks_over(config, algorithm, -span, span)
}

/// Side peaks at lattice delays `l·T_s/S_sub`, `0 ≤ l ≤ S_sub`, with Doppler
/// in `[fd_min_hz, fd_max_hz]`.
pub fn predict_side_peaks_over(
    config: &PatternConfig,
    algorithm: Algorithm,
    fd_min_hz: f64,
    fd_max_hz: f64,
) -> PeakPrediction {
    let num = &config.numerology;
    let t = num.t_sec();
    let s = config.s_sub as i64;
    let s_sym = config.s_sym as i64;
    let den = 2 * s * s_sym;
    let half_lobe = 1.0 / (2.0 * (config.m_symbols * config.s_sym) as f64 * t);
    let eps = 1e-9 / t;
    let mut peaks = Vec::new();
    let mut exceptions = Vec::new();

    for l in 0..=config.s_sub {
        let tau_sec = l as f64 * num.t_s_sec() / config.s_sub as f64;
        let tau_ts = Ratio::new(l as i64, s);
        let mut maxima = profile_maxima(config, l, fd_min_hz, fd_max_hz);
        let mut claimed = vec![false; maxima.len()];
        let claim = |f: f64, maxima: &[(f64, f64)], claimed: &mut [bool]| -> Option<f64> {
            let best = maxima
                .iter()
                .enumerate()
                .filter(|(_, m)| (m.0 - f).abs() <= half_lobe)
                .min_by(|a, b| (a.1 .0 - f).abs().total_cmp(&(b.1 .0 - f).abs()))
                .map(|(i, m)| (i, m.0));
            best.map(|(i, fm)| {
                claimed[i] = true;
                fm
            })
        };

        if l == 0 {
            claim(0.0, &maxima, &mut claimed);
        }

        if let Some(residue) = lattice_residue(config, l) {
            let lo = (fd_min_hz * t * den as f64).floor() as i64 - 1;
            let hi = (fd_max_hz * t * den as f64).ceil() as i64 + 1;
            for numer in lo..=hi {
                if (numer - residue).rem_euclid(2 * s) != 0 {
                    continue;
                }
                let fd_t = Ratio::new(numer, den);
                let fd_hz = numer as f64 / den as f64 / t;
                if fd_hz < fd_min_hz - eps || fd_hz > fd_max_hz + eps {
                    continue;
                }
                if l == 0 && numer == 0 {
                    continue;
                }
                let lattice = Some(LatticePoint { tau_ts, fd_t });
                let is_alias = l == 0 && (numer == den || numer == -den);
                if is_alias {
                    match algorithm {
                        Algorithm::DelaySum => exceptions.push((tau_sec, fd_hz)),
                        Algorithm::Fft2d => peaks.push(PredictedPeak {
                            tau_sec,
                            fd_hz,
                            fd_peak_hz: fd_hz,
                            level: 1.0,
                            class: PeakClass::Exception,
                            lattice,
                        }),
                    }
                    continue;
                }
                let level = doppler_profile(config, l, fd_hz);
                if level < PREDICTION_FLOOR {
                    continue;
                }
                let class = match (config.scheme, residue == s && l != 0 && l != config.s_sub) {
                    (Scheme::B, true) => PeakClass::HalfComb { l, k: (numer - s) / (2 * s) },
                    (Scheme::D, _) => PeakClass::Comb {
                        l,
                        k: (numer - 2 * config.slope_mod() as i64 * l as i64) / (2 * s),
                    },
                    _ => PeakClass::Comb { l, k: numer / (2 * s) },
                };
                let fd_peak_hz = claim(fd_hz, &maxima, &mut claimed).unwrap_or(fd_hz);
                peaks.push(PredictedPeak { tau_sec, fd_hz, fd_peak_hz, level, class, lattice });
            }
        }

        for (i, (fd_hz, level)) in maxima.drain(..).enumerate() {
            if claimed[i] {
                continue;
            }
            let class = if config.scheme == Scheme::C && l != 0 && l != config.s_sub {
                PeakClass::Staggered { l }
            } else {
                PeakClass::Sidelobe { l }
            };
            peaks.push(PredictedPeak {
                tau_sec,
                fd_hz,
                fd_peak_hz: fd_hz,
                level,
                class,
                lattice: None,
            });
        }
    }

    peaks.sort_by(|a, b| a.tau_sec.total_cmp(&b.tau_sec).then(a.fd_hz.total_cmp(&b.fd_hz)));
    peaks.dedup_by(|a, b| a.tau_sec == b.tau_sec && (a.fd_hz - b.fd_hz).abs() <= eps);
    PeakPrediction { algorithm, main_tau_sec: 0.0, main_fd_hz: 0.0, peaks, exceptions }
}
