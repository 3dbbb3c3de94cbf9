//! Time-domain synthesis of comb RS frames and a simple point-target channel.
//!
//! Synthesis uses an unnormalized inverse DFT (no `1/N`), so a symbol with
//! `N/S_sub` unit-modulus REs carries energy `N·N/S_sub` over its `N`
//! effective samples.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{PatternConfig, ScramblingSequence};

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("scrambling has {found} symbols, pattern needs {expected}")]
    ScramblingSymbols { expected: usize, found: usize },
    #[error("scrambling vector length {found}, expected {expected}")]
    ScramblingLength { expected: usize, found: usize },
    #[error("symbol index {index} out of range for {m_symbols} symbols")]
    SymbolIndex { index: usize, m_symbols: usize },
    #[error("delay {delay} samples out of range for frame length {len}")]
    DelayOutOfRange { delay: usize, len: usize },
    #[error("noise power must be finite and non-negative, got {0}")]
    NoisePower(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sidecar encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// How a target's Doppler shift is applied to the delayed copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DopplerModel {
    /// Continuous phase ramp `e^{j2π f n Δt}` over the receive sample index.
    Ramp,
    /// Constant phase `e^{j2π f i T S_sym}` per transmitted RS symbol `i`.
    Block,
}

/// A point target on the sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub delay_samples: usize,
    pub doppler_hz: f64,
    pub amplitude: Complex64,
}

impl Target {
    pub fn unit(delay_samples: usize, doppler_hz: f64) -> Self {
        Self { delay_samples, doppler_hz, amplitude: Complex64::new(1.0, 0.0) }
    }
}

/// Baseband samples of `M` CP-added RS symbols with zero-filled gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    pub samples: Vec<Complex64>,
    pub sample_period_sec: f64,
    pub symbol_starts: Vec<usize>,
    pub config: PatternConfig,
}

impl TimeFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x.norm_sqr()).sum()
    }

    /// The `N'` samples of RS symbol `i` at its nominal position.
    pub fn symbol(&self, i: usize) -> &[Complex64] {
        let start = self.symbol_starts[i];
        &self.samples[start..start + self.config.numerology.n_prime()]
    }
}

fn check_scrambling(
    config: &PatternConfig,
    scrambling: &ScramblingSequence,
) -> Result<(), WaveformError> {
    if scrambling.symbol_count() != config.m_symbols {
        return Err(WaveformError::ScramblingSymbols {
            expected: config.m_symbols,
            found: scrambling.symbol_count(),
        });
    }
    if let Some(bad) = (0..config.m_symbols)
        .map(|i| scrambling.symbol(i).map_or(0, <[_]>::len))
        .find(|&len| len != config.comb_len())
    {
        return Err(WaveformError::ScramblingLength { expected: config.comb_len(), found: bad });
    }
    Ok(())
}

fn synthesize(
    config: &PatternConfig,
    symbol_index: usize,
    x: &[Complex64],
    planner: &mut FftPlanner<f64>,
) -> Vec<Complex64> {
    let n = config.numerology.n_fft;
    let n_cp = config.numerology.n_cp;
    let f = config.offsets[symbol_index];
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (kappa, &value) in x.iter().enumerate() {
        spectrum[kappa * config.s_sub + f] = value;
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let mut out = Vec::with_capacity(n + n_cp);
    out.extend_from_slice(&spectrum[n - n_cp..]);
    out.extend_from_slice(&spectrum);
    out
}

/// One CP-added RS symbol: `Z(n) = Σ_κ X_i(κ) e^{j2π(κS_sub + F_i)(n − N_cp)/N}`.
pub fn modulate_symbol(
    config: &PatternConfig,
    symbol_index: usize,
    scrambling: &ScramblingSequence,
) -> Result<Vec<Complex64>, WaveformError> {
    if symbol_index >= config.m_symbols {
        return Err(WaveformError::SymbolIndex { index: symbol_index, m_symbols: config.m_symbols });
    }
    check_scrambling(config, scrambling)?;
    let x = scrambling.symbol(symbol_index).expect("checked symbol count");
    Ok(synthesize(config, symbol_index, x, &mut FftPlanner::new()))
}

/// Places the `M` RS symbols at `i·S_sym·N'`, zero-filling the gaps.
pub fn build_frame(
    config: &PatternConfig,
    scrambling: &ScramblingSequence,
) -> Result<TimeFrame, WaveformError> {
    check_scrambling(config, scrambling)?;
    let n_prime = config.numerology.n_prime();
    let mut samples = vec![Complex64::new(0.0, 0.0); config.frame_len()];
    let mut planner = FftPlanner::new();
    let symbol_starts: Vec<usize> = (0..config.m_symbols).map(|i| config.symbol_start(i)).collect();
    for (i, &start) in symbol_starts.iter().enumerate() {
        let x = scrambling.symbol(i).expect("checked symbol count");
        let sym = synthesize(config, i, x, &mut planner);
        samples[start..start + n_prime].copy_from_slice(&sym);
    }
    Ok(TimeFrame {
        samples,
        sample_period_sec: config.numerology.sample_period_sec(),
        symbol_starts,
        config: config.clone(),
    })
}

/// Sums delayed, Doppler-shifted, scaled copies of `frame` and adds complex
/// white Gaussian noise of power `noise_power` drawn from a seeded ChaCha8
/// stream.
pub fn apply_channel(
    frame: &TimeFrame,
    targets: &[Target],
    noise_power: f64,
    doppler_model: DopplerModel,
    seed: u64,
) -> Result<TimeFrame, WaveformError> {
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(WaveformError::NoisePower(noise_power));
    }
    let len = frame.len();
    let num = &frame.config.numerology;
    let block_len = frame.config.s_sym * num.n_prime();
    let block_phase_step = num.t_sec() * frame.config.s_sym as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for target in targets {
        if target.delay_samples >= len {
            return Err(WaveformError::DelayOutOfRange { delay: target.delay_samples, len });
        }
        if target.doppler_hz.abs() > num.scs_hz / 10.0 {
            warn!(
                "target doppler {} Hz exceeds a tenth of the subcarrier spacing ({} Hz)",
                target.doppler_hz, num.scs_hz
            );
        }
        let tau = target.delay_samples;
        for (n, slot) in out.iter_mut().enumerate().skip(tau) {
            let tx = n - tau;
            let phase = match doppler_model {
                DopplerModel::Ramp => target.doppler_hz * n as f64 * frame.sample_period_sec,
                DopplerModel::Block => target.doppler_hz * (tx / block_len) as f64 * block_phase_step,
            };
            *slot += target.amplitude
                * frame.samples[tx]
                * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
        }
    }
    if noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = (noise_power / 2.0).sqrt();
        for slot in &mut out {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *slot += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(TimeFrame {
        samples: out,
        sample_period_sec: frame.sample_period_sec,
        symbol_starts: frame.symbol_starts.clone(),
        config: frame.config.clone(),
    })
}

/// Description written next to a raw sample dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub sample_format: String,
    pub sample_count: usize,
    pub sample_period_sec: f64,
    pub n_fft: usize,
    pub n_cp: usize,
    pub scs_hz: f64,
    pub symbol_starts: Vec<usize>,
    pub offsets: Vec<usize>,
}

/// Writes `frame` as little-endian interleaved `f64` (re, im) to `bin_path`
/// and a JSON sidecar to `sidecar_path`.
pub fn write_raw(frame: &TimeFrame, bin_path: &Path, sidecar_path: &Path) -> Result<(), WaveformError> {
    let mut bytes = Vec::with_capacity(frame.len() * 16);
    for x in &frame.samples {
        bytes.extend_from_slice(&x.re.to_le_bytes());
        bytes.extend_from_slice(&x.im.to_le_bytes());
    }
    fs::File::create(bin_path)?.write_all(&bytes)?;
    let num = &frame.config.numerology;
    let sidecar = RawSidecar {
        sample_format: "f64le-interleaved-iq".to_string(),
        sample_count: frame.len(),
        sample_period_sec: frame.sample_period_sec,
        n_fft: num.n_fft,
        n_cp: num.n_cp,
        scs_hz: num.scs_hz,
        symbol_starts: frame.symbol_starts.clone(),
        offsets: frame.config.offsets.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(sidecar_path, text)?;
    Ok(())
}

/// Reads samples written by [`write_raw`].
pub fn read_raw(bin_path: &Path) -> Result<Vec<Complex64>, WaveformError> {
    let bytes = fs::read(bin_path)?;
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}
