//! Post-FFT receiver with an extended guard interval and the 2D-FFT
//! periodogram.
//!
//! Discarding `N_cp + l·N/S_sub` samples instead of `N_cp` leaves
//! `(S_sub − l)·N/S_sub` samples that still hold the whole comb, because each
//! `N/S_sub` subset repeats with a known phase. A shorter DFT over them,
//! after removing the offset's phase ramp, recovers every comb RE scaled by
//! `S_sub − l`, so echoes up to `min(N_cp + l·N/S_sub, N)` samples stay free
//! of inter-symbol interference at the cost of `l/S_sub` of the energy.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay_sum::{Algorithm, LatticePoint, PeakClass, PeakGrid, PeakPrediction, PredictedPeak};
use crate::pattern::{PatternConfig, ScramblingSequence, Scheme};
use crate::waveform::{Target, TimeFrame};

/// Magnitude of the Doppler-axis sum, relative to `M`, above which a
/// numerically located scheme B/C peak is reported.
pub const NUMERIC_PEAK_FRACTION: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PostFftError {
    #[error("guard extension l = {l} outside [0, {s_sub})")]
    ExtensionOutOfRange { l: usize, s_sub: usize },
    #[error("expected {expected} samples, got {found}")]
    Length { expected: usize, found: usize },
    #[error("offset {offset} outside [0, {s_sub})")]
    Offset { offset: usize, s_sub: usize },
    #[error("grid has {found} symbols, expected {expected}")]
    SymbolCount { expected: usize, found: usize },
    #[error("scrambling is not unit modulus")]
    ScramblingNotUnit,
    #[error("map dimensions must be nonzero")]
    EmptyMap,
}

/// Guard-interval extension `l` together with the numerology it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiSetting {
    pub l: usize,
    pub n_fft: usize,
    pub n_cp: usize,
    pub s_sub: usize,
    pub t_s_sec: f64,
}

impl GiSetting {
    pub fn new(config: &PatternConfig, l: usize) -> Result<Self, PostFftError> {
        if l >= config.s_sub {
            return Err(PostFftError::ExtensionOutOfRange { l, s_sub: config.s_sub });
        }
        Ok(Self {
            l,
            n_fft: config.numerology.n_fft,
            n_cp: config.numerology.n_cp,
            s_sub: config.s_sub,
            t_s_sec: config.numerology.t_s_sec(),
        })
    }

    /// `N / S_sub`.
    pub fn subset_len(&self) -> usize {
        self.n_fft / self.s_sub
    }

    /// Samples dropped from the start of each CP-added symbol.
    pub fn dropped_samples(&self) -> usize {
        self.n_cp + self.l * self.subset_len()
    }

    /// Samples kept, `(S_sub − l)·N/S_sub`.
    pub fn kept_samples(&self) -> usize {
        (self.s_sub - self.l) * self.subset_len()
    }

    /// `min(N_cp + l·N/S_sub, N)` in samples.
    pub fn isi_free_delay_samples(&self) -> usize {
        self.dropped_samples().min(self.n_fft)
    }

    /// `min(T_cp + l·T_s/S_sub, T_s)`.
    pub fn isi_free_delay_sec(&self) -> f64 {
        self.isi_free_delay_samples() as f64 * self.t_s_sec / self.n_fft as f64
    }

    /// `(S_sub − l)/S_sub`.
    pub fn retained_energy_fraction(&self) -> f64 {
        (self.s_sub - self.l) as f64 / self.s_sub as f64
    }
}

fn expect_len(found: usize, expected: usize) -> Result<(), PostFftError> {
    if found == expected {
        Ok(())
    } else {
        Err(PostFftError::Length { expected, found })
    }
}

/// Drops the first `N_cp + l·N/S_sub` samples of one CP-added symbol.
pub fn remove_extended_gi(
    symbol_samples: &[Complex64],
    setting: &GiSetting,
) -> Result<Vec<Complex64>, PostFftError> {
    expect_len(symbol_samples.len(), setting.n_fft + setting.n_cp)?;
    Ok(symbol_samples[setting.dropped_samples()..].to_vec())
}

/// `G'(m) = G_l(m)·e^{−j2π F_i (N·l/S_sub + m)/N}`.
pub fn derotate_phase(
    g_l: &[Complex64],
    f_offset: usize,
    setting: &GiSetting,
) -> Result<Vec<Complex64>, PostFftError> {
    expect_len(g_l.len(), setting.kept_samples())?;
    if f_offset >= setting.s_sub {
        return Err(PostFftError::Offset { offset: f_offset, s_sub: setting.s_sub });
    }
    let n = setting.n_fft;
    let start = setting.l * setting.subset_len();
    Ok(g_l
        .iter()
        .enumerate()
        .map(|(m, &g)| {
            let k = (f_offset * (start + m)) % n;
            g * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64)
        })
        .collect())
}

/// Forward DFT of length `(S_sub − l)·N/S_sub`, scaled by `S_sub/N`.
pub fn partial_fft(g_prime: &[Complex64], setting: &GiSetting) -> Result<Vec<Complex64>, PostFftError> {
    let len = setting.kept_samples();
    expect_len(g_prime.len(), len)?;
    let mut buf = g_prime.to_vec();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let scale = 1.0 / setting.subset_len() as f64;
    for b in &mut buf {
        *b *= scale;
    }
    Ok(buf)
}

/// `X'_i(κ'·S_sub/(S_sub − l) + F_i) = B(κ')` for `κ' = (S_sub − l)·w`, zero elsewhere.
pub fn reassemble(
    b: &[Complex64],
    f_offset: usize,
    setting: &GiSetting,
) -> Result<Vec<Complex64>, PostFftError> {
    expect_len(b.len(), setting.kept_samples())?;
    if f_offset >= setting.s_sub {
        return Err(PostFftError::Offset { offset: f_offset, s_sub: setting.s_sub });
    }
    let stride = setting.s_sub - setting.l;
    let mut out = vec![Complex64::new(0.0, 0.0); setting.n_fft];
    for w in 0..setting.subset_len() {
        out[w * setting.s_sub + f_offset] = b[w * stride];
    }
    Ok(out)
}

/// Descrambled post-FFT symbols, `M` rows of `N` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ReassembledGrid {
    pub rows: Vec<Vec<Complex64>>,
    pub s_sub: usize,
    pub s_sym: usize,
    pub offsets: Vec<usize>,
}

impl ReassembledGrid {
    pub fn m_symbols(&self) -> usize {
        self.rows.len()
    }

    pub fn n_fft(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Comb bins `κ·S_sub + F_i` of symbol `i`.
    pub fn comb_bins(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let f = self.offsets[i];
        (0..self.n_fft() / self.s_sub).map(move |k| k * self.s_sub + f)
    }
}

/// Multiplies each reassembled symbol by the conjugate scrambling on its comb bins.
pub fn descramble(
    config: &PatternConfig,
    x_prime_stack: &[Vec<Complex64>],
    scrambling: &ScramblingSequence,
) -> Result<ReassembledGrid, PostFftError> {
    if x_prime_stack.len() != config.m_symbols || scrambling.symbol_count() != config.m_symbols {
        return Err(PostFftError::SymbolCount {
            expected: config.m_symbols,
            found: x_prime_stack.len().min(scrambling.symbol_count()),
        });
    }
    if !scrambling.is_unit_modulus(1e-9) {
        return Err(PostFftError::ScramblingNotUnit);
    }
    let n = config.numerology.n_fft;
    let rows = x_prime_stack
        .iter()
        .enumerate()
        .map(|(i, xp)| {
            expect_len(xp.len(), n)?;
            let x = scrambling.symbol(i).expect("checked symbol count");
            let f = config.offsets[i];
            let mut row = vec![Complex64::new(0.0, 0.0); n];
            for (k, xk) in x.iter().enumerate() {
                let bin = k * config.s_sub + f;
                row[bin] = xp[bin] * xk.conj();
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReassembledGrid {
        rows,
        s_sub: config.s_sub,
        s_sym: config.s_sym,
        offsets: config.offsets.clone(),
    })
}

/// GI removal, derotation, partial FFT and reassembly of every RS symbol in
/// `received`, then descrambling.
pub fn receive(
    received: &TimeFrame,
    setting: &GiSetting,
    scrambling: &ScramblingSequence,
) -> Result<ReassembledGrid, PostFftError> {
    let config = &received.config;
    let stack = (0..config.m_symbols)
        .map(|i| {
            let f = config.offsets[i];
            let g = remove_extended_gi(received.symbol(i), setting)?;
            let gp = derotate_phase(&g, f, setting)?;
            let b = partial_fft(&gp, setting)?;
            reassemble(&b, f, setting)
        })
        .collect::<Result<Vec<_>, _>>()?;
    descramble(config, &stack, scrambling)
}

/// Periodogram `P(g, q)` with its axis maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDopplerMap {
    /// `values[g][q]`, `g < N`, `q < M`.
    pub values: Vec<Vec<f64>>,
    pub t_s_sec: f64,
    pub t_sec: f64,
    pub s_sym: usize,
}

impl RangeDopplerMap {
    pub fn n_delay(&self) -> usize {
        self.values.len()
    }

    pub fn n_doppler(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// `q` wrapped to the signed range `[−⌊M/2⌋, ⌈M/2⌉ − 1]`.
    pub fn signed_bin(&self, q: usize) -> i64 {
        let m = self.n_doppler() as i64;
        let q = q as i64;
        if q > (m - 1) / 2 {
            q - m
        } else {
            q
        }
    }

    /// Bin index for a signed Doppler bin.
    pub fn bin_index(&self, q: i64) -> usize {
        q.rem_euclid(self.n_doppler() as i64) as usize
    }

    pub fn tau_sec(&self, g: usize) -> f64 {
        g as f64 * self.t_s_sec / self.n_delay() as f64
    }

    /// `q/(M·T)` on the signed range.
    pub fn fd_hz(&self, q: usize) -> f64 {
        self.signed_bin(q) as f64 / (self.n_doppler() as f64 * self.t_sec)
    }

    /// `q/(M·S_sym·T)`, the map spanning the physical symbol spacing.
    pub fn fd_physical_hz(&self, q: usize) -> f64 {
        self.fd_hz(q) / self.s_sym as f64
    }

    pub fn tau_axis_sec(&self) -> Vec<f64> {
        (0..self.n_delay()).map(|g| self.tau_sec(g)).collect()
    }

    /// Doppler axis in bin order `q = 0..M`.
    pub fn fd_axis_hz(&self) -> Vec<f64> {
        (0..self.n_doppler()).map(|q| self.fd_hz(q)).collect()
    }

    pub fn fd_physical_axis_hz(&self) -> Vec<f64> {
        (0..self.n_doppler()).map(|q| self.fd_physical_hz(q)).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Largest cell, first occurrence in `g`-major order.
    pub fn argmax(&self) -> (usize, usize) {
        self.argmax_within(0..=self.n_delay() - 1, None)
    }

    /// Largest cell with `g` in `g_range` and, if given, signed bin in `q_range`.
    pub fn argmax_within(
        &self,
        g_range: RangeInclusive<usize>,
        q_range: Option<RangeInclusive<i64>>,
    ) -> (usize, usize) {
        let mut best = (usize::MAX, usize::MAX, f64::NEG_INFINITY);
        for g in g_range.filter(|&g| g < self.n_delay()) {
            for q in 0..self.n_doppler() {
                if let Some(r) = &q_range {
                    if !r.contains(&self.signed_bin(q)) {
                        continue;
                    }
                }
                if self.values[g][q] > best.2 {
                    best = (g, q, self.values[g][q]);
                }
            }
        }
        (best.0, best.1)
    }

    /// Amplitude grid `sqrt(P/P_max)` with both axes periodic; Doppler in the
    /// primary `q/(M·T)` map.
    pub fn peak_grid(&self) -> PeakGrid {
        let peak = self.max();
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        PeakGrid {
            tau_axis_sec: self.tau_axis_sec(),
            fd_axis_hz: (0..self.n_doppler())
                .map(|q| q as f64 / (self.n_doppler() as f64 * self.t_sec))
                .collect(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| (v * scale).sqrt()).collect())
                .collect(),
            tau_period_sec: Some(self.t_s_sec),
            fd_period_hz: Some(1.0 / self.t_sec),
        }
    }
}

/// `P(g, q) = |Σ_κ (Σ_i X_Ri(κ) e^{−j2π q i S_sym/M}) e^{+j2π g κ/N}|²`.
///
/// The delay transform is an unnormalized inverse DFT so that an echo of
/// `N_τ` samples peaks at `g = N_τ`.
pub fn rd_map(
    grid: &ReassembledGrid,
    t_s_sec: f64,
    t_sec: f64,
) -> Result<RangeDopplerMap, PostFftError> {
    let m = grid.m_symbols();
    let n = grid.n_fft();
    if m == 0 || n == 0 {
        return Err(PostFftError::EmptyMap);
    }
    if let Some(bad) = grid.rows.iter().find(|r| r.len() != n) {
        return Err(PostFftError::Length { expected: n, found: bad.len() });
    }
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|q| {
            let mut line: Vec<Complex64> = (0..n)
                .map(|k| {
                    grid.rows
                        .iter()
                        .enumerate()
                        .map(|(i, row)| {
                            let turns = ((q * i * grid.s_sym) % m) as f64 / m as f64;
                            row[k] * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * turns)
                        })
                        .sum()
                })
                .collect();
            ifft.process(&mut line);
            line.iter().map(|v| v.norm_sqr()).collect()
        })
        .collect();
    let values = (0..n).map(|g| columns.iter().map(|col| col[g]).collect()).collect();
    Ok(RangeDopplerMap { values, t_s_sec, t_sec, s_sym: grid.s_sym })
}

/// `|Σ_i e^{j2π f* i T S_sym} e^{−j2π q i S_sym/M} e^{j2π z1 F_i/S_sub}| / M`.
pub fn doppler_array_level(config: &PatternConfig, doppler_hz: f64, z1: i64, q: f64) -> f64 {
    let m = config.m_symbols as f64;
    let s_sym = config.s_sym as f64;
    let t = config.numerology.t_sec();
    let sum: Complex64 = config
        .offsets
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let i = i as f64;
            let turns = doppler_hz * i * t * s_sym - q * i * s_sym / m
                + (z1 * f as i64).rem_euclid(config.s_sub as i64) as f64 / config.s_sub as f64;
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns.fract())
        })
        .sum();
    sum.norm() / m
}

/// Predicted periodogram peaks for a single target.
///
/// Delay peaks repeat at `g = N_τ + z1·N/S_sub`. For schemes A and D the
/// Doppler bins follow `q/(M·T) = f* − z2/(S_sym·T) + z1·p/(S_sub·S_sym·T)`
/// (with `p = 0` for scheme A); for B and C each delay row's Doppler sum is
/// evaluated on the bins and its circular maxima at or above
/// [`NUMERIC_PEAK_FRACTION`] are kept.
pub fn predict_2dfft_peaks(config: &PatternConfig, setting: &GiSetting, target: &Target) -> PeakPrediction {
    let n = config.numerology.n_fft;
    let m = config.m_symbols;
    let s = config.s_sub;
    let t = config.numerology.t_sec();
    let p_sub = n / s;
    let q_true = target.doppler_hz * m as f64 * t;
    let signed = |q: i64| {
        let q = q.rem_euclid(m as i64);
        if q > (m as i64 - 1) / 2 {
            q - m as i64
        } else {
            q
        }
    };
    let q_main = signed(q_true.round() as i64);
    let g_main = target.delay_samples % n;

    let mut peaks: Vec<PredictedPeak> = Vec::new();
    let push = |g: usize, q: i64, level: f64, class: PeakClass, peaks: &mut Vec<PredictedPeak>| {
        if (g == g_main && q == q_main) || peaks.iter().any(|p| p.lattice.is_some_and(|lp| {
            lp.tau_ts == Ratio::new(g as i64, n as i64) && lp.fd_t == Ratio::new(q, m as i64)
        })) {
            return;
        }
        let fd_hz = q as f64 / (m as f64 * t);
        peaks.push(PredictedPeak {
            tau_sec: g as f64 * setting.t_s_sec / n as f64,
            fd_hz,
            fd_peak_hz: fd_hz,
            level,
            class,
            lattice: Some(LatticePoint {
                tau_ts: Ratio::new(g as i64, n as i64),
                fd_t: Ratio::new(q, m as i64),
            }),
        });
    };

    for z1 in 0..s as i64 {
        let g = (g_main + z1 as usize * p_sub) % n;
        match config.scheme {
            Scheme::A | Scheme::D => {
                let p = if config.scheme == Scheme::D { config.slope_mod() as f64 } else { 0.0 };
                for z2 in 0..config.s_sym as i64 {
                    let q_exact = q_true
                        + m as f64 * z1 as f64 * p / (s * config.s_sym) as f64
                        - z2 as f64 * m as f64 / config.s_sym as f64;
                    let q = q_exact.round();
                    let level = doppler_array_level(config, target.doppler_hz, z1, q);
                    push(g, signed(q as i64), level, PeakClass::Grid { z1, z2 }, &mut peaks);
                }
            }
            Scheme::B | Scheme::C => {
                let levels: Vec<f64> = (0..m)
                    .map(|q| doppler_array_level(config, target.doppler_hz, z1, q as f64))
                    .collect();
                for q in 0..m {
                    let left = levels[(q + m - 1) % m];
                    let right = levels[(q + 1) % m];
                    let is_max = m == 1 || (levels[q] > left && levels[q] >= right);
                    if is_max && levels[q] >= NUMERIC_PEAK_FRACTION - 1e-9 {
                        let sq = signed(q as i64);
                        push(g, sq, levels[q], PeakClass::Periodogram { z1, q: sq }, &mut peaks);
                    }
                }
            }
        }
    }
    peaks.sort_by(|a, b| a.tau_sec.total_cmp(&b.tau_sec).then(a.fd_hz.total_cmp(&b.fd_hz)));
    PeakPrediction {
        algorithm: Algorithm::Fft2d,
        main_tau_sec: g_main as f64 * setting.t_s_sec / n as f64,
        main_fd_hz: q_main as f64 / (m as f64 * t),
        peaks,
        exceptions: Vec::new(),
    }
}

/// Noiseless descrambled grid for one block-Doppler target inside the
/// ISI-free bound: `(S_sub − l)·a·e^{j2π f* i S_sym T}·e^{−j2π k N_τ/N}` on
/// every comb bin `k`.
pub fn expected_grid(config: &PatternConfig, setting: &GiSetting, target: &Target) -> ReassembledGrid {
    let n = config.numerology.n_fft;
    let t = config.numerology.t_sec();
    let gain = (config.s_sub - setting.l) as f64;
    let rows = (0..config.m_symbols)
        .map(|i| {
            let doppler = Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * (target.doppler_hz * (i * config.s_sym) as f64 * t).fract(),
            );
            let mut row = vec![Complex64::new(0.0, 0.0); n];
            for w in 0..n / config.s_sub {
                let k = w * config.s_sub + config.offsets[i];
                let turns = ((k * target.delay_samples) % n) as f64 / n as f64;
                row[k] = target.amplitude
                    * gain
                    * doppler
                    * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * turns);
            }
            row
        })
        .collect();
    ReassembledGrid {
        rows,
        s_sub: config.s_sub,
        s_sym: config.s_sym,
        offsets: config.offsets.clone(),
    }
}

/// `max|a − b| / max|b|` over all cells.
pub fn relative_residual(measured: &ReassembledGrid, reference: &ReassembledGrid) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (ra, rb) in measured.rows.iter().zip(&reference.rows) {
        for (a, b) in ra.iter().zip(rb) {
            diff = diff.max((a - b).norm());
            scale = scale.max(b.norm());
        }
    }
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Energy kept after extended-GI removal over the energy after plain CP
/// removal, summed over all RS symbols of `frame`.
pub fn measured_retained_energy(frame: &TimeFrame, setting: &GiSetting) -> f64 {
    let (mut kept, mut full) = (0.0, 0.0);
    for i in 0..frame.config.m_symbols {
        let sym = frame.symbol(i);
        kept += sym[setting.dropped_samples()..].iter().map(|v| v.norm_sqr()).sum::<f64>();
        full += sym[setting.n_cp..].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    if full > 0.0 {
        kept / full
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Numerology;
    use crate::waveform::{apply_channel, build_frame, DopplerModel};
    use std::f64::consts::PI;

    fn cfg(scheme: Scheme, n_cp: usize, s_sym: usize, m: usize) -> PatternConfig {
        PatternConfig::new(Numerology::new(64, n_cp, 15e3), 4, s_sym, scheme, 0, 1, m).unwrap()
    }

    fn unit_ones(c: &PatternConfig) -> ScramblingSequence {
        ScramblingSequence::ones(c)
    }

    #[test]
    fn gi_setting_values() {
        let c = PatternConfig::new(Numerology::new(2048, 144, 15e3), 4, 1, Scheme::D, 0, 1, 4).unwrap();
        let g = GiSetting::new(&c, 3).unwrap();
        assert_eq!(g.isi_free_delay_samples(), 1680);
        assert_eq!(g.kept_samples(), 512);
        assert!((g.retained_energy_fraction() - 0.25).abs() < 1e-15);
        assert!(matches!(GiSetting::new(&c, 4), Err(PostFftError::ExtensionOutOfRange { .. })));
        let c0 = cfg(Scheme::A, 4, 1, 1);
        assert_eq!(GiSetting::new(&c0, 3).unwrap().isi_free_delay_samples(), 52);
        let big = PatternConfig::new(Numerology::new(64, 40, 15e3), 4, 1, Scheme::A, 0, 1, 1).unwrap();
        assert_eq!(GiSetting::new(&big, 3).unwrap().isi_free_delay_samples(), 64);
    }

    #[test]
    fn gi_lengths() {
        let c = cfg(Scheme::A, 4, 1, 1);
        let sym = vec![Complex64::new(1.0, 0.0); 68];
        assert_eq!(remove_extended_gi(&sym, &GiSetting::new(&c, 0).unwrap()).unwrap().len(), 64);
        assert_eq!(remove_extended_gi(&sym, &GiSetting::new(&c, 3).unwrap()).unwrap().len(), 16);
        assert!(remove_extended_gi(&sym[..60], &GiSetting::new(&c, 0).unwrap()).is_err());
    }

    #[test]
    fn derotation_examples() {
        let c = cfg(Scheme::A, 0, 1, 1);
        let s1 = GiSetting::new(&c, 1).unwrap();
        let g: Vec<Complex64> = (0..48).map(|m| Complex64::new(m as f64, 1.0)).collect();
        assert_eq!(derotate_phase(&g, 0, &s1).unwrap(), g);
        let out = derotate_phase(&g, 1, &s1).unwrap();
        assert!((out[0] - g[0] * Complex64::new(0.0, -1.0)).norm() < 1e-12);
        for (a, b) in out.iter().zip(&g) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_fft_l0_is_scaled_full_transform() {
        let c = cfg(Scheme::A, 0, 1, 1);
        let s0 = GiSetting::new(&c, 0).unwrap();
        let x: Vec<Complex64> = (0..64).map(|m| Complex64::from_polar(1.0, 0.3 * m as f64)).collect();
        let b = partial_fft(&x, &s0).unwrap();
        for k in [0usize, 5, 63] {
            let direct: Complex64 = x
                .iter()
                .enumerate()
                .map(|(m, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * m) as f64 / 64.0))
                .sum();
            assert!((b[k] - direct / 16.0).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_bins_and_factor() {
        for scheme in [Scheme::A, Scheme::D] {
            let c = cfg(scheme, 4, 1, 4);
            let x = ScramblingSequence::zadoff_chu(&c, 1, false).unwrap();
            let frame = build_frame(&c, &x).unwrap();
            for l in 0..4 {
                let st = GiSetting::new(&c, l).unwrap();
                for i in 0..4 {
                    let f = c.offsets[i];
                    let g = remove_extended_gi(frame.symbol(i), &st).unwrap();
                    let b = partial_fft(&derotate_phase(&g, f, &st).unwrap(), &st).unwrap();
                    for (k, v) in b.iter().enumerate() {
                        if k % (4 - l) == 0 {
                            let expect = x.symbol(i).unwrap()[k / (4 - l)] * (4 - l) as f64;
                            assert!((v - expect).norm() < 1e-9);
                        } else {
                            assert!(v.norm() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reassemble_l0_gives_four_times_scrambling() {
        let c = cfg(Scheme::C, 0, 1, 4);
        let x = ScramblingSequence::zadoff_chu(&c, 1, false).unwrap();
        let frame = build_frame(&c, &x).unwrap();
        let st = GiSetting::new(&c, 0).unwrap();
        for i in 0..4 {
            let f = c.offsets[i];
            let g = remove_extended_gi(frame.symbol(i), &st).unwrap();
            let b = partial_fft(&derotate_phase(&g, f, &st).unwrap(), &st).unwrap();
            let xp = reassemble(&b, f, &st).unwrap();
            for (bin, v) in xp.iter().enumerate() {
                if bin % 4 == f {
                    assert!((v - x.symbol(i).unwrap()[bin / 4] * 4.0).norm() < 1e-9);
                } else {
                    assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn descrambled_magnitudes_and_phase_slope() {
        let c = cfg(Scheme::D, 4, 1, 4);
        let x = ScramblingSequence::zadoff_chu(&c, 1, true).unwrap();
        let frame = build_frame(&c, &x).unwrap();
        let rx = apply_channel(&frame, &[Target::unit(7, 0.0)], 0.0, DopplerModel::Block, 0).unwrap();
        let st = GiSetting::new(&c, 1).unwrap();
        let grid = receive(&rx, &st, &x).unwrap();
        for i in 0..4 {
            let bins: Vec<usize> = grid.comb_bins(i).collect();
            for &k in &bins {
                assert!((grid.rows[i][k].norm() - 3.0).abs() < 1e-9);
            }
            for w in bins.windows(2) {
                let ratio = grid.rows[i][w[1]] / grid.rows[i][w[0]];
                let expect = Complex64::from_polar(1.0, -2.0 * PI * 7.0 * 4.0 / 64.0);
                assert!((ratio - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_grid_and_energy() {
        let c = cfg(Scheme::B, 4, 2, 4);
        let x = ScramblingSequence::zadoff_chu(&c, 1, false).unwrap();
        let frame = build_frame(&c, &x).unwrap();
        let tgt = Target { delay_samples: 20, doppler_hz: 900.0, amplitude: Complex64::new(0.3, -0.4) };
        let rx = apply_channel(&frame, &[tgt], 0.0, DopplerModel::Block, 0).unwrap();
        let st = GiSetting::new(&c, 1).unwrap();
        let r = relative_residual(&receive(&rx, &st, &x).unwrap(), &expected_grid(&c, &st, &tgt));
        assert!(r < 1e-9, "{r}");
        for l in 0..4 {
            let st = GiSetting::new(&c, l).unwrap();
            assert!((measured_retained_energy(&frame, &st) - st.retained_energy_fraction()).abs() < 1e-12);
        }
    }

    #[test]
    fn rd_map_argmax_and_delay_repeats() {
        let c = cfg(Scheme::A, 16, 1, 8);
        let x = unit_ones(&c);
        let frame = build_frame(&c, &x).unwrap();
        let st = GiSetting::new(&c, 0).unwrap();
        let grid = receive(&frame, &st, &x).unwrap();
        let map = rd_map(&grid, c.numerology.t_s_sec(), c.numerology.t_sec()).unwrap();
        assert_eq!(map.argmax(), (0, 0));
        assert_eq!((map.n_delay(), map.n_doppler()), (64, 8));

        let rx = apply_channel(&frame, &[Target::unit(5, 0.0)], 0.0, DopplerModel::Block, 0).unwrap();
        let map = rd_map(&receive(&rx, &st, &x).unwrap(), c.numerology.t_s_sec(), c.numerology.t_sec()).unwrap();
        assert_eq!(map.argmax(), (5, 0));
        for g in [21, 37, 53] {
            assert!((map.values[g][0] - map.values[5][0]).abs() < 1e-6 * map.values[5][0]);
        }
    }

    #[test]
    fn signed_bins() {
        let map = RangeDopplerMap { values: vec![vec![0.0; 8]; 2], t_s_sec: 1.0, t_sec: 1.0, s_sym: 2 };
        let signed: Vec<i64> = (0..8).map(|q| map.signed_bin(q)).collect();
        assert_eq!(signed, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(map.bin_index(-1), 7);
        assert!((map.fd_physical_hz(1) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn scheme_d_prediction_example() {
        let c = cfg(Scheme::D, 16, 1, 8);
        let st = GiSetting::new(&c, 0).unwrap();
        let pred = predict_2dfft_peaks(&c, &st, &Target::unit(0, 0.0));
        let t = c.numerology.t_sec();
        let hit = pred
            .peaks
            .iter()
            .find(|p| p.class == PeakClass::Grid { z1: 1, z2: 0 })
            .unwrap();
        assert!((hit.fd_hz - 0.25 / t).abs() < 1e-9);
        assert_eq!(hit.lattice.unwrap().fd_t, Ratio::new(2, 8));

        let pred = predict_2dfft_peaks(&c, &st, &Target::unit(5, 0.0));
        let mut gs: Vec<i64> = pred.peaks.iter().map(|p| *p.lattice.unwrap().tau_ts.numer() * 64 / *p.lattice.unwrap().tau_ts.denom()).collect();
        gs.push(5);
        gs.sort();
        gs.dedup();
        assert_eq!(gs, vec![5, 21, 37, 53]);
    }

    #[test]
    fn scheme_a_prediction_repeats_in_delay_only() {
        let c = cfg(Scheme::A, 16, 1, 8);
        let st = GiSetting::new(&c, 0).unwrap();
        let pred = predict_2dfft_peaks(&c, &st, &Target::unit(3, 0.0));
        assert_eq!(pred.peaks.len(), 3);
        assert!(pred.peaks.iter().all(|p| p.fd_hz == 0.0 && (p.level - 1.0).abs() < 1e-12));
    }
}
