//! Comb reference-signal patterns.
//!
//! A pattern is a comb of occupied subcarriers (every `s_sub`-th bin,
//! shifted by a per-symbol staggering offset `F_i`) repeated on every
//! `s_sym`-th OFDM symbol. Four staggering schemes are supported:
//!
//! - **A**: constant offset (DMRS/TRS-like).
//! - **B**: two symbols staggered by half a comb (partial PRS).
//! - **C**: 5G PRS order, pairs of half-comb offsets that then sweep the comb.
//! - **D**: linear slope `F_i = p·i mod s_sub` with `gcd(p, s_sub) = 1`.

use std::fmt;

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// OFDM numerology: FFT size, cyclic prefix length and subcarrier spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    /// Samples per effective (CP-free) symbol, `N`.
    pub n_fft: usize,
    /// Cyclic prefix samples, `N_cp`.
    pub n_cp: usize,
    /// Subcarrier spacing in Hz.
    pub scs_hz: f64,
}

impl Numerology {
    pub fn new(n_fft: usize, n_cp: usize, scs_hz: f64) -> Self {
        Self { n_fft, n_cp, scs_hz }
    }

    /// Effective symbol duration `T_s = 1 / scs`.
    pub fn t_s_sec(&self) -> f64 {
        1.0 / self.scs_hz
    }

    pub fn t_cp_sec(&self) -> f64 {
        self.n_cp as f64 / self.n_fft as f64 * self.t_s_sec()
    }

    /// CP-added symbol duration `T = T_s + T_cp`.
    pub fn t_sec(&self) -> f64 {
        self.t_s_sec() + self.t_cp_sec()
    }

    /// Samples per CP-added symbol, `N' = N + N_cp`.
    pub fn n_prime(&self) -> usize {
        self.n_fft + self.n_cp
    }

    /// Sample period `T_s / N` (equal to `T / N'`).
    pub fn sample_period_sec(&self) -> f64 {
        self.t_s_sec() / self.n_fft as f64
    }
}

/// Staggering scheme of the comb offsets across RS symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    A,
    B,
    C,
    D,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
            Scheme::D => "D",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            "C" | "c" => Ok(Scheme::C),
            "D" | "d" => Ok(Scheme::D),
            other => Err(ConfigError::UnknownScheme(other.to_string())),
        }
    }
}

/// A single violated pattern invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("fft size must be positive")]
    ZeroFftSize,
    #[error("cyclic prefix too long: n_cp {n_cp} >= n_fft {n_fft}")]
    CpTooLong { n_cp: usize, n_fft: usize },
    #[error("subcarrier spacing must be positive and finite")]
    InvalidScs,
    #[error("comb size must be at least 2, got {0}")]
    CombTooSmall(usize),
    #[error("symbol spacing must be at least 1")]
    ZeroSymbolSpacing,
    #[error("at least one RS symbol is required")]
    NoSymbols,
    #[error("fft size not divisible by comb: {n_fft} % {s_sub} != 0")]
    FftNotDivisibleByComb { n_fft: usize, s_sub: usize },
    #[error("slope not coprime: gcd({slope}, {s_sub}) = {gcd}")]
    SlopeNotCoprime { slope: i64, s_sub: usize, gcd: i64 },
    #[error("scheme {scheme} requires an even comb size, got {s_sub}")]
    OddComb { scheme: Scheme, s_sub: usize },
    #[error("base offset {base_offset} outside [0, {s_sub})")]
    BaseOffsetOutOfRange { base_offset: usize, s_sub: usize },
    #[error("offset F_{index} = {value} outside [0, {s_sub})")]
    OffsetOutOfRange { index: usize, value: usize, s_sub: usize },
    #[error("offset count {found} does not match m_symbols {expected}")]
    OffsetCountMismatch { expected: usize, found: usize },
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
}

/// Complete description of a comb RS pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub numerology: Numerology,
    /// Comb size `S_sub`.
    pub s_sub: usize,
    /// RS symbol spacing `S_sym`.
    pub s_sym: usize,
    pub scheme: Scheme,
    /// Offset `f` used by schemes A and B.
    pub base_offset: usize,
    /// Slope `p` used by scheme D.
    pub slope: i64,
    /// Number of RS symbols `M` in the coherent processing interval.
    pub m_symbols: usize,
    /// Staggering offsets `F_0 .. F_{M-1}`.
    pub offsets: Vec<usize>,
}

impl PatternConfig {
    /// Builds a pattern whose offsets follow `scheme` and validates it.
    pub fn new(
        numerology: Numerology,
        s_sub: usize,
        s_sym: usize,
        scheme: Scheme,
        base_offset: usize,
        slope: i64,
        m_symbols: usize,
    ) -> Result<Self, Vec<ConfigError>> {
        let offsets = make_offsets(scheme, s_sub, m_symbols, base_offset, slope)
            .map_err(|e| vec![e])?;
        validate_config(Self {
            numerology,
            s_sub,
            s_sym,
            scheme,
            base_offset,
            slope,
            m_symbols,
            offsets,
        })
    }

    /// Same pattern with every offset shifted by `shift` modulo the comb size.
    pub fn with_shifted_offsets(&self, shift: usize) -> Self {
        let mut out = self.clone();
        for f in &mut out.offsets {
            *f = (*f + shift) % self.s_sub;
        }
        out
    }

    /// Occupied subcarriers per RS symbol, `N / S_sub`.
    pub fn comb_len(&self) -> usize {
        self.numerology.n_fft / self.s_sub
    }

    /// Sample index where RS symbol `i` starts in a frame.
    pub fn symbol_start(&self, i: usize) -> usize {
        i * self.s_sym * self.numerology.n_prime()
    }

    /// Frame length with zero-filled gaps between RS symbols.
    pub fn frame_len(&self) -> usize {
        ((self.m_symbols - 1) * self.s_sym + 1) * self.numerology.n_prime()
    }

    /// Slope reduced into `[0, s_sub)`.
    pub fn slope_mod(&self) -> usize {
        self.slope.rem_euclid(self.s_sub as i64) as usize
    }
}

/// Staggering offsets `F_0 .. F_{M-1}` for `scheme`.
///
/// Scheme C follows the PRS pair-then-sweep order (`f, f + s_sub/2` for
/// `f = 0, 1, ..`), cycled with period `s_sub` and truncated when `M` is not a
/// multiple of it. Scheme D uses `F_i = p·i mod s_sub`, which also cycles
/// with period `s_sub`.
pub fn make_offsets(
    scheme: Scheme,
    s_sub: usize,
    m_symbols: usize,
    base_offset: usize,
    slope: i64,
) -> Result<Vec<usize>, ConfigError> {
    if s_sub < 2 {
        return Err(ConfigError::CombTooSmall(s_sub));
    }
    if matches!(scheme, Scheme::A | Scheme::B) && base_offset >= s_sub {
        return Err(ConfigError::BaseOffsetOutOfRange { base_offset, s_sub });
    }
    let offsets = match scheme {
        Scheme::A => vec![base_offset; m_symbols],
        Scheme::B => {
            if !s_sub.is_multiple_of(2) {
                return Err(ConfigError::OddComb { scheme, s_sub });
            }
            (0..m_symbols)
                .map(|i| {
                    if i % 2 == 0 {
                        base_offset
                    } else {
                        (base_offset + s_sub / 2) % s_sub
                    }
                })
                .collect()
        }
        Scheme::C => {
            if !s_sub.is_multiple_of(2) {
                return Err(ConfigError::OddComb { scheme, s_sub });
            }
            let half = s_sub / 2;
            let cycle: Vec<usize> = (0..half).flat_map(|f| [f, f + half]).collect();
            (0..m_symbols).map(|i| cycle[i % s_sub]).collect()
        }
        Scheme::D => {
            let gcd = slope.gcd(&(s_sub as i64));
            if gcd != 1 {
                return Err(ConfigError::SlopeNotCoprime { slope, s_sub, gcd });
            }
            (0..m_symbols)
                .map(|i| (slope * i as i64).rem_euclid(s_sub as i64) as usize)
                .collect()
        }
    };
    Ok(offsets)
}

/// Checks every pattern invariant and returns all violations.
pub fn validate_config(config: PatternConfig) -> Result<PatternConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let num = &config.numerology;
    if num.n_fft == 0 {
        errors.push(ConfigError::ZeroFftSize);
    } else if num.n_cp >= num.n_fft {
        errors.push(ConfigError::CpTooLong { n_cp: num.n_cp, n_fft: num.n_fft });
    }
    if !(num.scs_hz.is_finite() && num.scs_hz > 0.0) {
        errors.push(ConfigError::InvalidScs);
    }
    if config.s_sub < 2 {
        errors.push(ConfigError::CombTooSmall(config.s_sub));
    } else if !num.n_fft.is_multiple_of(config.s_sub) {
        errors.push(ConfigError::FftNotDivisibleByComb { n_fft: num.n_fft, s_sub: config.s_sub });
    }
    if config.s_sym == 0 {
        errors.push(ConfigError::ZeroSymbolSpacing);
    }
    if config.m_symbols == 0 {
        errors.push(ConfigError::NoSymbols);
    }
    if config.s_sub >= 2 {
        match config.scheme {
            Scheme::A | Scheme::B if config.base_offset >= config.s_sub => {
                errors.push(ConfigError::BaseOffsetOutOfRange {
                    base_offset: config.base_offset,
                    s_sub: config.s_sub,
                });
            }
            _ => {}
        }
        if matches!(config.scheme, Scheme::B | Scheme::C) && !config.s_sub.is_multiple_of(2) {
            errors.push(ConfigError::OddComb { scheme: config.scheme, s_sub: config.s_sub });
        }
        if config.scheme == Scheme::D {
            let gcd = config.slope.gcd(&(config.s_sub as i64));
            if gcd != 1 {
                errors.push(ConfigError::SlopeNotCoprime {
                    slope: config.slope,
                    s_sub: config.s_sub,
                    gcd,
                });
            }
        }
    }
    if config.offsets.len() != config.m_symbols {
        errors.push(ConfigError::OffsetCountMismatch {
            expected: config.m_symbols,
            found: config.offsets.len(),
        });
    }
    for (index, &value) in config.offsets.iter().enumerate() {
        if value >= config.s_sub {
            errors.push(ConfigError::OffsetOutOfRange { index, value, s_sub: config.s_sub });
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("Zadoff-Chu length must be odd and positive, got {0}")]
    InvalidLength(usize),
    #[error("root {root} is not coprime to length {length}")]
    RootNotCoprime { root: i64, length: usize },
    #[error("scrambling needs {expected} symbols, got {found}")]
    SymbolCount { expected: usize, found: usize },
    #[error("scrambling vector {index} has length {found}, expected {expected}")]
    VectorLength { index: usize, expected: usize, found: usize },
}

/// `exp(-j·π·phase_num / length)` with the numerator reduced mod `2·length`.
fn chirp_sample(phase_num: i128, length: usize) -> Complex64 {
    let two_l = 2 * length as i128;
    let reduced = phase_num.rem_euclid(two_l) as f64;
    Complex64::from_polar(1.0, -std::f64::consts::PI * reduced / length as f64)
}

/// Odd-length Zadoff-Chu sequence `x(n) = exp(-jπ·u·n(n+1)/L)`.
pub fn zadoff_chu(length: usize, root: i64) -> Result<Vec<Complex64>, SequenceError> {
    if length == 0 || length.is_multiple_of(2) {
        return Err(SequenceError::InvalidLength(length));
    }
    chu_sequence(length, root)
}

/// Zadoff-Chu sequence of any positive length: the `n(n+1)` form for odd
/// lengths and the `n²` form for even lengths. Both are CAZAC whenever the
/// root is coprime to the length.
pub fn chu_sequence(length: usize, root: i64) -> Result<Vec<Complex64>, SequenceError> {
    if length == 0 {
        return Err(SequenceError::InvalidLength(length));
    }
    if root.gcd(&(length as i64)) != 1 {
        return Err(SequenceError::RootNotCoprime { root, length });
    }
    let u = root as i128;
    let odd = (length % 2) as i128;
    Ok((0..length as i128)
        .map(|n| chirp_sample(u * n * (n + odd), length))
        .collect())
}

/// Frequency-domain RE scrambling, one unit-modulus vector per RS symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ScramblingSequence {
    per_symbol: Vec<Vec<Complex64>>,
}

impl ScramblingSequence {
    /// Zadoff-Chu scrambling of length `N / S_sub`.
    ///
    /// With `independent_roots` each symbol takes the next root coprime to
    /// the length (cyclically, starting from `root`); otherwise every
    /// symbol reuses `root`.
    pub fn zadoff_chu(
        config: &PatternConfig,
        root: i64,
        independent_roots: bool,
    ) -> Result<Self, SequenceError> {
        let len = config.comb_len();
        let base = chu_sequence(len, root)?;
        if !independent_roots {
            return Ok(Self { per_symbol: vec![base; config.m_symbols] });
        }
        let coprime: Vec<i64> = (1..len.max(2) as i64)
            .filter(|u| u.gcd(&(len as i64)) == 1)
            .collect();
        let start = root.rem_euclid(len.max(1) as i64);
        let first = coprime.iter().position(|&u| u == start).unwrap_or(0);
        let per_symbol = (0..config.m_symbols)
            .map(|i| chu_sequence(len, coprime[(first + i) % coprime.len()]))
            .collect::<Result<_, _>>()?;
        Ok(Self { per_symbol })
    }

    /// All-ones scrambling (no scrambling).
    pub fn ones(config: &PatternConfig) -> Self {
        Self {
            per_symbol: vec![vec![Complex64::new(1.0, 0.0); config.comb_len()]; config.m_symbols],
        }
    }

    pub fn from_vectors(
        config: &PatternConfig,
        per_symbol: Vec<Vec<Complex64>>,
    ) -> Result<Self, SequenceError> {
        if per_symbol.len() != config.m_symbols {
            return Err(SequenceError::SymbolCount {
                expected: config.m_symbols,
                found: per_symbol.len(),
            });
        }
        for (index, v) in per_symbol.iter().enumerate() {
            if v.len() != config.comb_len() {
                return Err(SequenceError::VectorLength {
                    index,
                    expected: config.comb_len(),
                    found: v.len(),
                });
            }
        }
        Ok(Self { per_symbol })
    }

    /// Scrambling of symbol 0.
    pub fn values(&self) -> &[Complex64] {
        &self.per_symbol[0]
    }

    /// Scrambling `X_i` of RS symbol `i`.
    pub fn symbol(&self, i: usize) -> Option<&[Complex64]> {
        self.per_symbol.get(i).map(Vec::as_slice)
    }

    pub fn symbol_count(&self) -> usize {
        self.per_symbol.len()
    }

    pub fn conj(&self) -> Self {
        Self {
            per_symbol: self
                .per_symbol
                .iter()
                .map(|v| v.iter().map(|x| x.conj()).collect())
                .collect(),
        }
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.per_symbol
            .iter()
            .flatten()
            .all(|x| (x.norm() - 1.0).abs() <= tol)
    }
}
