//! Designated side-peak-free delay–Doppler regions.
//!
//! Bounds are exact rationals in units of `T_s` (delay) and `1/T` (Doppler)
//! so soundness against the peak lattice can be checked without rounding.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::predict::{LatticePoint, PeakPrediction, PredictedPeak};
use crate::pattern::{PatternConfig, Scheme};

type Q = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegionError {
    #[error("region {choice} is not available for scheme {scheme}")]
    SchemeMismatch { choice: String, scheme: Scheme },
    #[error("partial region needs 2 <= l <= {max}, got {l}")]
    PartialIndex { l: usize, max: usize },
    #[error("partial region needs slope congruent to ±1 mod {s_sub}, got {slope}")]
    PartialSlope { slope: i64, s_sub: usize },
}

/// Which of the two printed two-piece layouts to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialVariant {
    /// Wide Doppler on `(0, T_s/S)`, narrow on `[T_s/S, l·T_s/S)`.
    First,
    /// Wide Doppler on `[(l−1)·T_s/S, l·T_s/S)`, narrow on `(0, (l−1)·T_s/S)`.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionChoice {
    /// `τ ∈ (0, T_s/S)`, Doppler up to the sampling limit (`S_sym = 1`) or
    /// `±1/(2·S_sym·T)`.
    Fractional,
    /// `τ ∈ (0, T_s)`, `f ∈ ±1/(2·S_sym·S·T)`; staggering schemes C and D.
    FullSymbol,
    /// Scheme B: `τ ∈ (0, 2·T_s/S)`, `f ∈ ±1/(4·S_sym·T)`.
    HalfCombExtended,
    /// Scheme D: delay up to `l·T_s/S` in two pieces.
    PartialL { l: usize, variant: PartialVariant },
}

impl std::fmt::Display for RegionChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionChoice::Fractional => f.write_str("fractional"),
            RegionChoice::FullSymbol => f.write_str("full_symbol"),
            RegionChoice::HalfCombExtended => f.write_str("half_comb_extended"),
            RegionChoice::PartialL { l, variant } => write!(f, "partial_l({l}, {variant:?})"),
        }
    }
}

/// Interval with per-end open/closed flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Q,
    pub hi: Q,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: Q, hi: Q) -> Self {
        Self { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn closed_open(lo: Q, hi: Q) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: false }
    }

    pub fn contains(&self, x: Q) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let (lo, hi) = (to_f64(self.lo), to_f64(self.hi));
        let above = if self.lo_closed { x >= lo } else { x > lo };
        let below = if self.hi_closed { x <= hi } else { x < hi };
        above && below
    }

    fn overlaps(&self, other: &Interval) -> bool {
        let lo_ok = self.hi > other.lo || (self.hi == other.lo && self.hi_closed && other.lo_closed);
        let hi_ok = other.hi > self.lo || (other.hi == self.lo && other.hi_closed && self.lo_closed);
        lo_ok && hi_ok
    }
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// One rectangle, delay in `T_s`, Doppler in `1/T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPiece {
    pub tau_ts: Interval,
    pub fd_t: Interval,
}

impl RegionPiece {
    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.tau_ts.contains(p.tau_ts) && self.fd_t.contains(p.fd_t)
    }
}

/// A piece in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRect {
    pub tau_min_sec: f64,
    pub tau_max_sec: f64,
    pub fd_min_hz: f64,
    pub fd_max_hz: f64,
    pub tau_min_inclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnambiguityRegion {
    pub choice: RegionChoice,
    pub pieces: Vec<RegionPiece>,
    pub t_s_sec: f64,
    pub t_sec: f64,
}

impl UnambiguityRegion {
    pub fn rects(&self) -> Vec<RegionRect> {
        self.pieces
            .iter()
            .map(|p| RegionRect {
                tau_min_sec: to_f64(p.tau_ts.lo) * self.t_s_sec,
                tau_max_sec: to_f64(p.tau_ts.hi) * self.t_s_sec,
                fd_min_hz: to_f64(p.fd_t.lo) / self.t_sec,
                fd_max_hz: to_f64(p.fd_t.hi) / self.t_sec,
                tau_min_inclusive: p.tau_ts.lo_closed,
            })
            .collect()
    }

    pub fn contains_lattice(&self, p: &LatticePoint) -> bool {
        self.pieces.iter().any(|piece| piece.contains(p))
    }

    /// Membership of a physical point.
    pub fn contains(&self, tau_sec: f64, fd_hz: f64) -> bool {
        let tau = tau_sec / self.t_s_sec;
        let fd = fd_hz * self.t_sec;
        self.pieces
            .iter()
            .any(|p| p.tau_ts.contains_f64(tau) && p.fd_t.contains_f64(fd))
    }

    pub fn pieces_disjoint(&self) -> bool {
        self.pieces.iter().enumerate().all(|(i, a)| {
            self.pieces[i + 1..]
                .iter()
                .all(|b| !(a.tau_ts.overlaps(&b.tau_ts) && a.fd_t.overlaps(&b.fd_t)))
        })
    }

    /// Predicted peaks at or above `threshold` that fall inside the region,
    /// tested exactly for lattice peaks.
    pub fn violations<'a>(
        &self,
        prediction: &'a PeakPrediction,
        threshold: f64,
    ) -> Vec<&'a PredictedPeak> {
        prediction
            .required(threshold)
            .filter(|p| match &p.lattice {
                Some(lp) => self.contains_lattice(lp),
                None => self.contains(p.tau_sec, p.fd_peak_hz),
            })
            .collect()
    }
}

/// Builds the region `choice` for `config`.
pub fn unambiguity_region(
    config: &PatternConfig,
    choice: RegionChoice,
) -> Result<UnambiguityRegion, RegionError> {
    let s = config.s_sub as i64;
    let s_sym = config.s_sym as i64;
    let zero = Q::from_integer(0);
    let mismatch = || RegionError::SchemeMismatch { choice: choice.to_string(), scheme: config.scheme };
    let narrow = Interval::open(Q::new(-1, 2 * s * s_sym), Q::new(1, 2 * s * s_sym));
    let pieces = match choice {
        RegionChoice::Fractional => {
            let half = if s_sym == 1 {
                Q::new(config.numerology.n_prime() as i64, 2)
            } else {
                Q::new(1, 2 * s_sym)
            };
            vec![RegionPiece {
                tau_ts: Interval::open(zero, Q::new(1, s)),
                fd_t: Interval::open(-half, half),
            }]
        }
        RegionChoice::FullSymbol => {
            if !matches!(config.scheme, Scheme::C | Scheme::D) {
                return Err(mismatch());
            }
            vec![RegionPiece { tau_ts: Interval::open(zero, Q::from_integer(1)), fd_t: narrow }]
        }
        RegionChoice::HalfCombExtended => {
            if config.scheme != Scheme::B {
                return Err(mismatch());
            }
            vec![RegionPiece {
                tau_ts: Interval::open(zero, Q::new(2, s)),
                fd_t: Interval::open(Q::new(-1, 4 * s_sym), Q::new(1, 4 * s_sym)),
            }]
        }
        RegionChoice::PartialL { l, variant } => {
            if config.scheme != Scheme::D {
                return Err(mismatch());
            }
            if l < 2 || l + 1 > config.s_sub {
                return Err(RegionError::PartialIndex { l, max: config.s_sub - 1 });
            }
            let p = config.slope_mod() as i64;
            let mirror = if p == 1 {
                false
            } else if p == s - 1 {
                true
            } else {
                return Err(RegionError::PartialSlope { slope: config.slope, s_sub: config.s_sub });
            };
            let l = l as i64;
            let wide_edge = Q::new(2 * s - 2 * l + 1, 2 * s * s_sym);
            let small = Q::new(1, 2 * s * s_sym);
            let (wide_tau, narrow_tau) = match variant {
                PartialVariant::First => (
                    Interval::open(zero, Q::new(1, s)),
                    Interval::closed_open(Q::new(1, s), Q::new(l, s)),
                ),
                PartialVariant::Second => (
                    Interval::closed_open(Q::new(l - 1, s), Q::new(l, s)),
                    Interval::open(zero, Q::new(l - 1, s)),
                ),
            };
            // Variant two mirrors the Doppler extent of variant one.
            let upward = (variant == PartialVariant::First) != mirror;
            let wide = if upward {
                Interval::open(-small, wide_edge)
            } else {
                Interval::open(-wide_edge, small)
            };
            vec![
                RegionPiece { tau_ts: wide_tau, fd_t: wide },
                RegionPiece { tau_ts: narrow_tau, fd_t: narrow },
            ]
        }
    };
    Ok(UnambiguityRegion {
        choice,
        pieces,
        t_s_sec: config.numerology.t_s_sec(),
        t_sec: config.numerology.t_sec(),
    })
}
