//! Comb reference-signal synthesis and delay-Doppler ambiguity analysis for
//! OFDM sensing.

pub mod delay_sum;
pub mod harness;
pub mod pattern;
pub mod post_fft;
pub mod waveform;
