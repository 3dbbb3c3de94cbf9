//! Run specification, read from TOML.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::delay_sum::{AfWindow, DEFAULT_DYNAMIC_RANGE_DB};
use crate::pattern::{make_offsets, validate_config, Numerology, PatternConfig, Scheme};
use crate::waveform::{DopplerModel, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub n_fft_samples: usize,
    pub n_cp_samples: usize,
    pub scs_hz: f64,
    pub s_sub: usize,
    #[serde(default = "one")]
    pub s_sym: usize,
    pub scheme: Scheme,
    #[serde(default)]
    pub base_offset: usize,
    #[serde(default = "one_i64")]
    pub slope: i64,
    pub m_symbols: usize,
    /// Explicit offsets; generated from the scheme when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    #[serde(default = "one_i64")]
    pub zc_root: i64,
    #[serde(default)]
    pub independent_roots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub delay_samples: usize,
    #[serde(default)]
    pub doppler_hz: f64,
    #[serde(default = "one_f64")]
    pub amplitude_re: f64,
    #[serde(default)]
    pub amplitude_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub noise_power: f64,
    #[serde(default = "block")]
    pub doppler_model: DopplerModel,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { noise_power: 0.0, doppler_model: DopplerModel::Block, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Delay points at one-sample steps from zero; defaults to `n_fft`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_points: Option<usize>,
    /// Doppler points over `[−1/T, 1/T]`; defaults to `16·M + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_points: Option<usize>,
    #[serde(default = "per_symbol")]
    pub window: AfWindow,
    #[serde(default = "default_db")]
    pub dynamic_range_db: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            tau_points: None,
            fd_points: None,
            window: AfWindow::PerSymbol,
            dynamic_range_db: DEFAULT_DYNAMIC_RANGE_DB,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    /// Guard-interval extension `l`.
    #[serde(default)]
    pub gi_extension: usize,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { formats: default_formats(), directory: None }
    }
}

/// Complete description of one harness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub pattern: PatternSpec,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub grids: GridSpec,
    #[serde(default)]
    pub receiver: ReceiverSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn one() -> usize {
    1
}
fn one_i64() -> i64 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn block() -> DopplerModel {
    DopplerModel::Block
}
fn per_symbol() -> AfWindow {
    AfWindow::PerSymbol
}
fn default_db() -> f64 {
    DEFAULT_DYNAMIC_RANGE_DB
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "pgm".into(), "json".into()]
}

pub const FORMATS: [&str; 4] = ["csv", "pgm", "json", "raw"];

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Spec(vec![e.message().to_string()]))
    }

    /// Fails only for values TOML cannot hold (seeds above `i64::MAX`).
    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Builds and validates the pattern, reporting every field error.
    pub fn pattern_config(&self) -> Result<PatternConfig, HarnessError> {
        let p = &self.pattern;
        let offsets = match &p.offsets {
            Some(v) => v.clone(),
            None => make_offsets(p.scheme, p.s_sub, p.m_symbols, p.base_offset, p.slope)
                .map_err(|e| HarnessError::Spec(vec![format!("pattern: {e}")]))?,
        };
        validate_config(PatternConfig {
            numerology: Numerology::new(p.n_fft_samples, p.n_cp_samples, p.scs_hz),
            s_sub: p.s_sub,
            s_sym: p.s_sym,
            scheme: p.scheme,
            base_offset: p.base_offset,
            slope: p.slope,
            m_symbols: p.m_symbols,
            offsets,
        })
        .map_err(|errs| HarnessError::Spec(errs.iter().map(|e| format!("pattern: {e}")).collect()))
    }

    pub fn targets(&self) -> Vec<Target> {
        self.targets
            .iter()
            .map(|t| Target {
                delay_samples: t.delay_samples,
                doppler_hz: t.doppler_hz,
                amplitude: Complex64::new(t.amplitude_re, t.amplitude_im),
            })
            .collect()
    }

    /// Checks everything beyond the pattern itself.
    pub fn validate(&self) -> Result<PatternConfig, HarnessError> {
        let config = self.pattern_config()?;
        let mut errors = Vec::new();
        if self.receiver.gi_extension >= config.s_sub {
            errors.push(format!(
                "receiver.gi_extension: {} must be below s_sub {}",
                self.receiver.gi_extension, config.s_sub
            ));
        }
        if !(self.channel.noise_power.is_finite() && self.channel.noise_power >= 0.0) {
            errors.push("channel.noise_power: must be finite and non-negative".to_string());
        }
        if i64::try_from(self.channel.seed).is_err() {
            errors.push(format!("channel.seed: {} exceeds the config integer range", self.channel.seed));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.delay_samples >= config.frame_len() {
                errors.push(format!(
                    "targets[{i}].delay_samples: {} exceeds frame length {}",
                    t.delay_samples,
                    config.frame_len()
                ));
            }
        }
        if let Some(n) = self.grids.tau_points {
            if n == 0 || n > config.frame_len() {
                errors.push(format!("grids.tau_points: {n} outside [1, {}]", config.frame_len()));
            }
        }
        if self.grids.fd_points == Some(0) {
            errors.push("grids.fd_points: must be positive".to_string());
        }
        for f in &self.outputs.formats {
            if !FORMATS.contains(&f.as_str()) {
                errors.push(format!("outputs.formats: unknown format {f:?}"));
            }
        }
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(HarnessError::Spec(errors))
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.outputs.formats.iter().any(|f| f == format)
    }
}
