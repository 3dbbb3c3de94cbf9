//! Command-line orchestration: runs a [`RunSpec`] through the ambiguity,
//! periodogram, prediction and verification pipelines and writes the
//! artifacts.

pub mod export;
pub mod spec;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay_sum::{
    compute_af, compute_cross_af, fd_grid, local_maxima, predict_side_peaks, threshold_from_db,
    unambiguity_region, verify_grid, verify_prediction, Algorithm, AfSurface, AfWindow, MatchReport,
    NumericPeak, PartialVariant, PeakGrid, PeakPrediction, RegionChoice, RegionRect, VerifyError,
};
use crate::pattern::{PatternConfig, ScramblingSequence, Scheme};
use crate::post_fft::{
    expected_grid, measured_retained_energy, predict_2dfft_peaks, rd_map, receive, relative_residual,
    GiSetting, RangeDopplerMap,
};
use crate::waveform::{apply_channel, build_frame, write_raw, Target, TimeFrame};
use export::Matrix;
pub use spec::RunSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Periodogram threshold for schemes B and C, just under the half-power
/// level their Doppler peaks are predicted at.
pub const RD_HALF_POWER_DB: f64 = -3.0103;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run spec:\n  {}", .0.join("\n  "))]
    Spec(Vec<String>),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Spec(_) | HarnessError::Parse(_) => 1,
            HarnessError::Output(_) | HarnessError::Runtime(_) => 3,
        }
    }
}

fn runtime<E: fmt::Display>(e: E) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn coarse(e: VerifyError) -> HarnessError {
    match e {
        VerifyError::GridTooCoarse(..) => HarnessError::Spec(vec![format!("grids: {e}")]),
        VerifyError::EmptyGrid => runtime(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Af,
    Rdmap,
    Predict,
    Verify,
    GiDemo,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subcommand::Af => "af",
            Subcommand::Rdmap => "rdmap",
            Subcommand::Predict => "predict",
            Subcommand::Verify => "verify",
            Subcommand::GiDemo => "gi-demo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub scheme: Scheme,
    pub n_fft_samples: usize,
    pub n_cp_samples: usize,
    pub scs_hz: f64,
    pub s_sub: usize,
    pub s_sym: usize,
    pub m_symbols: usize,
    pub slope: i64,
    pub offsets: Vec<usize>,
    pub t_s_sec: f64,
    pub t_sec: f64,
    pub sample_period_sec: f64,
    pub frame_len_samples: usize,
}

impl From<&PatternConfig> for PatternSummary {
    fn from(c: &PatternConfig) -> Self {
        Self {
            scheme: c.scheme,
            n_fft_samples: c.numerology.n_fft,
            n_cp_samples: c.numerology.n_cp,
            scs_hz: c.numerology.scs_hz,
            s_sub: c.s_sub,
            s_sym: c.s_sym,
            m_symbols: c.m_symbols,
            slope: c.slope,
            offsets: c.offsets.clone(),
            t_s_sec: c.numerology.t_s_sec(),
            t_sec: c.numerology.t_sec(),
            sample_period_sec: c.numerology.sample_period_sec(),
            frame_len_samples: c.frame_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    /// `self` or `cross`.
    pub kind: String,
    pub window: AfWindow,
    pub tau_points: usize,
    pub fd_points: usize,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub target_index: usize,
    pub scope: SearchScope,
    pub true_delay_samples: usize,
    pub true_doppler_hz: f64,
    pub expected_g: usize,
    pub expected_q: i64,
    pub g: usize,
    pub q: i64,
    pub tau_sec: f64,
    pub fd_hz: f64,
    pub fd_physical_hz: f64,
    pub delay_error_samples: i64,
    pub doppler_error_bins: i64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub choice: RegionChoice,
    pub rects: Vec<RegionRect>,
    /// No predicted peak at or above the threshold falls inside.
    pub sound: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    pub delay_samples: usize,
    /// `max|measured − closed form| / max|closed form|` of the descrambled grid.
    pub relative_residual: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiRow {
    pub l: usize,
    pub dropped_samples: usize,
    pub isi_free_delay_samples: usize,
    pub isi_free_delay_sec: f64,
    pub retained_energy_fraction: f64,
    pub measured_retained_energy: f64,
    pub at_bound: Option<BoundaryCheck>,
    pub beyond_bound: Option<BoundaryCheck>,
}

/// Machine-readable result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub subcommand: Subcommand,
    pub seed: u64,
    pub pattern: PatternSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gi_extension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_sum_prediction: Option<PeakPrediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fft2d_predictions: Vec<PeakPrediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub af_numeric_peaks: Vec<NumericPeak>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rd_numeric_peaks: Vec<NumericPeak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub af_match: Option<MatchReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rd_matches: Vec<MatchReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimation: Vec<Estimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gi_table: Vec<GiRow>,
    pub mismatch_count: usize,
    pub artifacts: Vec<String>,
    /// Wall-clock stage times; absent unless requested so reports stay
    /// byte-identical across runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, f64>>,
}

impl Report {
    fn new(sub: Subcommand, spec: &RunSpec, config: &PatternConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subcommand: sub,
            seed: spec.channel.seed,
            pattern: config.into(),
            gi_extension: None,
            surface: None,
            delay_sum_prediction: None,
            fft2d_predictions: Vec::new(),
            af_numeric_peaks: Vec::new(),
            rd_numeric_peaks: Vec::new(),
            af_match: None,
            rd_matches: Vec::new(),
            estimation: Vec::new(),
            regions: Vec::new(),
            gi_table: Vec::new(),
            mismatch_count: 0,
            artifacts: Vec::new(),
            timing_ms: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report always serializes");
        s.push('\n');
        s
    }
}

/// Execution options that are not part of the spec.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub timing: bool,
}

struct Ctx<'a> {
    spec: &'a RunSpec,
    config: PatternConfig,
    scrambling: ScramblingSequence,
    out_dir: PathBuf,
    report: Report,
    clock: Option<(Instant, BTreeMap<String, f64>)>,
}

impl Ctx<'_> {
    fn lap(&mut self, stage: &str) {
        if let Some((start, times)) = &mut self.clock {
            times.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
            *start = Instant::now();
        }
    }

    fn threshold(&self) -> f64 {
        threshold_from_db(self.spec.grids.dynamic_range_db)
    }

    fn rd_dynamic_range_db(&self) -> f64 {
        match self.config.scheme {
            Scheme::A | Scheme::D => self.spec.grids.dynamic_range_db,
            Scheme::B | Scheme::C => RD_HALF_POWER_DB,
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), HarnessError> {
        export::write_file(&self.out_dir.join(name), contents)?;
        self.report.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_matrix(&mut self, stem: &str, m: &Matrix) -> Result<(), HarnessError> {
        if self.spec.wants("csv") {
            self.write(&format!("{stem}.csv"), &export::csv_string(m))?;
        }
        if self.spec.wants("pgm") {
            self.write(&format!("{stem}.pgm"), &export::pgm_string(m))?;
        }
        Ok(())
    }

    fn write_raw(&mut self, stem: &str, frame: &TimeFrame) -> Result<(), HarnessError> {
        if !self.spec.wants("raw") {
            return Ok(());
        }
        let bin = format!("{stem}.f64");
        let side = format!("{stem}.json");
        write_raw(frame, &self.out_dir.join(&bin), &self.out_dir.join(&side))
            .map_err(|e| HarnessError::Output(e.to_string()))?;
        self.report.artifacts.push(bin);
        self.report.artifacts.push(side);
        Ok(())
    }

    fn tau_grid(&self) -> Vec<f64> {
        let n = self.spec.grids.tau_points.unwrap_or(self.config.numerology.n_fft);
        let dt = self.config.numerology.sample_period_sec();
        (0..n).map(|d| d as f64 * dt).collect()
    }

    fn fd_grid(&self) -> Vec<f64> {
        fd_grid(&self.config, self.spec.grids.fd_points.unwrap_or(16 * self.config.m_symbols + 1))
    }

    fn transmit(&self) -> Result<TimeFrame, HarnessError> {
        build_frame(&self.config, &self.scrambling).map_err(runtime)
    }

    fn setting(&self) -> Result<GiSetting, HarnessError> {
        GiSetting::new(&self.config, self.spec.receiver.gi_extension).map_err(runtime)
    }

    fn rd_map(&self, received: &TimeFrame, setting: &GiSetting) -> Result<RangeDopplerMap, HarnessError> {
        let grid = receive(received, setting, &self.scrambling).map_err(runtime)?;
        let num = &self.config.numerology;
        rd_map(&grid, num.t_s_sec(), num.t_sec()).map_err(runtime)
    }

    fn af_surface(&self, frame: &TimeFrame) -> Result<AfSurface, HarnessError> {
        compute_af(frame, &self.tau_grid(), &self.fd_grid(), self.spec.grids.window).map_err(runtime)
    }

    fn regions(&self, prediction: &PeakPrediction) -> Vec<RegionReport> {
        applicable_regions(&self.config)
            .into_iter()
            .filter_map(|choice| unambiguity_region(&self.config, choice).ok())
            .map(|region| {
                let violations = region.violations(prediction, self.threshold()).len();
                RegionReport {
                    choice: region.choice,
                    rects: region.rects(),
                    sound: violations == 0,
                    violations,
                }
            })
            .collect()
    }
}

/// Every region choice defined for the scheme and slope of `config`.
pub fn applicable_regions(config: &PatternConfig) -> Vec<RegionChoice> {
    let mut out = vec![RegionChoice::Fractional];
    match config.scheme {
        Scheme::A => {}
        Scheme::B => out.push(RegionChoice::HalfCombExtended),
        Scheme::C => out.push(RegionChoice::FullSymbol),
        Scheme::D => {
            out.push(RegionChoice::FullSymbol);
            let p = config.slope_mod();
            if p == 1 || p + 1 == config.s_sub {
                for l in 2..config.s_sub {
                    for variant in [PartialVariant::First, PartialVariant::Second] {
                        out.push(RegionChoice::PartialL { l, variant });
                    }
                }
            }
        }
    }
    out
}

/// Signed Doppler bin nearest to `f·M·T`.
pub fn nearest_bin(config: &PatternConfig, doppler_hz: f64) -> i64 {
    let m = config.m_symbols as i64;
    let q = (doppler_hz * m as f64 * config.numerology.t_sec()).round() as i64;
    let q = q.rem_euclid(m);
    if q > (m - 1) / 2 {
        q - m
    } else {
        q
    }
}

/// Signed Doppler bins inside the full-symbol region's band
/// `|f| < 1/(2·S_sub·S_sym·T)`, for the schemes that have that region.
pub fn full_symbol_bins(config: &PatternConfig) -> Option<RangeInclusive<i64>> {
    match config.scheme {
        Scheme::C | Scheme::D => {
            let q = (config.m_symbols as i64 - 1) / (2 * (config.s_sub * config.s_sym) as i64);
            Some(-q..=q)
        }
        Scheme::A | Scheme::B => None,
    }
}

/// Where [`estimate`] looks for the strongest periodogram cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchScope {
    Whole,
    /// Delays within half a comb repetition of the target, to separate
    /// several targets.
    NearDelay,
    /// Doppler bins of [`full_symbol_bins`] where the scheme has them.
    FullSymbolBand,
}

/// Estimate for `target` from the strongest periodogram cell in `scope`.
pub fn estimate(
    config: &PatternConfig,
    map: &RangeDopplerMap,
    index: usize,
    target: &Target,
    scope: SearchScope,
) -> Estimate {
    let n = map.n_delay();
    let expected_g = target.delay_samples % n;
    let expected_q = nearest_bin(config, target.doppler_hz);
    let (g, q) = match scope {
        SearchScope::Whole => map.argmax(),
        SearchScope::FullSymbolBand => map.argmax_within(0..=n - 1, full_symbol_bins(config)),
        SearchScope::NearDelay => {
            let half = (n / config.s_sub / 2).max(1);
            let mut best = (0, 0, f64::NEG_INFINITY);
            for dg in 0..2 * half {
                let g = (expected_g + n + dg - half) % n;
                let (_, q) = map.argmax_within(g..=g, None);
                if map.values[g][q] > best.2 {
                    best = (g, q, map.values[g][q]);
                }
            }
            (best.0, best.1)
        }
    };
    let qs = map.signed_bin(q);
    let dg = (g as i64 - expected_g as i64).rem_euclid(n as i64);
    let delay_error_samples = if dg > n as i64 / 2 { dg - n as i64 } else { dg };
    Estimate {
        target_index: index,
        scope,
        true_delay_samples: target.delay_samples,
        true_doppler_hz: target.doppler_hz,
        expected_g,
        expected_q,
        g,
        q: qs,
        tau_sec: map.tau_sec(g),
        fd_hz: map.fd_hz(q),
        fd_physical_hz: map.fd_physical_hz(q),
        delay_error_samples,
        doppler_error_bins: qs - expected_q,
        correct: g == expected_g && qs == expected_q,
    }
}

fn af_matrix(s: &AfSurface) -> Matrix {
    Matrix {
        tau_axis_sec: s.tau_axis_sec.clone(),
        fd_axis_hz: s.fd_axis_hz.clone(),
        values: s.magnitudes.clone(),
    }
}

/// Periodogram with its Doppler columns in ascending signed-bin order.
fn rd_matrix(map: &RangeDopplerMap) -> Matrix {
    let m = map.n_doppler();
    let order: Vec<usize> = (0..m).map(|k| (k + m.div_ceil(2)) % m).collect();
    Matrix {
        tau_axis_sec: map.tau_axis_sec(),
        fd_axis_hz: order.iter().map(|&q| map.fd_hz(q)).collect(),
        values: map.values.iter().map(|row| order.iter().map(|&q| row[q]).collect()).collect(),
    }
}

/// Local maxima of a periodogram at or above `threshold` (amplitude relative
/// to the map peak), with signed Doppler.
fn rd_peaks(map: &RangeDopplerMap, threshold: f64) -> Vec<NumericPeak> {
    let grid: PeakGrid = map.peak_grid();
    local_maxima(&grid)
        .into_iter()
        .filter(|p| p.level >= threshold)
        .map(|p| NumericPeak { fd_hz: map.fd_hz(p.fd_index), ..p })
        .collect()
}

/// Runs `sub` on a validated copy of `spec`.
pub fn run(sub: Subcommand, spec: &RunSpec, options: &RunOptions) -> Result<Report, HarnessError> {
    let config = spec.validate()?;
    let scrambling = ScramblingSequence::zadoff_chu(&config, spec.pattern.zc_root, spec.pattern.independent_roots)
        .map_err(|e| HarnessError::Spec(vec![format!("pattern.zc_root: {e}")]))?;
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| spec.outputs.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| HarnessError::Output(format!("{}: {e}", out_dir.display())))?;
    let report = Report::new(sub, spec, &config);
    let mut ctx = Ctx {
        spec,
        config,
        scrambling,
        out_dir,
        report,
        clock: options.timing.then(|| (Instant::now(), BTreeMap::new())),
    };
    match sub {
        Subcommand::Af => run_af(&mut ctx)?,
        Subcommand::Rdmap => run_rdmap(&mut ctx)?,
        Subcommand::Predict => run_predict(&mut ctx)?,
        Subcommand::Verify => run_verify(&mut ctx)?,
        Subcommand::GiDemo => run_gi_demo(&mut ctx)?,
    }
    ctx.report.timing_ms = ctx.clock.take().map(|(_, t)| t);
    if ctx.spec.wants("json") {
        ctx.report.artifacts.push("report.json".to_string());
        let json = ctx.report.to_json();
        export::write_file(&ctx.out_dir.join("report.json"), &json)?;
    }
    Ok(ctx.report)
}

fn run_af(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let tx = ctx.transmit()?;
    let targets = ctx.spec.targets();
    let (surface, kind) = if targets.is_empty() {
        (ctx.af_surface(&tx)?, "self")
    } else {
        let ch = &ctx.spec.channel;
        let rx = apply_channel(&tx, &targets, ch.noise_power, ch.doppler_model, ch.seed).map_err(runtime)?;
        ctx.write_raw("rx", &rx)?;
        let s = compute_cross_af(&rx, &tx, &ctx.tau_grid(), &ctx.fd_grid(), ctx.spec.grids.window)
            .map_err(runtime)?;
        (s, "cross")
    };
    ctx.lap("surface");
    let threshold = ctx.threshold();
    let normalized = surface.normalized_to_max();
    ctx.report.af_numeric_peaks = local_maxima(&PeakGrid::from(&normalized))
        .into_iter()
        .filter(|p| p.level >= threshold)
        .collect();
    ctx.report.surface = Some(SurfaceSummary {
        kind: kind.to_string(),
        window: ctx.spec.grids.window,
        tau_points: surface.tau_axis_sec.len(),
        fd_points: surface.fd_axis_hz.len(),
        max_value: surface.max(),
    });
    if kind == "self" {
        let prediction = predict_side_peaks(&ctx.config, Algorithm::DelaySum);
        let m = verify_prediction(&surface, &prediction, ctx.spec.grids.dynamic_range_db).map_err(coarse)?;
        ctx.report.delay_sum_prediction = Some(prediction);
        ctx.report.af_match = Some(m);
    }
    ctx.write_matrix("af", &af_matrix(&surface))?;
    ctx.lap("export");
    Ok(())
}

fn run_rdmap(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let setting = ctx.setting()?;
    ctx.report.gi_extension = Some(setting.l);
    let tx = ctx.transmit()?;
    let targets = ctx.spec.targets();
    let ch = &ctx.spec.channel;
    let rx = apply_channel(&tx, &targets, ch.noise_power, ch.doppler_model, ch.seed).map_err(runtime)?;
    ctx.write_raw("rx", &rx)?;
    let map = ctx.rd_map(&rx, &setting)?;
    ctx.lap("rdmap");
    let scope = if targets.len() > 1 { SearchScope::NearDelay } else { SearchScope::Whole };
    ctx.report.estimation = targets
        .iter()
        .enumerate()
        .map(|(i, t)| estimate(&ctx.config, &map, i, t, scope))
        .collect();
    ctx.report.rd_numeric_peaks = rd_peaks(&map, threshold_from_db(ctx.rd_dynamic_range_db()));
    ctx.write_matrix("rdmap", &rd_matrix(&map))?;
    ctx.lap("export");
    Ok(())
}

fn default_targets(spec: &RunSpec) -> Vec<Target> {
    let t = spec.targets();
    if t.is_empty() {
        vec![Target::unit(0, 0.0)]
    } else {
        t
    }
}

fn run_predict(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let setting = ctx.setting()?;
    ctx.report.gi_extension = Some(setting.l);
    let prediction = predict_side_peaks(&ctx.config, Algorithm::DelaySum);
    ctx.report.regions = ctx.regions(&prediction);
    ctx.report.delay_sum_prediction = Some(prediction);
    ctx.report.fft2d_predictions = default_targets(ctx.spec)
        .iter()
        .map(|t| predict_2dfft_peaks(&ctx.config, &setting, t))
        .collect();
    ctx.lap("predict");
    Ok(())
}

fn run_verify(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let tx = ctx.transmit()?;
    let surface = ctx.af_surface(&tx)?;
    let prediction = predict_side_peaks(&ctx.config, Algorithm::DelaySum);
    let af_match =
        verify_prediction(&surface, &prediction, ctx.spec.grids.dynamic_range_db).map_err(coarse)?;
    ctx.lap("af");
    ctx.report.regions = ctx.regions(&prediction);
    let unsound = ctx.report.regions.iter().filter(|r| !r.sound).count();
    let mut mismatches = af_match.mismatch_count() + unsound;
    ctx.report.af_numeric_peaks = af_match.numeric_peaks.clone();
    ctx.report.af_match = Some(af_match);
    ctx.report.delay_sum_prediction = Some(prediction);
    ctx.write_matrix("af", &af_matrix(&surface))?;

    // Each target alone and noiseless, so the check is reproducible.
    let setting = ctx.setting()?;
    ctx.report.gi_extension = Some(setting.l);
    let db = ctx.rd_dynamic_range_db();
    for (i, target) in default_targets(ctx.spec).iter().enumerate() {
        let rx = apply_channel(&tx, &[*target], 0.0, ctx.spec.channel.doppler_model, ctx.spec.channel.seed)
            .map_err(runtime)?;
        let map = ctx.rd_map(&rx, &setting)?;
        let pred = predict_2dfft_peaks(&ctx.config, &setting, target);
        let m = verify_grid(&map.peak_grid(), &pred, db).map_err(coarse)?;
        mismatches += m.mismatch_count();
        let est = estimate(&ctx.config, &map, i, target, SearchScope::Whole);
        if i == 0 {
            ctx.report.rd_numeric_peaks = rd_peaks(&map, threshold_from_db(db));
            ctx.write_matrix("rdmap", &rd_matrix(&map))?;
        }
        ctx.report.estimation.push(est);
        ctx.report.fft2d_predictions.push(pred);
        ctx.report.rd_matches.push(m);
    }
    ctx.lap("rdmap");
    ctx.report.mismatch_count = mismatches;
    Ok(())
}

fn boundary_check(
    ctx: &Ctx,
    tx: &TimeFrame,
    setting: &GiSetting,
    delay_samples: usize,
    doppler_hz: f64,
) -> Result<Option<BoundaryCheck>, HarnessError> {
    if delay_samples >= ctx.config.frame_len() {
        return Ok(None);
    }
    let target = Target { delay_samples, doppler_hz, amplitude: Complex64::new(1.0, 0.0) };
    let rx = apply_channel(tx, &[target], 0.0, ctx.spec.channel.doppler_model, ctx.spec.channel.seed)
        .map_err(runtime)?;
    let grid = receive(&rx, setting, &ctx.scrambling).map_err(runtime)?;
    let residual = relative_residual(&grid, &expected_grid(&ctx.config, setting, &target));
    let num = &ctx.config.numerology;
    let map = rd_map(&grid, num.t_s_sec(), num.t_sec()).map_err(runtime)?;
    Ok(Some(BoundaryCheck {
        delay_samples,
        relative_residual: residual,
        estimate: estimate(&ctx.config, &map, 0, &target, SearchScope::FullSymbolBand),
    }))
}

fn run_gi_demo(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let tx = ctx.transmit()?;
    let doppler_hz = ctx.spec.targets.first().map_or(0.0, |t| t.doppler_hz);
    let step = ctx.config.comb_len();
    for l in 0..ctx.config.s_sub {
        let setting = GiSetting::new(&ctx.config, l).map_err(runtime)?;
        let bound = setting.isi_free_delay_samples();
        let row = GiRow {
            l,
            dropped_samples: setting.dropped_samples(),
            isi_free_delay_samples: bound,
            isi_free_delay_sec: setting.isi_free_delay_sec(),
            retained_energy_fraction: setting.retained_energy_fraction(),
            measured_retained_energy: measured_retained_energy(&tx, &setting),
            at_bound: boundary_check(ctx, &tx, &setting, bound, doppler_hz)?,
            beyond_bound: boundary_check(ctx, &tx, &setting, bound + step, doppler_hz)?,
        };
        ctx.report.gi_table.push(row);
    }
    ctx.lap("gi_demo");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn spec(scheme: &str) -> RunSpec {
        RunSpec::from_toml(&format!(
            "[pattern]\nn_fft_samples = 64\nn_cp_samples = 16\nscs_hz = 15000.0\ns_sub = 4\n\
             scheme = \"{scheme}\"\nm_symbols = 8\n[outputs]\nformats = [\"json\"]\n"
        ))
        .unwrap()
    }

    fn opts(dir: &Path) -> RunOptions {
        RunOptions { out_dir: Some(dir.to_path_buf()), timing: false }
    }

    #[test]
    fn verify_scheme_d_is_clean() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(Subcommand::Verify, &spec("D"), &opts(dir.path())).unwrap();
        assert_eq!(r.mismatch_count, 0, "{}", r.to_json());
        assert!(r.estimation[0].correct);
        assert!(dir.path().join("report.json").exists());
        assert!(r.regions.iter().all(|g| g.sound));
    }

    #[test]
    fn regions_listed_per_scheme() {
        let c = spec("D").validate().unwrap();
        assert_eq!(applicable_regions(&c).len(), 2 + 2 * 2);
        let c = spec("A").validate().unwrap();
        assert_eq!(applicable_regions(&c), vec![RegionChoice::Fractional]);
    }

    #[test]
    fn rd_matrix_sorted_axis() {
        let map = RangeDopplerMap { values: vec![vec![0.0, 1.0, 2.0, 3.0]], t_s_sec: 1.0, t_sec: 1.0, s_sym: 1 };
        let m = rd_matrix(&map);
        assert_eq!(m.fd_axis_hz, vec![-0.5, -0.25, 0.0, 0.25]);
        assert_eq!(m.values[0], vec![2.0, 3.0, 0.0, 1.0]);
        let map = RangeDopplerMap { values: vec![vec![0.0, 1.0, 2.0]], t_s_sec: 1.0, t_sec: 1.0, s_sym: 1 };
        let m = rd_matrix(&map);
        assert_eq!(m.values[0], vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn timing_only_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(Subcommand::Predict, &spec("C"), &opts(dir.path())).unwrap();
        assert!(r.timing_ms.is_none());
        assert!(!r.to_json().contains("timing"));
        let r = run(Subcommand::Predict, &spec("C"), &RunOptions { timing: true, ..opts(dir.path()) }).unwrap();
        assert!(r.timing_ms.is_some());
    }
}
