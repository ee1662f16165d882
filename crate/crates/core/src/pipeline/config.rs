//! Flat `section.key = value` configuration text.
//!
//! ```text
//! # comment
//! scenario.t60_s = 0.3
//! aec.variant = nlms
//! postfilter.stages = NS,RS,REVS
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::aec::{AdaptiveFilterConfig, DtdParams, FilterVariant, VariantKind};
use crate::error::{Error, Result};
use crate::metrics::MetricParams;
use crate::omlsa::PostfilterParams;
use crate::signal::{WavEncoding, DEFAULT_SAMPLE_RATE};
use crate::stft::FrameParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FarSignal {
    None,
    White,
    Speech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoPathKind {
    Air,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipModel {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub far: FarSignal,
    /// Reverberation time of the room, shared by the echo path and the
    /// near-end response.
    pub t60_s: f64,
    pub echo_path: EchoPathKind,
    pub echo_path_len: usize,
    pub echo_gain: f64,
    pub echo_delay: usize,
    pub sparse_active: usize,
    pub near_speech: bool,
    pub near_start_s: f64,
    pub near_gain: f64,
    pub near_reverb: bool,
    pub near_delay: usize,
    /// Noise level in dB below the near-end speech, or below the echo when
    /// there is no near-end speech. `None` disables the noise.
    pub snr_db: Option<f64>,
    pub clip_sner_db: Option<f64>,
    pub clip_model: ClipModel,
    pub tail_change_s: Option<f64>,
    pub tail_change_amount: f64,
    pub tail_change_start: f64,
    pub far_wav: Option<PathBuf>,
    pub mic_wav: Option<PathBuf>,
    pub near_wav: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            duration_s: 20.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed: 1,
            far: FarSignal::Speech,
            t60_s: 0.3,
            echo_path: EchoPathKind::Air,
            echo_path_len: 2048,
            echo_gain: 0.3,
            echo_delay: 16,
            sparse_active: 8,
            near_speech: true,
            near_start_s: 5.0,
            near_gain: 1.0,
            near_reverb: true,
            near_delay: 16,
            snr_db: Some(20.0),
            clip_sner_db: None,
            clip_model: ClipModel::Hard,
            tail_change_s: None,
            tail_change_amount: 0.5,
            tail_change_start: 0.25,
            far_wav: None,
            mic_wav: None,
            near_wav: None,
        }
    }
}

/// Postfilter stages; each one contributes one interference variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageMask {
    pub ns: bool,
    pub rs: bool,
    pub revs: bool,
    pub dpc: bool,
}

impl StageMask {
    pub const NONE: StageMask = StageMask {
        ns: false,
        rs: false,
        revs: false,
        dpc: false,
    };
    pub const ALL: StageMask = StageMask {
        ns: true,
        rs: true,
        revs: true,
        dpc: true,
    };

    pub fn any(&self) -> bool {
        self.ns || self.rs || self.revs
    }
}

impl FromStr for StageMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mask = StageMask::NONE;
        for tok in s.split([',', '+', '|']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_uppercase().as_str() {
                "NS" => mask.ns = true,
                "RS" => mask.rs = true,
                "REVS" => mask.revs = true,
                "DPC" => mask.dpc = true,
                "AEC" | "NONE" => {}
                "ALL" => mask = StageMask::ALL,
                other => return Err(Error::Config(format!("unknown postfilter stage '{other}'"))),
            }
        }
        if mask.dpc && !mask.revs {
            return Err(Error::Config("DPC modifies REVS and needs it enabled".into()));
        }
        Ok(mask)
    }
}

impl fmt::Display for StageMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.ns, "NS"), (self.rs, "RS"), (self.revs, "REVS"), (self.dpc, "DPC")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPowerMode {
    Scalar,
    PerBin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostfilterConfig {
    pub params: PostfilterParams,
    pub stages: StageMask,
    pub dpc_factor: f64,
    pub noise_alpha: f64,
    pub noise_init_frames: usize,
    pub reverb_smoothing: f64,
    pub early_ms: f64,
    pub tail_power: TailPowerMode,
}

impl Default for PostfilterConfig {
    fn default() -> Self {
        Self {
            params: PostfilterParams::default(),
            stages: StageMask {
                ns: true,
                rs: true,
                revs: true,
                dpc: false,
            },
            dpc_factor: 1.0,
            noise_alpha: crate::interference::NOISE_SMOOTHING,
            noise_init_frames: crate::interference::NOISE_INIT_FRAMES,
            reverb_smoothing: crate::interference::REVERB_SMOOTHING,
            early_ms: crate::interference::EARLY_LATE_BOUNDARY_S * 1e3,
            tail_power: TailPowerMode::Scalar,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub processed_wav: String,
    pub residual_wav: String,
    pub metrics_csv: String,
    pub encoding: WavEncoding,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            processed_wav: "processed.wav".into(),
            residual_wav: "residual.wav".into(),
            metrics_csv: "metrics.csv".into(),
            encoding: WavEncoding::Float32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scenario: ScenarioConfig,
    pub stft: FrameParams,
    pub aec_enabled: bool,
    pub aec: AdaptiveFilterConfig,
    pub dtd_enabled: bool,
    pub dtd: DtdParams,
    pub postfilter: PostfilterConfig,
    pub metrics: MetricParams,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            stft: FrameParams::default(),
            aec_enabled: true,
            aec: AdaptiveFilterConfig::new(VariantKind::Nlms, 1024),
            dtd_enabled: true,
            dtd: DtdParams::default(),
            postfilter: PostfilterConfig::default(),
            metrics: MetricParams::default(),
            output: OutputConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        let bad = |m: String| Err(Error::Config(m));
        if !(s.duration_s > 0.0) || !s.duration_s.is_finite() {
            return bad(format!("scenario.duration_s must be positive, got {}", s.duration_s));
        }
        if s.sample_rate == 0 {
            return bad("scenario.sample_rate must be positive".into());
        }
        if !(s.t60_s > 0.0) {
            return bad(format!("scenario.t60_s must be positive, got {}", s.t60_s));
        }
        if s.echo_path_len <= s.echo_delay {
            return bad("scenario.echo_path_len must exceed scenario.echo_delay".into());
        }
        if !(s.echo_gain >= 0.0) || !(s.near_gain >= 0.0) {
            return bad("scenario gains must be non-negative".into());
        }
        if !(s.near_start_s >= 0.0) {
            return bad("scenario.near_start_s must be non-negative".into());
        }
        if let Some(t) = s.tail_change_s {
            if !(t > 0.0 && t < s.duration_s) {
                return bad(format!("scenario.tail_change_s {t} lies outside the run"));
            }
        }
        if s.mic_wav.is_some() != s.far_wav.is_some() {
            return bad("scenario.far_wav and scenario.mic_wav must be given together".into());
        }
        self.stft.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.aec.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.dtd.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.postfilter
            .params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.metrics.validate().map_err(|e| Error::Config(e.to_string()))?;
        let st = self.postfilter.stages;
        if (st.rs || st.revs) && !self.aec_enabled {
            return bad("postfilter stages RS and REVS need aec.enabled = true".into());
        }
        if !(self.postfilter.noise_alpha > 0.0 && self.postfilter.noise_alpha < 1.0) {
            return bad("postfilter.noise_alpha must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.postfilter.reverb_smoothing) {
            return bad("postfilter.reverb_smoothing must lie in [0, 1)".into());
        }
        if !(self.postfilter.early_ms >= 0.0) || !(self.postfilter.dpc_factor >= 0.0) {
            return bad("postfilter.early_ms and postfilter.dpc_factor must be non-negative".into());
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&read_text(path.as_ref())?)?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line_no, key, value) in parse_lines(text)? {
            if key.starts_with("bench.") {
                continue;
            }
            self.set(&key, &value)
                .map_err(|e| Error::Config(format!("line {line_no}: {}", e_msg(e))))?;
        }
        Ok(())
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, name) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("key '{key}' has no section prefix")))?;
        match section {
            "scenario" => self.set_scenario(name, value),
            "stft" => match name {
                "frame_len" => {
                    self.stft = FrameParams::with_frame_len(parse(key, value)?);
                    Ok(())
                }
                _ => unknown(key),
            },
            "aec" => self.set_aec(key, name, value),
            "dtd" => {
                match name {
                    "enabled" => self.dtd_enabled = parse_bool(key, value)?,
                    "threshold" => self.dtd.threshold = parse(key, value)?,
                    "window" => self.dtd.window = parse(key, value)?,
                    "hangover" => self.dtd.hangover = parse(key, value)?,
                    _ => return unknown(key),
                }
                Ok(())
            }
            "postfilter" => self.set_postfilter(key, name, value),
            "metrics" => {
                let m = &mut self.metrics;
                match name {
                    "erle_window_s" => m.erle_window_s = parse(key, value)?,
                    "converged_fraction" => m.converged_fraction = parse(key, value)?,
                    "frame_s" => m.frame_s = parse(key, value)?,
                    "clamp_db" => m.clamp_db = parse(key, value)?,
                    "floor_db" => m.floor_db = parse(key, value)?,
                    "activity_threshold_db" => m.activity_threshold_db = parse(key, value)?,
                    _ => return unknown(key),
                }
                Ok(())
            }
            "output" => {
                let o = &mut self.output;
                match name {
                    "dir" => o.dir = Some(PathBuf::from(value)),
                    "processed_wav" => o.processed_wav = value.to_string(),
                    "residual_wav" => o.residual_wav = value.to_string(),
                    "metrics_csv" => o.metrics_csv = value.to_string(),
                    "encoding" => {
                        o.encoding = match value.to_ascii_lowercase().as_str() {
                            "pcm16" => WavEncoding::Pcm16,
                            "float32" => WavEncoding::Float32,
                            _ => return Err(Error::Config(format!("{key}: unknown encoding '{value}'"))),
                        }
                    }
                    _ => return unknown(key),
                }
                Ok(())
            }
            _ => unknown(key),
        }
    }

    fn set_scenario(&mut self, name: &str, value: &str) -> Result<()> {
        let key = format!("scenario.{name}");
        let key = key.as_str();
        let s = &mut self.scenario;
        match name {
            "name" => s.name = value.to_string(),
            "duration_s" => s.duration_s = parse(key, value)?,
            "sample_rate" => s.sample_rate = parse(key, value)?,
            "seed" => s.seed = parse(key, value)?,
            "far" => {
                s.far = match value.to_ascii_lowercase().as_str() {
                    "none" => FarSignal::None,
                    "white" => FarSignal::White,
                    "speech" => FarSignal::Speech,
                    _ => return Err(Error::Config(format!("{key}: expected none, white or speech"))),
                }
            }
            "t60" | "t60_s" => s.t60_s = parse(key, value)?,
            "echo_path" => {
                s.echo_path = match value.to_ascii_lowercase().as_str() {
                    "air" => EchoPathKind::Air,
                    "sparse" => EchoPathKind::Sparse,
                    _ => return Err(Error::Config(format!("{key}: expected air or sparse"))),
                }
            }
            "echo_path_len" => s.echo_path_len = parse(key, value)?,
            "echo_gain" => s.echo_gain = parse(key, value)?,
            "echo_delay" => s.echo_delay = parse(key, value)?,
            "sparse_active" => s.sparse_active = parse(key, value)?,
            "near" => s.near_speech = parse_bool(key, value)?,
            "near_start_s" => s.near_start_s = parse(key, value)?,
            "near_gain" => s.near_gain = parse(key, value)?,
            "near_reverb" => s.near_reverb = parse_bool(key, value)?,
            "near_delay" => s.near_delay = parse(key, value)?,
            "snr_db" => s.snr_db = parse_optional(key, value)?,
            "clip_sner_db" => s.clip_sner_db = parse_optional(key, value)?,
            "clip_model" => {
                s.clip_model = match value.to_ascii_lowercase().as_str() {
                    "hard" => ClipModel::Hard,
                    "soft" => ClipModel::Soft,
                    _ => return Err(Error::Config(format!("{key}: expected hard or soft"))),
                }
            }
            "tail_change_s" => s.tail_change_s = parse_optional(key, value)?,
            "tail_change_amount" => s.tail_change_amount = parse(key, value)?,
            "tail_change_start" => s.tail_change_start = parse(key, value)?,
            "far_wav" => s.far_wav = Some(PathBuf::from(value)),
            "mic_wav" => s.mic_wav = Some(PathBuf::from(value)),
            "near_wav" => s.near_wav = Some(PathBuf::from(value)),
            _ => return unknown(key),
        }
        Ok(())
    }

    fn set_aec(&mut self, key: &str, name: &str, value: &str) -> Result<()> {
        let a = &mut self.aec;
        match name {
            "enabled" => self.aec_enabled = parse_bool(key, value)?,
            "variant" => {
                let kind: VariantKind = value.parse()?;
                if kind != a.variant.kind() {
                    a.variant = FilterVariant::default_for(kind);
                }
            }
            "taps" => {
                let default_delta = a.delta == 1e-6 * a.taps as f64;
                a.taps = parse(key, value)?;
                if default_delta {
                    a.delta = 1e-6 * a.taps as f64;
                }
            }
            "mu" => a.mu = parse(key, value)?,
            "delta" => a.delta = parse(key, value)?,
            "lms_input_power" => match &mut a.variant {
                FilterVariant::Lms { input_power } => *input_power = parse(key, value)?,
                _ => return variant_mismatch(key, "lms"),
            },
            "fblms_smoothing" => match &mut a.variant {
                FilterVariant::Fblms { power_smoothing } => *power_smoothing = parse(key, value)?,
                _ => return variant_mismatch(key, "fblms"),
            },
            "rho" => match &mut a.variant {
                FilterVariant::Pnlms { rho, .. } | FilterVariant::Mpnlms { rho, .. } => *rho = parse(key, value)?,
                _ => return variant_mismatch(key, "pnlms or mpnlms"),
            },
            "delta_p" => match &mut a.variant {
                FilterVariant::Pnlms { delta_p, .. } | FilterVariant::Mpnlms { delta_p, .. } => {
                    *delta_p = parse(key, value)?
                }
                _ => return variant_mismatch(key, "pnlms or mpnlms"),
            },
            "mu_law" => match &mut a.variant {
                FilterVariant::Mpnlms { mu_law, .. } => *mu_law = parse(key, value)?,
                _ => return variant_mismatch(key, "mpnlms"),
            },
            "alpha" => match &mut a.variant {
                FilterVariant::Ipnlms { alpha } => *alpha = parse(key, value)?,
                _ => return variant_mismatch(key, "ipnlms"),
            },
            "apa_order" => match &mut a.variant {
                FilterVariant::Apa { order } => *order = parse(key, value)?,
                _ => return variant_mismatch(key, "apa"),
            },
            _ => return unknown(key),
        }
        Ok(())
    }

    fn set_postfilter(&mut self, key: &str, name: &str, value: &str) -> Result<()> {
        let p = &mut self.postfilter;
        match name {
            "beta" => p.params.beta = parse(key, value)?,
            "xi_min_db" => p.params.xi_min = 10f64.powf(parse::<f64>(key, value)? / 10.0),
            "g_min_db" => p.params.g_min = 10f64.powf(parse::<f64>(key, value)? / 10.0),
            "q_absent" => p.params.q_absent = parse(key, value)?,
            "stages" => p.stages = value.parse()?,
            "dpc_factor" => p.dpc_factor = parse(key, value)?,
            "noise_alpha" => p.noise_alpha = parse(key, value)?,
            "noise_init_frames" => p.noise_init_frames = parse(key, value)?,
            "reverb_smoothing" => p.reverb_smoothing = parse(key, value)?,
            "early_ms" => p.early_ms = parse(key, value)?,
            "tail_power" => {
                p.tail_power = match value.to_ascii_lowercase().as_str() {
                    "scalar" => TailPowerMode::Scalar,
                    "per_bin" => TailPowerMode::PerBin,
                    _ => return Err(Error::Config(format!("{key}: expected scalar or per_bin"))),
                }
            }
            _ => return unknown(key),
        }
        Ok(())
    }
}

fn e_msg(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Splits config text into `(line number, key, value)` triples.
pub(crate) fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn unknown<T>(key: &str) -> Result<T> {
    Err(Error::Config(format!("unknown key '{key}'")))
}

fn variant_mismatch<T>(key: &str, variant: &str) -> Result<T> {
    Err(Error::Config(format!("{key} only applies to {variant}; set aec.variant first")))
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value.to_ascii_lowercase().as_str() {
        "none" | "off" | "" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = PipelineConfig::from_text(
            "# run\nscenario.t60 = 0.4\naec.variant = apa\naec.apa_order = 2 # inline\npostfilter.stages = NS,RS\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.t60_s, 0.4);
        assert_eq!(cfg.aec.variant, FilterVariant::Apa { order: 2 });
        assert_eq!(cfg.postfilter.stages.to_string(), "NS,RS");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::from_text("scenario.bogus = 1").is_err());
        assert!(PipelineConfig::from_text("scenario.t60 = fast").is_err());
        assert!(PipelineConfig::from_text("no_section = 1").is_err());
        assert!(PipelineConfig::from_text("aec.rho = 0.1").is_err());
        assert!("NS,XS".parse::<StageMask>().is_err());
    }

    #[test]
    fn rs_needs_aec() {
        let cfg = PipelineConfig::from_text("aec.enabled = false\npostfilter.stages = NS,RS").unwrap();
        assert!(cfg.validate().is_err());
    }
}
