//! Synthetic test scenarios with an exact decomposition of the microphone
//! signal into echo, early and late near-end speech, and noise.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{
    apply_nonlinearity, convolve, generate_speech_like, generate_sparse_path, generate_synthetic_air,
    generate_white_noise, level_for_sner, mean_square, perturb_tail, read_wav, write_wav, AudioSignal,
    ImpulseResponse, Nonlinearity, WavEncoding,
};

use super::config::{ClipModel, EchoPathKind, FarSignal, ScenarioConfig};

/// Independent seed for one random source of a scenario.
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEED_FAR: u64 = 1;
const SEED_ECHO_PATH: u64 = 2;
const SEED_NEAR: u64 = 3;
const SEED_NEAR_AIR: u64 = 4;
const SEED_NOISE: u64 = 5;
const SEED_TAIL: u64 = 6;

/// Echo path in force from `start` (in samples) on.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub start: usize,
    pub path: ImpulseResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub far: AudioSignal,
    pub mic: AudioSignal,
    /// Ground-truth components; `None` for recorded input.
    pub truth: Option<Decomposition>,
    /// Clean target used for speech metrics when no decomposition exists.
    pub reference: Option<AudioSignal>,
}

/// `mic = echo + near_early + near_late + noise`, exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub echo: AudioSignal,
    pub near_early: AudioSignal,
    pub near_late: AudioSignal,
    pub noise: AudioSignal,
    pub echo_paths: Vec<PathSegment>,
    pub near_air: Option<ImpulseResponse>,
    pub has_near: bool,
}

impl Decomposition {
    pub fn echo_path_at(&self, sample: usize) -> &ImpulseResponse {
        let seg = self
            .echo_paths
            .iter()
            .rev()
            .find(|s| s.start <= sample)
            .unwrap_or(&self.echo_paths[0]);
        &seg.path
    }
}

fn zeros(n: usize, fs: u32) -> AudioSignal {
    AudioSignal::zeros(n, fs)
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig, early_ms: f64) -> Result<Self> {
        if let (Some(far), Some(mic)) = (&cfg.far_wav, &cfg.mic_wav) {
            return Self::load(far, mic, cfg.near_wav.as_deref());
        }
        Self::synthesize(cfg, early_ms)
    }

    fn load(far: &Path, mic: &Path, near: Option<&Path>) -> Result<Self> {
        let far = read_wav(far)?;
        let mic = read_wav(mic)?;
        crate::signal::check_rates(far.sample_rate(), mic.sample_rate())?;
        if far.len() != mic.len() {
            return Err(Error::LengthMismatch(far.len(), mic.len()));
        }
        let reference = match near {
            Some(p) => {
                let r = read_wav(p)?;
                crate::signal::check_rates(r.sample_rate(), mic.sample_rate())?;
                if r.len() != mic.len() {
                    return Err(Error::LengthMismatch(r.len(), mic.len()));
                }
                Some(r)
            }
            None => None,
        };
        Ok(Self {
            far,
            mic,
            truth: None,
            reference,
        })
    }

    pub fn synthesize(cfg: &ScenarioConfig, early_ms: f64) -> Result<Self> {
        let fs = cfg.sample_rate;
        let n = (cfg.duration_s * fs as f64).round() as usize;
        let far = match cfg.far {
            FarSignal::None => zeros(n, fs),
            FarSignal::White => generate_white_noise(cfg.duration_s, fs, sub_seed(cfg.seed, SEED_FAR))?,
            FarSignal::Speech => generate_speech_like(cfg.duration_s, fs, sub_seed(cfg.seed, SEED_FAR))?,
        };

        let path = match cfg.echo_path {
            EchoPathKind::Air => generate_synthetic_air(
                cfg.t60_s,
                cfg.echo_delay,
                cfg.echo_path_len,
                fs,
                sub_seed(cfg.seed, SEED_ECHO_PATH),
            )?,
            EchoPathKind::Sparse => generate_sparse_path(
                cfg.echo_path_len,
                cfg.sparse_active,
                fs,
                sub_seed(cfg.seed, SEED_ECHO_PATH),
            )?,
        }
        .scaled(cfg.echo_gain);

        let loudspeaker = match (cfg.clip_sner_db, cfg.far) {
            (Some(sner), f) if f != FarSignal::None => {
                let model = |level| match cfg.clip_model {
                    ClipModel::Hard => Nonlinearity::HardClip(level),
                    ClipModel::Soft => Nonlinearity::SoftSaturation(level),
                };
                let level = level_for_sner(&far, model(1.0), sner)?;
                apply_nonlinearity(&far, model(level))?
            }
            _ => far.clone(),
        };

        let mut echo_paths = vec![PathSegment {
            start: 0,
            path: path.clone(),
        }];
        let mut echo = convolve(&loudspeaker, &path)?;
        if let Some(t) = cfg.tail_change_s {
            let changed = perturb_tail(
                &path,
                cfg.tail_change_start,
                cfg.tail_change_amount,
                sub_seed(cfg.seed, SEED_TAIL),
            )?;
            let after = convolve(&loudspeaker, &changed)?;
            let at = ((t * fs as f64).round() as usize).min(n);
            let mut spliced = echo.samples()[..at].to_vec();
            spliced.extend_from_slice(&after.samples()[at..]);
            echo = AudioSignal::new(spliced, fs)?;
            echo_paths.push(PathSegment { start: at, path: changed });
        }

        let (near_early, near_late, near_air) = if cfg.near_speech {
            let start = ((cfg.near_start_s * fs as f64).round() as usize).min(n);
            let mut dry = vec![0.0; n];
            if start < n {
                let speech =
                    generate_speech_like((n - start) as f64 / fs as f64, fs, sub_seed(cfg.seed, SEED_NEAR))?;
                for (d, s) in dry[start..].iter_mut().zip(speech.samples()) {
                    *d = s * cfg.near_gain;
                }
            }
            let dry = AudioSignal::new(dry, fs)?;
            if cfg.near_reverb {
                let early = (early_ms * 1e-3 * fs as f64).round() as usize;
                let len = ((cfg.t60_s * fs as f64) as usize).max(cfg.near_delay + early + 64);
                let air = generate_synthetic_air(cfg.t60_s, cfg.near_delay, len, fs, sub_seed(cfg.seed, SEED_NEAR_AIR))?;
                let (head, tail) = air.split_at(cfg.near_delay + early);
                (convolve(&dry, &head)?, convolve(&dry, &tail)?, Some(air))
            } else {
                (dry, zeros(n, fs), None)
            }
        } else {
            (zeros(n, fs), zeros(n, fs), None)
        };

        let noise = match cfg.snr_db {
            Some(snr) => {
                let raw = generate_white_noise(cfg.duration_s, fs, sub_seed(cfg.seed, SEED_NOISE))?;
                let near_power = if cfg.near_speech {
                    let start = ((cfg.near_start_s * fs as f64).round() as usize).min(n.saturating_sub(1));
                    let near: Vec<f64> = near_early.samples()[start..]
                        .iter()
                        .zip(&near_late.samples()[start..])
                        .map(|(a, b)| a + b)
                        .collect();
                    mean_square(&near)
                } else {
                    0.0
                };
                // near-end speech that never starts within the run counts as absent
                let target_power = if near_power > 0.0 { near_power } else { echo.power() };
                if target_power <= 0.0 {
                    return Err(Error::ZeroPower("noise reference"));
                }
                let gain = (target_power / (raw.power() * 10f64.powf(snr / 10.0))).sqrt();
                raw.scaled(gain)
            }
            None => zeros(n, fs),
        };

        let mic = echo.add(&near_early)?.add(&near_late)?.add(&noise)?;
        Ok(Self {
            far,
            mic,
            reference: None,
            truth: Some(Decomposition {
                echo,
                near_early,
                near_late,
                noise,
                echo_paths,
                near_air,
                has_near: cfg.near_speech,
            }),
        })
    }

    /// Clean speech target: the early near-end component when synthesised.
    pub fn target(&self) -> Option<&AudioSignal> {
        match &self.truth {
            Some(t) if t.has_near => Some(&t.near_early),
            Some(_) => None,
            None => self.reference.as_ref(),
        }
    }

    /// Writes the scenario signals into `dir`; returns the file names.
    pub fn write_wavs(&self, dir: &Path, encoding: WavEncoding) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut files: Vec<(&str, AudioSignal)> = vec![("far.wav", self.far.clone()), ("mic.wav", self.mic.clone())];
        if let Some(t) = &self.truth {
            files.push(("echo.wav", t.echo.clone()));
            files.push(("near.wav", t.near_early.add(&t.near_late)?));
            files.push(("near_early.wav", t.near_early.clone()));
            files.push(("noise.wav", t.noise.clone()));
        }
        for (name, sig) in &files {
            write_wav(dir.join(name), sig, encoding)?;
        }
        Ok(files.into_iter().map(|(n, _)| n.to_string()).collect())
    }
}
