//! Audio containers, WAV I/O and deterministic synthesis of scenario
//! ingredients: noise, speech-like excitation, impulse responses,
//! loudspeaker nonlinearity and SNR-controlled mixing.
//!
//! Every generator takes an explicit seed; identical arguments always give
//! identical output.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use realfft::RealFftPlanner;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Standard deviation of [`generate_white_noise`].
pub const WHITE_NOISE_STD: f64 = 0.1;

/// Standard deviation of the reverberant tail directly after the direct path
/// in [`generate_synthetic_air`], relative to the unit direct impulse.
pub const AIR_TAIL_LEVEL: f64 = 0.05;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square over the whole signal.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum; both signals must share rate and length.
    pub fn add(&self, other: &AudioSignal) -> Result<Self> {
        check_rates(self.sample_rate, other.sample_rate)?;
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn sub(&self, other: &AudioSignal) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub(crate) fn check_rates(a: u32, b: u32) -> Result<()> {
    if a != b {
        return Err(Error::RateMismatch(a, b));
    }
    Ok(())
}

/// A loudspeaker-to-microphone (or source-to-microphone) impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    taps: Vec<f64>,
    sample_rate: u32,
    direct_delay: usize,
}

impl ImpulseResponse {
    pub fn new(taps: Vec<f64>, sample_rate: u32, direct_delay: usize) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if direct_delay >= taps.len() {
            return Err(Error::InvalidParameter(format!(
                "direct delay {} outside response of {} taps",
                direct_delay,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            taps,
            sample_rate,
            direct_delay,
        })
    }

    /// Response with the direct path at the largest-magnitude tap.
    pub fn from_taps(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let peak = taps
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        Self::new(taps, sample_rate, peak)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn direct_delay(&self) -> usize {
        self.direct_delay
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * gain).collect(),
            sample_rate: self.sample_rate,
            direct_delay: self.direct_delay,
        }
    }

    /// Splits into (taps before `boundary`, taps from `boundary` on), both
    /// keeping the full length so they sum back to `self`.
    pub fn split_at(&self, boundary: usize) -> (ImpulseResponse, ImpulseResponse) {
        let b = boundary.min(self.taps.len());
        let mut head = self.taps.clone();
        let mut tail = self.taps.clone();
        head[b..].iter_mut().for_each(|t| *t = 0.0);
        tail[..b].iter_mut().for_each(|t| *t = 0.0);
        (
            ImpulseResponse {
                taps: head,
                ..self.clone()
            },
            ImpulseResponse {
                taps: tail,
                ..self.clone()
            },
        )
    }
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::MultiChannel(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {}",
                match format {
                    hound::SampleFormat::Int => "integer",
                    hound::SampleFormat::Float => "float",
                }
            )))
        }
    };
    AudioSignal::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &signal.samples {
        let res = match encoding {
            WavEncoding::Pcm16 => writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavEncoding::Float32 => writer.write_sample(s as f32),
        };
        res.map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported wav format".into()),
        other => Error::Io {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

fn sample_count(duration_s: f64, sample_rate: u32) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {duration_s}")));
    }
    if sample_rate == 0 {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    Ok((duration_s * sample_rate as f64).round() as usize)
}

/// Zero-mean Gaussian noise with standard deviation [`WHITE_NOISE_STD`].
pub fn generate_white_noise(duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioSignal> {
    let n = sample_count(duration_s, sample_rate)?;
    let mut rng = seeded_rng(seed, 1);
    let dist = Normal::new(0.0, WHITE_NOISE_STD).expect("valid normal");
    let samples = (0..n).map(|_| dist.sample(&mut rng)).collect();
    AudioSignal::new(samples, sample_rate)
}

/// Polack-style synthetic room response: unit direct impulse at
/// `direct_delay`, followed by Gaussian noise under the amplitude envelope
/// `exp(-3 ln(10) t / t60)`.
pub fn generate_synthetic_air(
    t60_s: f64,
    direct_delay: usize,
    length: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<ImpulseResponse> {
    if !(t60_s > 0.0) || !t60_s.is_finite() {
        return Err(Error::InvalidParameter(format!("t60 must be positive, got {t60_s}")));
    }
    if length <= direct_delay {
        return Err(Error::InvalidParameter(format!(
            "length {length} must exceed direct delay {direct_delay}"
        )));
    }
    let mut rng = seeded_rng(seed, 2);
    let mut taps = vec![0.0; length];
    taps[direct_delay] = 1.0;
    for (n, tap) in taps.iter_mut().enumerate().skip(direct_delay + 1) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *tap = AIR_TAIL_LEVEL * z * decay_envelope(n - direct_delay, t60_s, sample_rate);
    }
    ImpulseResponse::new(taps, sample_rate, direct_delay)
}

fn decay_envelope(lag: usize, t60_s: f64, sample_rate: u32) -> f64 {
    let t = lag as f64 / sample_rate as f64;
    (-3.0 * std::f64::consts::LN_10 * t / t60_s).exp()
}

/// Sparse response with `active` non-zero taps at distinct random positions.
/// The largest tap sits first; amplitudes are Gaussian with a decaying scale.
pub fn generate_sparse_path(length: usize, active: usize, sample_rate: u32, seed: u64) -> Result<ImpulseResponse> {
    if active == 0 || active > length {
        return Err(Error::InvalidParameter(format!(
            "need 1..={length} active taps, got {active}"
        )));
    }
    let mut rng = seeded_rng(seed, 3);
    let mut positions = Vec::with_capacity(active);
    while positions.len() < active {
        let p = rng.random_range(0..length);
        if !positions.contains(&p) {
            positions.push(p);
        }
    }
    positions.sort_unstable();
    let mut taps = vec![0.0; length];
    for (i, &p) in positions.iter().enumerate() {
        if i == 0 {
            taps[p] = 1.0;
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            taps[p] = 0.5 * z * 0.8f64.powi(i as i32);
        }
    }
    ImpulseResponse::new(taps, sample_rate, positions[0])
}

/// Deterministic speech-like signal: syllables of voiced harmonic sound
/// shaped by random formants, occasional fricative noise bursts, and pauses.
/// Scaled to an overall RMS of 0.05.
pub fn generate_speech_like(duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioSignal> {
    let n = sample_count(duration_s, sample_rate)?;
    let fs = sample_rate as f64;
    let mut rng = seeded_rng(seed, 4);
    let mut out = vec![0.0; n];
    let mut cursor = 0usize;
    let mut phases = vec![0.0f64; 64];
    loop {
        let pause_s = if rng.random_bool(0.15) {
            rng.random_range(0.4..0.9)
        } else {
            rng.random_range(0.05..0.25)
        };
        cursor += (pause_s * fs) as usize;
        if cursor >= n {
            break;
        }
        let len = ((rng.random_range(0.12..0.35)) * fs) as usize;
        let end = (cursor + len).min(n);
        let level: f64 = rng.random_range(0.4..1.0);
        if rng.random_bool(0.8) {
            let f0_start: f64 = rng.random_range(95.0..210.0);
            let glide: f64 = rng.random_range(0.85..1.15);
            let formants = [
                (rng.random_range(300.0..850.0), 90.0, 1.0),
                (rng.random_range(850.0..2300.0), 130.0, 0.5),
                (rng.random_range(2300.0..3200.0), 200.0, 0.25),
            ];
            let f0_mid = f0_start * (1.0 + glide) / 2.0;
            let n_harm = ((0.3 * fs / f0_mid) as usize).clamp(1, phases.len());
            let amps: Vec<f64> = (1..=n_harm)
                .map(|k| {
                    let f = k as f64 * f0_mid;
                    let shape: f64 = formants
                        .iter()
                        .map(|&(fc, bw, g)| g / (1.0 + ((f - fc) / bw).powi(2)))
                        .sum();
                    (shape + 0.02) / (k as f64).sqrt()
                })
                .collect();
            for p in phases.iter_mut() {
                *p = rng.random_range(0.0..std::f64::consts::TAU);
            }
            for (j, sample) in out[cursor..end].iter_mut().enumerate() {
                let tau = j as f64 / len as f64;
                let f0 = f0_start * (1.0 + (glide - 1.0) * tau);
                let env = level * (std::f64::consts::PI * tau).sin();
                let mut acc = 0.0;
                for (k, (&a, ph)) in amps.iter().zip(phases.iter_mut()).enumerate() {
                    *ph += std::f64::consts::TAU * (k + 1) as f64 * f0 / fs;
                    if *ph > std::f64::consts::TAU {
                        *ph -= std::f64::consts::TAU;
                    }
                    acc += a * ph.sin();
                }
                let breath: f64 = StandardNormal.sample(&mut rng);
                *sample = env * (acc + 0.01 * breath);
            }
        } else {
            let mut prev = 0.0;
            for (i, o) in out.iter_mut().enumerate().take(end).skip(cursor) {
                let tau = (i - cursor) as f64 / len as f64;
                let z: f64 = StandardNormal.sample(&mut rng);
                *o = 0.3 * level * (std::f64::consts::PI * tau).sin() * (z - prev);
                prev = z;
            }
        }
        cursor = end;
        if cursor >= n {
            break;
        }
    }
    let rms = mean_square(&out).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|s| *s *= 0.05 / rms);
    }
    AudioSignal::new(out, sample_rate)
}

// ---------------------------------------------------------------------------
// Processing
// ---------------------------------------------------------------------------

/// Linear convolution truncated to the input length.
pub fn convolve(signal: &AudioSignal, air: &ImpulseResponse) -> Result<AudioSignal> {
    check_rates(signal.sample_rate, air.sample_rate)?;
    Ok(AudioSignal {
        samples: convolve_truncated(&signal.samples, &air.taps),
        sample_rate: signal.sample_rate,
    })
}

/// `y[n] = sum_k h[k] x[n-k]` for `n < x.len()`.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    if h.len() <= 64 || x.len() <= 64 {
        return direct_convolution(x, h);
    }
    fft_convolution(x, h)
}

fn direct_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, hk)| hk * x[n - k])
                .sum()
        })
        .collect()
}

fn fft_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    let fft_len = (2 * h.len()).next_power_of_two().max(1024);
    let block = fft_len - h.len() + 1;
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut h_spec = fwd.make_output_vec();
    let mut buf = fwd.make_input_vec();
    buf[..h.len()].copy_from_slice(h);
    fwd.process(&mut buf, &mut h_spec).expect("fft sizes match");

    let mut out = vec![0.0; x.len()];
    let mut spec = fwd.make_output_vec();
    let scale = 1.0 / fft_len as f64;
    for start in (0..x.len()).step_by(block) {
        let end = (start + block).min(x.len());
        buf.iter_mut().for_each(|v| *v = 0.0);
        buf[..end - start].copy_from_slice(&x[start..end]);
        fwd.process(&mut buf, &mut spec).expect("fft sizes match");
        spec.iter_mut().zip(&h_spec).for_each(|(s, hs)| *s *= hs);
        spec[0].im = 0.0;
        spec[fft_len / 2].im = 0.0;
        inv.process(&mut spec, &mut buf).expect("fft sizes match");
        for (o, v) in out[start..].iter_mut().zip(&buf) {
            *o += v * scale;
        }
    }
    out
}

/// Memoryless loudspeaker distortion model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    None,
    HardClip(f64),
    SoftSaturation(f64),
}

impl Nonlinearity {
    pub fn apply_sample(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::None => x,
            Nonlinearity::HardClip(level) => x.clamp(-level, level),
            Nonlinearity::SoftSaturation(level) => level * (x / level).tanh(),
        }
    }

    fn with_level(&self, level: f64) -> Self {
        match self {
            Nonlinearity::None => Nonlinearity::None,
            Nonlinearity::HardClip(_) => Nonlinearity::HardClip(level),
            Nonlinearity::SoftSaturation(_) => Nonlinearity::SoftSaturation(level),
        }
    }
}

pub fn apply_nonlinearity(signal: &AudioSignal, model: Nonlinearity) -> Result<AudioSignal> {
    match model {
        Nonlinearity::HardClip(level) | Nonlinearity::SoftSaturation(level) if !(level > 0.0) => {
            Err(Error::InvalidParameter(format!("nonlinearity level must be positive, got {level}")))
        }
        _ => Ok(AudioSignal {
            samples: signal.samples.iter().map(|&x| model.apply_sample(x)).collect(),
            sample_rate: signal.sample_rate,
        }),
    }
}

/// Signal-to-nonlinear-echo ratio: `10 log10(P(linear) / P(nonlinear - linear))`.
pub fn sner_db(linear: &AudioSignal, nonlinear: &AudioSignal) -> Result<f64> {
    let diff = nonlinear.sub(linear)?;
    Ok(10.0 * (linear.power() / diff.power().max(1e-300)).log10())
}

/// Level of `model` that makes the distortion of `signal` sit `target_db`
/// below the signal (bisection on the undistorted/distortion power ratio).
pub fn level_for_sner(signal: &AudioSignal, model: Nonlinearity, target_db: f64) -> Result<f64> {
    if matches!(model, Nonlinearity::None) {
        return Err(Error::InvalidParameter("no nonlinearity to calibrate".into()));
    }
    let peak = signal.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::ZeroPower("signal"));
    }
    let p = signal.power();
    let ratio_db = |level: f64| {
        let m = model.with_level(level);
        let d: f64 = signal
            .samples
            .iter()
            .map(|&x| (m.apply_sample(x) - x).powi(2))
            .sum::<f64>()
            / signal.len() as f64;
        10.0 * (p / d.max(1e-300)).log10()
    };
    // ratio grows with level
    let (mut lo, mut hi) = (peak * 1e-4, peak * 4.0);
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if ratio_db(mid) < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Scales `interferer` (looped or truncated to the target length) so that
/// `10 log10(P_target / P_scaled) = snr_db`.
pub fn scale_to_snr(target: &AudioSignal, interferer: &AudioSignal, snr_db: f64) -> Result<AudioSignal> {
    check_rates(target.sample_rate, interferer.sample_rate)?;
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("snr must be finite, got {snr_db}")));
    }
    if interferer.is_empty() {
        return Err(Error::ZeroPower("interferer"));
    }
    let fitted: Vec<f64> = interferer.samples.iter().copied().cycle().take(target.len()).collect();
    let p_i = mean_square(&fitted);
    if p_i <= 0.0 {
        return Err(Error::ZeroPower("interferer"));
    }
    let p_t = target.power();
    if p_t <= 0.0 {
        return Err(Error::ZeroPower("target"));
    }
    let gain = (p_t / (p_i * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(AudioSignal {
        samples: fitted.into_iter().map(|v| v * gain).collect(),
        sample_rate: target.sample_rate,
    })
}

pub fn mix_at_snr(target: &AudioSignal, interferer: &AudioSignal, snr_db: f64) -> Result<AudioSignal> {
    target.add(&scale_to_snr(target, interferer, snr_db)?)
}

/// Redraws the part of `air` from `start_fraction * len` on with fresh noise
/// under the same local energy envelope and blends it with the old taps.
/// The blend is power-normalised so the envelope is kept for every `amount`.
pub fn perturb_tail(air: &ImpulseResponse, start_fraction: f64, amount: f64, seed: u64) -> Result<ImpulseResponse> {
    if !(start_fraction > 0.0 && start_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "start fraction must lie in (0, 1), got {start_fraction}"
        )));
    }
    if !(amount >= 0.0) || !amount.is_finite() {
        return Err(Error::InvalidParameter(format!("amount must be non-negative, got {amount}")));
    }
    let len = air.taps.len();
    let start = ((start_fraction * len as f64) as usize).max(air.direct_delay + 1);
    let mut taps = air.taps.clone();
    if start >= len {
        return Ok(air.clone());
    }

    const HALF_WINDOW: usize = 64;
    let mut prefix = vec![0.0; len + 1];
    for (i, t) in air.taps.iter().enumerate() {
        let e = if i == air.direct_delay { 0.0 } else { t * t };
        prefix[i + 1] = prefix[i] + e;
    }
    let norm = ((1.0 - amount).powi(2) + amount.powi(2)).sqrt();
    let mut rng = seeded_rng(seed, 5);
    for (n, tap) in taps.iter_mut().enumerate().skip(start) {
        let lo = n.saturating_sub(HALF_WINDOW).max(air.direct_delay + 1);
        let hi = (n + HALF_WINDOW + 1).min(len);
        let env = ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).sqrt();
        let z: f64 = StandardNormal.sample(&mut rng);
        *tap = ((1.0 - amount) * *tap + amount * env * z) / norm;
    }
    ImpulseResponse::new(taps, air.sample_rate, air.direct_delay)
}
