//! Objective measures computed against the synthetic ground truth.

use crate::error::{Error, Result};
use crate::signal::{check_rates, AudioSignal};
use crate::stft::{FrameParams, Stft};

/// Echo power below which an ERLE window is skipped (-60 dBFS).
pub const ERLE_MIN_ECHO_POWER: f64 = 1e-6;
const POWER_EPS: f64 = 1e-20;
/// Per-frame LSD floor relative to the largest bin power.
pub const LSD_FLOOR_DB: f64 = -50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub erle_window_s: f64,
    /// Trailing fraction of the run averaged into the mean ERLE.
    pub converged_fraction: f64,
    pub frame_s: f64,
    pub clamp_db: f64,
    pub floor_db: f64,
    /// Frames more than this far below the loudest reference frame are inactive.
    pub activity_threshold_db: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            erle_window_s: 0.25,
            converged_fraction: 0.25,
            frame_s: 0.032,
            clamp_db: 35.0,
            floor_db: -10.0,
            activity_threshold_db: 40.0,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.erle_window_s > 0.0) || !(self.frame_s > 0.0) {
            return Err(Error::InvalidParameter("metric window lengths must be positive".into()));
        }
        if !(self.converged_fraction > 0.0 && self.converged_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "converged fraction must lie in (0, 1], got {}",
                self.converged_fraction
            )));
        }
        if !(self.floor_db < self.clamp_db) {
            return Err(Error::InvalidParameter("segmental clamp range is empty".into()));
        }
        if !(self.activity_threshold_db > 0.0) {
            return Err(Error::InvalidParameter("activity threshold must be positive".into()));
        }
        Ok(())
    }

    fn samples(seconds: f64, sample_rate: u32) -> usize {
        ((seconds * sample_rate as f64).round() as usize).max(1)
    }
}

/// Windowed ERLE; `None` marks windows with too little echo.
#[derive(Debug, Clone, PartialEq)]
pub struct ErleTrace {
    pub window_len: usize,
    pub values: Vec<Option<f64>>,
    pub mean_db: f64,
}

impl ErleTrace {
    pub fn window_start_s(&self, index: usize, sample_rate: u32) -> f64 {
        (index * self.window_len) as f64 / sample_rate as f64
    }

    pub fn window_at(&self, time_s: f64, sample_rate: u32) -> usize {
        (time_s * sample_rate as f64 / self.window_len as f64).floor() as usize
    }
}

fn check_pair(a: &AudioSignal, b: &AudioSignal) -> Result<()> {
    check_rates(a.sample_rate(), b.sample_rate())?;
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// `10 log10(P_echo / P_residual)` per window, from the isolated echo and
/// what is left of it after processing. The mean covers the trailing
/// `converged_fraction` of the windows.
pub fn erle(echo: &AudioSignal, residual: &AudioSignal, params: &MetricParams) -> Result<ErleTrace> {
    check_pair(echo, residual)?;
    params.validate()?;
    let w = MetricParams::samples(params.erle_window_s, echo.sample_rate());
    let values: Vec<Option<f64>> = echo
        .samples()
        .chunks(w)
        .zip(residual.samples().chunks(w))
        .filter(|(e, _)| e.len() == w)
        .map(|(e, r)| {
            let pe = power(e);
            (pe >= ERLE_MIN_ECHO_POWER).then(|| 10.0 * (pe / power(r).max(POWER_EPS)).log10())
        })
        .collect();
    let start = values.len() - ((values.len() as f64 * params.converged_fraction).round() as usize).min(values.len());
    let tail: Vec<f64> = values[start..].iter().flatten().copied().collect();
    let mean_db = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Ok(ErleTrace {
        window_len: w,
        values,
        mean_db,
    })
}

fn active_frames(reference: &[f64], frame: usize, threshold_db: f64) -> Vec<bool> {
    let energies: Vec<f64> = reference.chunks_exact(frame).map(|c| c.iter().map(|v| v * v).sum()).collect();
    let max = energies.iter().fold(0.0f64, |m, &e| m.max(e));
    let floor = max * 10f64.powf(-threshold_db / 10.0);
    energies.iter().map(|&e| max > 0.0 && e >= floor).collect()
}

fn segmental(reference: &AudioSignal, error: &[f64], params: &MetricParams) -> Result<f64> {
    params.validate()?;
    let frame = MetricParams::samples(params.frame_s, reference.sample_rate());
    let active = active_frames(reference.samples(), frame, params.activity_threshold_db);
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((r, e), &on) in reference
        .samples()
        .chunks_exact(frame)
        .zip(error.chunks_exact(frame))
        .zip(&active)
    {
        if !on {
            continue;
        }
        let pr: f64 = r.iter().map(|v| v * v).sum();
        let pe: f64 = e.iter().map(|v| v * v).sum();
        let db = if pe == 0.0 {
            params.clamp_db
        } else {
            10.0 * (pr / pe).log10()
        };
        sum += db.clamp(params.floor_db, params.clamp_db);
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoActiveFrames);
    }
    Ok(sum / count as f64)
}

/// Mean clamped per-frame SNR of `processed` against `reference` over the
/// reference-active frames.
pub fn segmental_snr(reference: &AudioSignal, processed: &AudioSignal, params: &MetricParams) -> Result<f64> {
    check_pair(reference, processed)?;
    let err: Vec<f64> = processed
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(p, r)| p - r)
        .collect();
    segmental(reference, &err, params)
}

/// As [`segmental_snr`] with the error replaced by an isolated residual
/// interference component.
pub fn segmental_sir(reference: &AudioSignal, interference: &AudioSignal, params: &MetricParams) -> Result<f64> {
    check_pair(reference, interference)?;
    segmental(reference, interference.samples(), params)
}

/// Mean over active frames of the RMS (over bins) dB difference between the
/// two power spectra. Floors and activity are taken from both signals, so
/// the measure is symmetric.
pub fn lsd(reference: &AudioSignal, processed: &AudioSignal, frame: FrameParams, activity_threshold_db: f64) -> Result<f64> {
    check_pair(reference, processed)?;
    let stft = Stft::new(frame)?;
    let a = stft.analyze(reference)?;
    let b = stft.analyze(processed)?;
    let energy = |s: &crate::stft::Spectrogram| -> Vec<f64> {
        s.frames().map(|f| f.iter().map(|c| c.norm_sqr()).sum()).collect()
    };
    let (ea, eb) = (energy(&a), energy(&b));
    let rel = 10f64.powf(-activity_threshold_db / 10.0);
    let max_a = ea.iter().fold(0.0f64, |m, &e| m.max(e));
    let max_b = eb.iter().fold(0.0f64, |m, &e| m.max(e));
    let floor_rel = 10f64.powf(LSD_FLOOR_DB / 10.0);

    let mut sum = 0.0;
    let mut count = 0usize;
    for l in 0..a.n_frames() {
        let on_a = max_a > 0.0 && ea[l] >= rel * max_a;
        let on_b = max_b > 0.0 && eb[l] >= rel * max_b;
        if !(on_a || on_b) {
            continue;
        }
        let pa = a.power(l);
        let pb = b.power(l);
        let peak = pa.iter().chain(&pb).fold(0.0f64, |m, &v| m.max(v));
        let eps = floor_rel * peak;
        let ms = pa
            .iter()
            .zip(&pb)
            .map(|(&x, &y)| (10.0 * (x.max(eps) / y.max(eps)).log10()).powi(2))
            .sum::<f64>()
            / pa.len() as f64;
        sum += ms.sqrt();
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub erle: Option<ErleTrace>,
    pub mean_erle_db: f64,
    pub seg_snr_db: f64,
    pub seg_sir_db: f64,
    pub lsd_db: f64,
    /// `(time in seconds, misalignment in dB)` samples taken during adaptation.
    pub misalignment_trace: Vec<(f64, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::generate_white_noise;

    #[test]
    fn erle_identity_and_scaling() {
        let e = generate_white_noise(2.0, 16_000, 1).unwrap();
        let p = MetricParams::default();
        let t = erle(&e, &e, &p).unwrap();
        assert!(t.values.iter().flatten().all(|v| v.abs() < 1e-12));
        let t = erle(&e, &e.scaled(0.1), &p).unwrap();
        assert!(t.values.iter().flatten().all(|v| (v - 20.0).abs() < 1e-9));
        assert!((t.mean_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn silent_echo_windows_are_skipped() {
        let p = MetricParams::default();
        let e = AudioSignal::zeros(16_000, 16_000);
        let t = erle(&e, &e, &p).unwrap();
        assert!(t.values.iter().all(Option::is_none));
        assert!(t.mean_db.is_nan());
    }
}
