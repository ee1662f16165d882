//! Spectral variance estimates of the interferences the postfilter removes:
//! stationary background noise, late residual echo beyond the adaptive
//! filter, and late reverberation of the near-end speech. Reverberation
//! time comes from the identified echo path.

use crate::error::{Error, Result};
use crate::signal::ImpulseResponse;

pub const NOISE_SMOOTHING: f64 = 0.98;
pub const NOISE_INIT_FRAMES: usize = 10;
/// Bins whose speech presence probability is below this are updated.
pub const NOISE_UPDATE_MAX_PRESENCE: f64 = 0.1;
pub const REVERB_SMOOTHING: f64 = 0.7;
/// Early/late boundary in seconds.
pub const EARLY_LATE_BOUNDARY_S: f64 = 0.048;

const FIT_UPPER_DB: f64 = -5.0;
const FIT_LOWER_DB: f64 = -25.0;
const MIN_FIT_TAPS: usize = 32;
/// RMS deviation of the Schroeder curve from its line fit above which the
/// decay is not considered exponential.
const MAX_FIT_RMS_DB: f64 = 1.0;
const ENVELOPE_BLOCK: usize = 32;
/// Smallest fitted fall across the tail for the envelope estimate to count.
const ENVELOPE_MIN_DROP_DB: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverbModel {
    pub t60_s: f64,
    /// `3 ln(10) / t60`, nepers per second.
    pub decay_rate: f64,
    /// Power decay per STFT frame, `exp(-2 decay_rate hop / fs)`.
    pub frame_decay: f64,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ReverbModel {
    pub fn new(t60_s: f64, hop: usize, sample_rate: u32) -> Result<Self> {
        if !(t60_s > 0.0) || !t60_s.is_finite() {
            return Err(Error::InvalidParameter(format!("t60 must be positive, got {t60_s}")));
        }
        if hop == 0 || sample_rate == 0 {
            return Err(Error::InvalidParameter("hop and sample rate must be positive".into()));
        }
        let decay_rate = 3.0 * std::f64::consts::LN_10 / t60_s;
        let frame_decay = (-2.0 * decay_rate * hop as f64 / sample_rate as f64).exp();
        Ok(Self {
            t60_s,
            decay_rate,
            frame_decay,
            hop,
            sample_rate,
        })
    }
}

/// Schroeder energy decay curve in dB (0 dB at the first sample).
pub fn schroeder_curve_db(taps: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (e, t) in edc.iter_mut().zip(taps).rev() {
        acc += t * t;
        *e = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter()
        .map(|&e| if e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, rms residual)`.
fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Reverberation time by Schroeder backward integration of the taps after
/// the direct path and a line fit between -5 and -25 dB.
pub fn estimate_t60(air: &ImpulseResponse, hop: usize) -> Result<ReverbModel> {
    let fs = air.sample_rate() as f64;
    let tail = &air.taps()[(air.direct_delay() + 1).min(air.len())..];
    if tail.iter().all(|&t| t == 0.0) {
        return Err(Error::EstimationFailed("no energy after the direct path".into()));
    }
    let curve = schroeder_curve_db(tail);
    let first = curve.iter().position(|&d| d <= FIT_UPPER_DB);
    let last = curve.iter().rposition(|&d| d >= FIT_LOWER_DB);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => return Err(Error::EstimationFailed("decay curve does not span -5..-25 dB".into())),
    };
    if last + 1 >= curve.len() || last + 1 - first < MIN_FIT_TAPS {
        return Err(Error::EstimationFailed(format!(
            "insufficient decay: {} taps between -5 and -25 dB",
            last + 1 - first
        )));
    }
    let xs: Vec<f64> = (first..=last).map(|n| n as f64 / fs).collect();
    let (slope, _, rms) = line_fit(&xs, &curve[first..=last]);
    if rms > MAX_FIT_RMS_DB {
        return Err(Error::EstimationFailed(format!(
            "decay is not exponential (fit residual {rms:.2} dB)"
        )));
    }
    if !(slope < 0.0) {
        return Err(Error::EstimationFailed("decay curve is not decreasing".into()));
    }
    ReverbModel::new(-60.0 / slope, hop, air.sample_rate())
}

/// Reverberation time from a line fit to the block-averaged log energy of
/// the taps after the direct path. Works on paths too short for the
/// Schroeder fit, such as an adaptive-filter estimate truncated at 64 ms.
pub fn estimate_t60_envelope(air: &ImpulseResponse, hop: usize) -> Result<ReverbModel> {
    let fs = air.sample_rate() as f64;
    let start = air.direct_delay() + 1;
    let tail = air.taps().get(start..).unwrap_or(&[]);
    let blocks = tail.len() / ENVELOPE_BLOCK;
    if blocks < 4 {
        return Err(Error::EstimationFailed(format!("tail of {} taps is too short", tail.len())));
    }
    let mut xs = Vec::with_capacity(blocks);
    let mut ys = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let chunk = &tail[b * ENVELOPE_BLOCK..(b + 1) * ENVELOPE_BLOCK];
        let e = chunk.iter().map(|t| t * t).sum::<f64>() / ENVELOPE_BLOCK as f64;
        if e > 0.0 {
            xs.push((b as f64 + 0.5) * ENVELOPE_BLOCK as f64 / fs);
            ys.push(10.0 * e.log10());
        }
    }
    if xs.len() < 4 {
        return Err(Error::EstimationFailed("tail has too few non-zero blocks".into()));
    }
    let (slope, _, _) = line_fit(&xs, &ys);
    let span = xs[xs.len() - 1] - xs[0];
    if !(slope * span <= -ENVELOPE_MIN_DROP_DB) {
        return Err(Error::EstimationFailed(format!(
            "tail envelope falls by only {:.1} dB",
            -slope * span
        )));
    }
    ReverbModel::new(-60.0 / slope, hop, air.sample_rate())
}

/// Initial power of the late residual echo: the energy of the final quarter
/// of the estimated path, carried one decay step past its end.
pub fn estimate_tail_power(estimated_path: &[f64], model: &ReverbModel) -> Result<f64> {
    let l = estimated_path.len();
    if l < 128 {
        return Err(Error::TooShort { len: l, needed: 128 });
    }
    let energy: f64 = estimated_path[l - l / 4..].iter().map(|w| w * w).sum();
    Ok(energy * model.frame_decay)
}

/// Per-bin variances of the three interferences and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceEstimates {
    pub lambda_noise: Vec<f64>,
    pub lambda_echo_late: Vec<f64>,
    pub lambda_rev_late: Vec<f64>,
    pub lambda_total: Vec<f64>,
}

impl InterferenceEstimates {
    pub fn new(lambda_noise: Vec<f64>, lambda_echo_late: Vec<f64>, lambda_rev_late: Vec<f64>) -> Result<Self> {
        let n = lambda_noise.len();
        if lambda_echo_late.len() != n || lambda_rev_late.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "variance vectors of {n}, {} and {} bins",
                lambda_echo_late.len(),
                lambda_rev_late.len()
            )));
        }
        let all = lambda_noise.iter().chain(&lambda_echo_late).chain(&lambda_rev_late);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if all.clone().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("negative spectral variance".into()));
        }
        let lambda_total = (0..n)
            .map(|k| lambda_noise[k] + lambda_echo_late[k] + lambda_rev_late[k])
            .collect();
        Ok(Self {
            lambda_noise,
            lambda_echo_late,
            lambda_rev_late,
            lambda_total,
        })
    }

    pub fn zeros(n_bins: usize) -> Self {
        Self {
            lambda_noise: vec![0.0; n_bins],
            lambda_echo_late: vec![0.0; n_bins],
            lambda_rev_late: vec![0.0; n_bins],
            lambda_total: vec![0.0; n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.lambda_total.len()
    }
}

/// Recursive background-noise tracker gated by speech presence.
#[derive(Debug, Clone)]
pub struct NoiseTracker {
    lambda: Vec<f64>,
    alpha: f64,
    frames: usize,
    init_frames: usize,
}

impl NoiseTracker {
    pub fn new(n_bins: usize) -> Self {
        Self::with_params(n_bins, NOISE_SMOOTHING, NOISE_INIT_FRAMES).expect("default parameters are valid")
    }

    pub fn with_params(n_bins: usize, alpha: f64, init_frames: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("noise smoothing must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            lambda: vec![0.0; n_bins],
            alpha,
            frames: 0,
            init_frames,
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    /// Running mean of `power` for the first `init_frames` frames, then a
    /// recursive average in bins whose presence probability is below 0.1.
    pub fn update(&mut self, power: &[f64], presence: &[f64]) -> Result<&[f64]> {
        if power.len() != self.lambda.len() || presence.len() != self.lambda.len() {
            return Err(Error::DimensionMismatch(format!(
                "noise tracker has {} bins, frame has {} and presence {}",
                self.lambda.len(),
                power.len(),
                presence.len()
            )));
        }
        if self.frames < self.init_frames {
            let n = (self.frames + 1) as f64;
            for (l, &y) in self.lambda.iter_mut().zip(power) {
                *l += (y - *l) / n;
            }
        } else {
            let a = self.alpha;
            for ((l, &y), &p) in self.lambda.iter_mut().zip(power).zip(presence) {
                if p < NOISE_UPDATE_MAX_PRESENCE {
                    *l = a * *l + (1.0 - a) * y;
                }
            }
        }
        self.frames += 1;
        Ok(&self.lambda)
    }
}

/// Recursive late-residual-echo variance: exponential decay set by T60 plus
/// injection of the excitation power scaled by the initial tail power.
#[derive(Debug, Clone)]
pub struct LateEchoEstimator {
    model: ReverbModel,
    lambda: Vec<f64>,
}

impl LateEchoEstimator {
    pub fn new(model: ReverbModel, n_bins: usize) -> Self {
        Self {
            model,
            lambda: vec![0.0; n_bins],
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `lambda = d * lambda + d * w0 * power` with `d` the frame decay.
    pub fn update(&mut self, tail_power: f64, power: &[f64]) -> Result<&[f64]> {
        if power.len() != self.lambda.len() {
            return Err(Error::DimensionMismatch(format!(
                "late echo estimator has {} bins, frame has {}",
                self.lambda.len(),
                power.len()
            )));
        }
        if !(tail_power >= 0.0) {
            return Err(Error::InvalidParameter(format!("tail power must be non-negative, got {tail_power}")));
        }
        let d = self.model.frame_decay;
        for (l, &y) in self.lambda.iter_mut().zip(power) {
            *l = d * *l + d * tail_power * y;
        }
        Ok(&self.lambda)
    }

    /// As [`update`](Self::update) with a per-bin initial tail power.
    pub fn update_per_bin(&mut self, tail_power: &[f64], power: &[f64]) -> Result<&[f64]> {
        if power.len() != self.lambda.len() || tail_power.len() != self.lambda.len() {
            return Err(Error::DimensionMismatch("late echo estimator bin count".into()));
        }
        let d = self.model.frame_decay;
        for ((l, &y), &w0) in self.lambda.iter_mut().zip(power).zip(tail_power) {
            *l = d * *l + d * w0.max(0.0) * y;
        }
        Ok(&self.lambda)
    }
}

/// Number of STFT frames covering the early/late boundary.
pub fn early_late_frames(hop: usize, sample_rate: u32) -> usize {
    (EARLY_LATE_BOUNDARY_S * sample_rate as f64 / hop as f64).round() as usize
}

/// Late reverberant variance from the smoothed near-end spectral variance
/// `N_e` frames back, decayed by `frame_decay^N_e`.
#[derive(Debug, Clone)]
pub struct LateReverbEstimator {
    model: ReverbModel,
    early_frames: usize,
    smoothing: f64,
    dpc_factor: f64,
    smoothed: Vec<f64>,
    /// Past smoothed variances, newest at the back; holds `early_frames + 1`.
    history: std::collections::VecDeque<Vec<f64>>,
}

impl LateReverbEstimator {
    pub fn new(model: ReverbModel, n_bins: usize, early_frames: usize) -> Self {
        Self {
            model,
            early_frames,
            smoothing: REVERB_SMOOTHING,
            dpc_factor: 1.0,
            smoothed: vec![0.0; n_bins],
            history: std::collections::VecDeque::with_capacity(early_frames + 1),
        }
    }

    /// Direct-to-reverberant correction applied to the smoothed variance
    /// when direct path compensation is enabled.
    pub fn with_dpc_factor(mut self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::InvalidParameter(format!("dpc factor must be non-negative, got {factor}")));
        }
        self.dpc_factor = factor;
        Ok(self)
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::InvalidParameter(format!("smoothing must lie in [0, 1), got {smoothing}")));
        }
        self.smoothing = smoothing;
        Ok(self)
    }

    pub fn smoothed(&self) -> &[f64] {
        &self.smoothed
    }

    /// Feeds the current near-end power estimate `|Z|^2` and returns the
    /// late reverberant variance plus a flag that is false while the history
    /// is still shorter than `N_e` frames (the variance is then zero).
    pub fn update(&mut self, near_power: &[f64], dpc: bool) -> Result<(Vec<f64>, bool)> {
        if near_power.len() != self.smoothed.len() {
            return Err(Error::DimensionMismatch(format!(
                "late reverb estimator has {} bins, frame has {}",
                self.smoothed.len(),
                near_power.len()
            )));
        }
        let a = self.smoothing;
        for (s, &z) in self.smoothed.iter_mut().zip(near_power) {
            *s = a * *s + (1.0 - a) * z.max(0.0);
        }
        if self.history.len() == self.early_frames + 1 {
            self.history.pop_front();
        }
        self.history.push_back(self.smoothed.clone());
        if self.history.len() < self.early_frames + 1 {
            return Ok((vec![0.0; self.smoothed.len()], false));
        }
        let scale = self.model.frame_decay.powi(self.early_frames as i32) * if dpc { self.dpc_factor } else { 1.0 };
        let past = &self.history[0];
        Ok((past.iter().map(|v| scale * v).collect(), true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverb_model_frame_decay() {
        let m = ReverbModel::new(0.5, 256, 16_000).unwrap();
        let expected = (-2.0 * 3.0 * std::f64::consts::LN_10 / 0.5 * 256.0 / 16_000.0).exp();
        assert!((m.frame_decay - expected).abs() < 1e-15);
        assert!(ReverbModel::new(0.0, 256, 16_000).is_err());
    }

    #[test]
    fn early_late_default_is_three_frames() {
        assert_eq!(early_late_frames(256, 16_000), 3);
    }

    #[test]
    fn estimates_sum_exactly() {
        let e = InterferenceEstimates::new(vec![0.1, 0.2], vec![0.3, 0.0], vec![0.0, 1e-9]).unwrap();
        assert_eq!(e.lambda_total, vec![0.1 + 0.3 + 0.0, 0.2 + 0.0 + 1e-9]);
        assert!(InterferenceEstimates::new(vec![-1.0], vec![0.0], vec![0.0]).is_err());
    }
}
