//! Weighted overlap-add STFT with square-root Hann analysis and synthesis
//! windows. At 50% overlap the window product sums to one, so `istft(stft(x))`
//! reconstructs `x` everywhere two frames overlap.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::signal::AudioSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    SqrtHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameParams {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window: Window,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 256,
            fft_len: 512,
            window: Window::SqrtHann,
        }
    }
}

impl FrameParams {
    /// Half-overlap parameters for the given frame length.
    pub fn with_frame_len(frame_len: usize) -> Self {
        Self {
            frame_len,
            hop: frame_len / 2,
            fft_len: frame_len,
            window: Window::SqrtHann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.hop == 0 || self.fft_len < self.frame_len {
            return Err(Error::InvalidParameter(format!("bad frame parameters {self:?}")));
        }
        if !self.frame_len.is_multiple_of(2) || !self.fft_len.is_multiple_of(2) {
            return Err(Error::InvalidParameter("frame and fft lengths must be even".into()));
        }
        if 2 * self.hop != self.frame_len {
            return Err(Error::InvalidParameter(
                "square-root Hann reconstruction needs hop = frame_len / 2".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// `floor((len - frame_len) / hop) + 1`, or zero for signals shorter than a frame.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            Window::SqrtHann => (0..self.frame_len)
                .map(|n| {
                    let phase = std::f64::consts::TAU * n as f64 / self.frame_len as f64;
                    (0.5 - 0.5 * phase.cos()).sqrt()
                })
                .collect(),
        }
    }
}

/// One-sided complex spectra, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    params: FrameParams,
    origin_length: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn zeros(params: FrameParams, origin_length: usize, sample_rate: u32) -> Self {
        let n_frames = params.n_frames(origin_length);
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_frames * params.n_bins()],
            n_frames,
            params,
            origin_length,
            sample_rate,
        }
    }

    pub fn from_frames(
        frames: Vec<Vec<Complex64>>,
        params: FrameParams,
        origin_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        params.validate()?;
        if frames.len() != params.n_frames(origin_length) {
            return Err(Error::DimensionMismatch(format!(
                "{} frames for a signal of {} samples (expected {})",
                frames.len(),
                origin_length,
                params.n_frames(origin_length)
            )));
        }
        let n_bins = params.n_bins();
        if let Some(bad) = frames.iter().find(|f| f.len() != n_bins) {
            return Err(Error::DimensionMismatch(format!("frame of {} bins, expected {n_bins}", bad.len())));
        }
        let data: Vec<Complex64> = frames.into_iter().flatten().collect();
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            n_frames: data.len() / n_bins,
            data,
            params,
            origin_length,
            sample_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.params.n_bins()
    }

    pub fn params(&self) -> FrameParams {
        self.params
    }

    pub fn origin_length(&self) -> usize {
        self.origin_length
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, l: usize) -> &[Complex64] {
        let b = self.n_bins();
        &self.data[l * b..(l + 1) * b]
    }

    pub fn frame_mut(&mut self, l: usize) -> &mut [Complex64] {
        let b = self.n_bins();
        &mut self.data[l * b..(l + 1) * b]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.n_bins())
    }

    /// `|X(k, l)|^2` for frame `l`.
    pub fn power(&self, l: usize) -> Vec<f64> {
        self.frame(l).iter().map(|c| c.norm_sqr()).collect()
    }

    /// Multiplies every bin of frame `l` by the matching real gain.
    pub fn apply_gains(&mut self, l: usize, gains: &[f64]) {
        self.frame_mut(l).iter_mut().zip(gains).for_each(|(c, g)| *c *= *g);
    }

    pub fn scale(&mut self, gain: f64) {
        self.data.iter_mut().for_each(|c| *c *= gain);
    }
}

/// Reusable forward/inverse transform pair for one parameter set.
pub struct Stft {
    params: FrameParams,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(params: FrameParams) -> Result<Self> {
        params.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            window: params.window(),
            forward: planner.plan_fft_forward(params.fft_len),
            inverse: planner.plan_fft_inverse(params.fft_len),
            params,
        })
    }

    pub fn params(&self) -> FrameParams {
        self.params
    }

    pub fn analyze(&self, signal: &AudioSignal) -> Result<Spectrogram> {
        let p = self.params;
        let x = signal.samples();
        if x.len() < p.frame_len {
            return Err(Error::TooShort {
                len: x.len(),
                needed: p.frame_len,
            });
        }
        let mut spec = Spectrogram::zeros(p, x.len(), signal.sample_rate());
        let mut buf = self.forward.make_input_vec();
        let mut out = self.forward.make_output_vec();
        for l in 0..spec.n_frames() {
            let start = l * p.hop;
            buf.iter_mut().for_each(|v| *v = 0.0);
            for ((b, s), w) in buf.iter_mut().zip(&x[start..start + p.frame_len]).zip(&self.window) {
                *b = s * w;
            }
            self.forward.process(&mut buf, &mut out).expect("fft sizes match");
            spec.frame_mut(l).copy_from_slice(&out);
        }
        Ok(spec)
    }

    pub fn synthesize(&self, spec: &Spectrogram) -> Result<AudioSignal> {
        let p = self.params;
        if spec.params() != p {
            return Err(Error::DimensionMismatch("spectrogram built with different frame parameters".into()));
        }
        if spec.n_frames() != p.n_frames(spec.origin_length()) {
            return Err(Error::DimensionMismatch("frame count does not match origin length".into()));
        }
        let mut out = vec![0.0; spec.origin_length()];
        let mut bins = self.inverse.make_input_vec();
        let mut buf = self.inverse.make_output_vec();
        let scale = 1.0 / p.fft_len as f64;
        for l in 0..spec.n_frames() {
            bins.copy_from_slice(spec.frame(l));
            bins[0].im = 0.0;
            let last = bins.len() - 1;
            bins[last].im = 0.0;
            self.inverse.process(&mut bins, &mut buf).expect("fft sizes match");
            let start = l * p.hop;
            for ((o, b), w) in out[start..start + p.frame_len].iter_mut().zip(&buf).zip(&self.window) {
                *o += b * w * scale;
            }
        }
        AudioSignal::new(out, spec.sample_rate())
    }
}

pub fn stft(signal: &AudioSignal, params: FrameParams) -> Result<Spectrogram> {
    Stft::new(params)?.analyze(signal)
}

pub fn istft(spec: &Spectrogram) -> Result<AudioSignal> {
    Stft::new(spec.params())?.synthesize(spec)
}
