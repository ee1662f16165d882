//! Time-domain acoustic echo cancellation.
//!
//! [`AdaptiveFilter`] holds one echo-path estimate and runs one of seven
//! update rules behind a common interface:
//!
//! | variant | update |
//! |---------|--------|
//! | LMS     | `w += step * e * x` with `step = mu / (L * sigma_x^2)` |
//! | NLMS    | `w += mu * e * x / (x'x + delta)` |
//! | FBLMS   | overlap-save block LMS, per-bin normalised, constrained gradient |
//! | PNLMS   | `w += mu * e * G x / (x'Gx + delta)`, `g_i ~ max(rho * max(delta_p, max|w|), |w_i|)` |
//! | MPNLMS  | as PNLMS on `F(|w_i|) = ln(1 + mu_law |w_i|) / ln(1 + mu_law)` |
//! | IPNLMS  | `g_i = (1 - alpha) / 2L + (1 + alpha) |w_i| / (2 ||w||_1 + eps)` |
//! | APA     | order-P affine projection with a regularised P x P solve |
//!
//! Prediction is the same for every variant: `y = w . x` over the last L
//! far-end samples, newest first.

mod dtd;
mod fblms;

use std::fmt;
use std::str::FromStr;

pub use dtd::{geigel_declares, DoubleTalkDetector, DtdParams};

use crate::error::{Error, Result};
use crate::signal::ImpulseResponse;
use fblms::FblmsState;

/// Weight magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Floor reported by [`misalignment_db`] for an exact estimate.
pub const MISALIGNMENT_FLOOR_DB: f64 = -300.0;

const IPNLMS_EPS: f64 = 1e-12;
const APA_MAX_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantKind {
    Lms,
    Nlms,
    Fblms,
    Pnlms,
    Mpnlms,
    Ipnlms,
    Apa,
}

impl VariantKind {
    pub const ALL: [VariantKind; 7] = [
        VariantKind::Lms,
        VariantKind::Nlms,
        VariantKind::Fblms,
        VariantKind::Pnlms,
        VariantKind::Mpnlms,
        VariantKind::Ipnlms,
        VariantKind::Apa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::Lms => "lms",
            VariantKind::Nlms => "nlms",
            VariantKind::Fblms => "fblms",
            VariantKind::Pnlms => "pnlms",
            VariantKind::Mpnlms => "mpnlms",
            VariantKind::Ipnlms => "ipnlms",
            VariantKind::Apa => "apa",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown filter variant '{s}'")))
    }
}

/// Update rule plus its variant-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterVariant {
    /// `input_power` is the far-end variance used to scale the fixed step.
    Lms { input_power: f64 },
    Nlms,
    /// `power_smoothing` is the recursive averaging factor of the per-bin power.
    Fblms { power_smoothing: f64 },
    Pnlms { rho: f64, delta_p: f64 },
    Mpnlms { rho: f64, delta_p: f64, mu_law: f64 },
    Ipnlms { alpha: f64 },
    Apa { order: usize },
}

impl FilterVariant {
    pub fn default_for(kind: VariantKind) -> Self {
        match kind {
            VariantKind::Lms => FilterVariant::Lms { input_power: 0.01 },
            VariantKind::Nlms => FilterVariant::Nlms,
            VariantKind::Fblms => FilterVariant::Fblms { power_smoothing: 0.9 },
            VariantKind::Pnlms => FilterVariant::Pnlms {
                rho: 0.01,
                delta_p: 0.01,
            },
            VariantKind::Mpnlms => FilterVariant::Mpnlms {
                rho: 0.01,
                delta_p: 0.01,
                mu_law: 1000.0,
            },
            VariantKind::Ipnlms => FilterVariant::Ipnlms { alpha: -0.75 },
            VariantKind::Apa => FilterVariant::Apa { order: 4 },
        }
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            FilterVariant::Lms { .. } => VariantKind::Lms,
            FilterVariant::Nlms => VariantKind::Nlms,
            FilterVariant::Fblms { .. } => VariantKind::Fblms,
            FilterVariant::Pnlms { .. } => VariantKind::Pnlms,
            FilterVariant::Mpnlms { .. } => VariantKind::Mpnlms,
            FilterVariant::Ipnlms { .. } => VariantKind::Ipnlms,
            FilterVariant::Apa { .. } => VariantKind::Apa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveFilterConfig {
    pub taps: usize,
    pub mu: f64,
    pub delta: f64,
    pub variant: FilterVariant,
}

impl AdaptiveFilterConfig {
    pub fn new(kind: VariantKind, taps: usize) -> Self {
        Self {
            taps,
            mu: 0.5,
            delta: 1e-6 * taps as f64,
            variant: FilterVariant::default_for(kind),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.taps == 0 {
            return bad("filter needs at least one tap".into());
        }
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return bad(format!("step size must lie in (0, 2), got {}", self.mu));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad(format!("regularisation must be positive, got {}", self.delta));
        }
        match self.variant {
            FilterVariant::Lms { input_power } if !(input_power > 0.0) || !input_power.is_finite() => {
                bad(format!("lms input power must be positive, got {input_power}"))
            }
            FilterVariant::Fblms { power_smoothing } if !(0.0..1.0).contains(&power_smoothing) => {
                bad(format!("fblms power smoothing must lie in [0, 1), got {power_smoothing}"))
            }
            FilterVariant::Pnlms { rho, delta_p } | FilterVariant::Mpnlms { rho, delta_p, .. }
                if !(rho > 0.0 && rho <= 1.0) || !(delta_p > 0.0) =>
            {
                bad(format!("proportionate parameters out of range: rho {rho}, delta_p {delta_p}"))
            }
            FilterVariant::Mpnlms { mu_law, .. } if !(mu_law > 0.0) => {
                bad(format!("mu-law constant must be positive, got {mu_law}"))
            }
            FilterVariant::Ipnlms { alpha } if !(-1.0..1.0).contains(&alpha) => {
                bad(format!("ipnlms alpha must lie in [-1, 1), got {alpha}"))
            }
            FilterVariant::Apa { order } if order == 0 || order > APA_MAX_ORDER => {
                bad(format!("apa order must lie in 1..={APA_MAX_ORDER}, got {order}"))
            }
            _ => Ok(()),
        }
    }

    fn history_len(&self) -> usize {
        match self.variant {
            FilterVariant::Apa { order } => self.taps + order,
            _ => self.taps + 1,
        }
    }
}

/// Far-end delay line; `view()[k]` is the sample `k` steps in the past.
#[derive(Debug, Clone)]
struct History {
    buf: Vec<f64>,
    len: usize,
    pos: usize,
}

impl History {
    fn new(len: usize) -> Self {
        Self {
            buf: vec![0.0; 2 * len],
            len,
            pos: 0,
        }
    }

    fn push(&mut self, x: f64) {
        self.pos = if self.pos == 0 { self.len - 1 } else { self.pos - 1 };
        self.buf[self.pos] = x;
        self.buf[self.pos + self.len] = x;
    }

    fn view(&self) -> &[f64] {
        &self.buf[self.pos..self.pos + self.len]
    }

    fn clear(&mut self) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        self.pos = 0;
    }
}

#[derive(Debug, Clone)]
struct ApaState {
    order: usize,
    /// Raw Gram matrix `X'X` of the last `order` input vectors, row-major.
    gram: Vec<f64>,
    /// Desired (microphone) samples, newest first.
    desired: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub echo_estimate: f64,
    pub error: f64,
}

/// Adaptive echo-path estimate and the state its update rule needs.
pub struct AdaptiveFilter {
    config: AdaptiveFilterConfig,
    weights: Vec<f64>,
    history: History,
    energy: f64,
    since_refresh: usize,
    adaptation_enabled: bool,
    diverged: bool,
    samples: u64,
    gains: Vec<f64>,
    apa: Option<ApaState>,
    fblms: Option<FblmsState>,
}

impl fmt::Debug for AdaptiveFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptiveFilter")
            .field("config", &self.config)
            .field("samples", &self.samples)
            .field("adaptation_enabled", &self.adaptation_enabled)
            .field("diverged", &self.diverged)
            .finish_non_exhaustive()
    }
}

impl AdaptiveFilter {
    pub fn new(config: AdaptiveFilterConfig) -> Result<Self> {
        config.validate()?;
        let l = config.taps;
        let apa = match config.variant {
            FilterVariant::Apa { order } => Some(ApaState {
                order,
                gram: vec![0.0; order * order],
                desired: vec![0.0; order],
            }),
            _ => None,
        };
        let fblms = match config.variant {
            FilterVariant::Fblms { power_smoothing } => Some(FblmsState::new(l, power_smoothing)),
            _ => None,
        };
        Ok(Self {
            history: History::new(config.history_len()),
            config,
            weights: vec![0.0; l],
            energy: 0.0,
            since_refresh: 0,
            adaptation_enabled: true,
            diverged: false,
            samples: 0,
            gains: vec![0.0; l],
            apa,
            fblms,
        })
    }

    pub fn config(&self) -> &AdaptiveFilterConfig {
        &self.config
    }

    pub fn kind(&self) -> VariantKind {
        self.config.variant.kind()
    }

    pub fn taps(&self) -> usize {
        self.config.taps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.config.taps {
            return Err(Error::LengthMismatch(weights.len(), self.config.taps));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.weights.copy_from_slice(weights);
        if let Some(fb) = self.fblms.as_mut() {
            fb.sync_weights(&self.weights);
        }
        Ok(())
    }

    pub fn adaptation_enabled(&self) -> bool {
        self.adaptation_enabled
    }

    pub fn set_adaptation(&mut self, enabled: bool) {
        self.adaptation_enabled = enabled;
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn samples_processed(&self) -> u64 {
        self.samples
    }

    /// Far-end samples currently in the delay line, newest first.
    pub fn far_history(&self) -> &[f64] {
        &self.history.view()[..self.config.taps]
    }

    /// Per-coefficient gains used by the most recent proportionate update
    /// (PNLMS, MPNLMS, IPNLMS). Unnormalised; only ratios matter.
    pub fn last_gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        self.history.clear();
        self.energy = 0.0;
        self.since_refresh = 0;
        self.diverged = false;
        self.samples = 0;
        self.gains.iter_mut().for_each(|g| *g = 0.0);
        if let Some(apa) = self.apa.as_mut() {
            apa.gram.iter_mut().for_each(|v| *v = 0.0);
            apa.desired.iter_mut().for_each(|v| *v = 0.0);
        }
        if let Some(fb) = self.fblms.as_mut() {
            fb.reset();
        }
    }

    pub fn misalignment_db(&self, truth: &ImpulseResponse) -> Result<f64> {
        misalignment_db(&self.weights, truth)
    }

    fn push_far(&mut self, far: f64) {
        let l = self.config.taps;
        self.history.push(far);
        self.since_refresh += 1;
        if self.since_refresh >= l {
            self.energy = dot(&self.history.view()[..l], &self.history.view()[..l]);
            self.since_refresh = 0;
        } else {
            let dropped = self.history.view()[l];
            self.energy += far * far - dropped * dropped;
        }
        if let Some(apa) = self.apa.as_mut() {
            // x_i(n) = x_{i-1}(n-1): shift the Gram matrix, recompute row 0
            let p = apa.order;
            for i in (1..p).rev() {
                for j in (1..p).rev() {
                    apa.gram[i * p + j] = apa.gram[(i - 1) * p + (j - 1)];
                }
            }
            let view = self.history.view();
            let x0 = &view[..l];
            for j in 0..p {
                let v = dot(x0, &view[j..j + l]);
                apa.gram[j] = v;
                apa.gram[j * p] = v;
            }
        }
    }

    fn guard(&mut self, max_abs: f64) -> Result<()> {
        if !(max_abs <= DIVERGENCE_LIMIT) {
            self.diverged = true;
            return Err(Error::Diverged(self.samples));
        }
        Ok(())
    }

    /// Filters one sample pair. The echo estimate uses the weights from
    /// before this sample's update.
    pub fn process_sample(&mut self, far: f64, mic: f64) -> Result<StepOutput> {
        if self.diverged {
            return Err(Error::Diverged(self.samples));
        }
        if !far.is_finite() || !mic.is_finite() {
            return Err(Error::NonFinite);
        }
        self.push_far(far);
        let l = self.config.taps;
        let y = dot(&self.weights, &self.history.view()[..l]);
        let e = mic - y;
        self.samples += 1;
        if !y.is_finite() {
            self.diverged = true;
            return Err(Error::Diverged(self.samples));
        }

        if let Some(apa) = self.apa.as_mut() {
            apa.desired.rotate_right(1);
            apa.desired[0] = mic;
        }

        if self.fblms.is_some() {
            self.fblms_sample(far, e)?;
        } else if self.adaptation_enabled {
            let max_abs = self.update(e);
            self.guard(max_abs)?;
        }
        Ok(StepOutput {
            echo_estimate: y,
            error: e,
        })
    }

    fn fblms_sample(&mut self, far: f64, e: f64) -> Result<()> {
        let adapting = self.adaptation_enabled;
        let (mu, delta) = (self.config.mu, self.config.delta);
        let fb = self.fblms.as_mut().expect("fblms state present");
        if fb.push_sample(far, e, adapting) {
            fb.finish_block(&mut self.weights, mu, delta, false);
            let max_abs = max_abs(&self.weights);
            self.guard(max_abs)?;
        }
        Ok(())
    }

    /// Overlap-save block processing for FBLMS. `far` and `mic` must hold
    /// exactly one block of L samples and the filter must be block-aligned.
    /// Adaptation follows [`adaptation_enabled`](Self::adaptation_enabled)
    /// for the whole block.
    pub fn process_block(&mut self, far: &[f64], mic: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mask = vec![self.adaptation_enabled; far.len()];
        self.process_block_masked(far, mic, &mask)
    }

    /// As [`process_block`](Self::process_block), with a per-sample mask of
    /// the samples allowed to contribute to the gradient.
    pub fn process_block_masked(
        &mut self,
        far: &[f64],
        mic: &[f64],
        adapt: &[bool],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.config.taps;
        if self.fblms.is_none() {
            return Err(Error::InvalidParameter("block processing needs the fblms variant".into()));
        }
        if far.len() != l || mic.len() != l || adapt.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "block of {}/{}/{} samples, filter length {l}",
                far.len(),
                mic.len(),
                adapt.len()
            )));
        }
        if self.diverged {
            return Err(Error::Diverged(self.samples));
        }
        if far.iter().chain(mic).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.fblms.as_ref().is_some_and(|fb| fb.fill() != 0) {
            return Err(Error::InvalidParameter("filter is not block-aligned".into()));
        }
        for &x in far {
            self.push_far(x);
        }
        let fb = self.fblms.as_mut().expect("fblms state present");
        let mut y = vec![0.0; l];
        fb.filter_block(far, &mut y);
        let e: Vec<f64> = mic.iter().zip(&y).map(|(d, y)| d - y).collect();
        fb.stage_errors(&e, adapt);
        fb.finish_block(&mut self.weights, self.config.mu, self.config.delta, true);
        self.samples += l as u64;
        let m = max_abs(&self.weights);
        self.guard(m)?;
        Ok((y, e))
    }

    /// Frequency-domain weights of the FBLMS variant (FFT of `[w, 0]`).
    pub fn frequency_weights(&self) -> Option<Vec<(f64, f64)>> {
        self.fblms
            .as_ref()
            .map(|fb| fb.freq_weights().iter().map(|c| (c.re, c.im)).collect())
    }

    /// Applies the variant's update for error `e`; returns `max |w|`.
    fn update(&mut self, e: f64) -> f64 {
        let l = self.config.taps;
        let mu = self.config.mu;
        let delta = self.config.delta;
        let view = self.history.view();
        let x = &view[..l];
        match self.config.variant {
            FilterVariant::Lms { input_power } => {
                let s = mu / (l as f64 * input_power) * e;
                axpy(&mut self.weights, s, x)
            }
            FilterVariant::Nlms => {
                let s = mu * e / (self.energy.max(0.0) + delta);
                axpy(&mut self.weights, s, x)
            }
            FilterVariant::Pnlms { rho, delta_p } => {
                let peak = max_abs(&self.weights);
                let floor = rho * delta_p.max(peak);
                for (g, w) in self.gains.iter_mut().zip(&self.weights) {
                    *g = floor.max(w.abs());
                }
                proportionate_step(&mut self.weights, &mut self.gains, x, mu * e, delta)
            }
            FilterVariant::Mpnlms { rho, delta_p, mu_law } => {
                let scale = 1.0 / mu_law.ln_1p();
                let mut peak = 0.0f64;
                for (g, w) in self.gains.iter_mut().zip(&self.weights) {
                    *g = (mu_law * w.abs()).ln_1p() * scale;
                    peak = peak.max(*g);
                }
                let floor = rho * delta_p.max(peak);
                self.gains.iter_mut().for_each(|g| *g = g.max(floor));
                proportionate_step(&mut self.weights, &mut self.gains, x, mu * e, delta)
            }
            FilterVariant::Ipnlms { alpha } => {
                let l1: f64 = self.weights.iter().map(|w| w.abs()).sum();
                let uniform = (1.0 - alpha) / (2.0 * l as f64);
                let prop = (1.0 + alpha) / (2.0 * l1 + IPNLMS_EPS);
                let mut norm = 0.0;
                for ((g, w), xi) in self.gains.iter_mut().zip(&self.weights).zip(x) {
                    *g = uniform + prop * w.abs();
                    norm += *g * xi * xi;
                }
                let s = mu * e / (norm + delta * uniform);
                let mut peak = 0.0f64;
                for ((w, g), xi) in self.weights.iter_mut().zip(&self.gains).zip(x) {
                    *w += s * g * xi;
                    peak = peak.max(w.abs());
                }
                peak
            }
            FilterVariant::Apa { .. } => {
                let apa = self.apa.as_ref().expect("apa state present");
                let p = apa.order;
                let mut errors = vec![0.0; p];
                errors[0] = e;
                for (j, err) in errors.iter_mut().enumerate().skip(1) {
                    *err = apa.desired[j] - dot(&self.weights, &view[j..j + l]);
                }
                let mut system = apa.gram.clone();
                for i in 0..p {
                    system[i * p + i] += delta;
                }
                let coeffs = solve_dense(&mut system, &mut errors, p);
                let mut peak = 0.0f64;
                for (k, w) in self.weights.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, c) in coeffs.iter().enumerate() {
                        acc += c * view[j + k];
                    }
                    *w += mu * acc;
                    peak = peak.max(w.abs());
                }
                peak
            }
            FilterVariant::Fblms { .. } => unreachable!("fblms updates per block"),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn axpy(w: &mut [f64], s: f64, x: &[f64]) -> f64 {
    let mut peak = 0.0f64;
    for (wi, xi) in w.iter_mut().zip(x) {
        *wi += s * xi;
        peak = peak.max(wi.abs());
    }
    peak
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

/// `w += scaled_error * G x / (x'Gx + delta)` with `G = diag(gains / mean(gains))`.
fn proportionate_step(w: &mut [f64], gains: &mut [f64], x: &[f64], scaled_error: f64, delta: f64) -> f64 {
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let inv = 1.0 / mean;
    let mut norm = 0.0;
    for (g, xi) in gains.iter_mut().zip(x) {
        *g *= inv;
        norm += *g * xi * xi;
    }
    let s = scaled_error / (norm + delta);
    let mut peak = 0.0f64;
    for ((wi, g), xi) in w.iter_mut().zip(gains.iter()).zip(x) {
        *wi += s * g * xi;
        peak = peak.max(wi.abs());
    }
    peak
}

/// Gaussian elimination with partial pivoting on an `n x n` row-major system.
pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        if d == 0.0 {
            continue;
        }
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let d = a[row * n + row];
        if d == 0.0 {
            continue;
        }
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / d;
    }
    x
}

/// Normalised coefficient error `20 log10(||w - h|| / ||h||)` over the first
/// `estimate.len()` taps of `truth` (zero-padded if shorter).
pub fn misalignment_db(estimate: &[f64], truth: &ImpulseResponse) -> Result<f64> {
    let h = truth.taps();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, w) in estimate.iter().enumerate() {
        let hi = h.get(i).copied().unwrap_or(0.0);
        num += (w - hi).powi(2);
        den += hi * hi;
    }
    if den == 0.0 {
        return Err(Error::ZeroPower("true echo path"));
    }
    if num == 0.0 {
        return Ok(MISALIGNMENT_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(MISALIGNMENT_FLOOR_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tap(kind: VariantKind) -> AdaptiveFilter {
        let mut cfg = AdaptiveFilterConfig::new(kind, 1);
        if let FilterVariant::Apa { .. } = cfg.variant {
            cfg.variant = FilterVariant::Apa { order: 1 };
        }
        AdaptiveFilter::new(cfg).unwrap()
    }

    #[test]
    fn zero_far_end_stalls_every_variant() {
        for kind in VariantKind::ALL {
            let mut cfg = AdaptiveFilterConfig::new(kind, 8);
            cfg.variant = FilterVariant::default_for(kind);
            let mut f = AdaptiveFilter::new(cfg).unwrap();
            for i in 0..20 {
                let out = f.process_sample(0.0, 0.3 + i as f64).unwrap();
                assert_eq!(out.echo_estimate, 0.0, "{kind}");
                assert_eq!(out.error, 0.3 + i as f64, "{kind}");
            }
            assert!(f.weights().iter().all(|&w| w == 0.0), "{kind}");
        }
    }

    #[test]
    fn converged_one_tap_is_a_fixed_point() {
        for kind in VariantKind::ALL {
            let mut f = one_tap(kind);
            f.set_weights(&[0.5]).unwrap();
            let out = f.process_sample(1.0, 0.5).unwrap();
            assert_eq!(out.error, 0.0, "{kind}");
            if kind != VariantKind::Fblms {
                assert_eq!(f.weights(), &[0.5], "{kind}");
            }
        }
    }

    #[test]
    fn nlms_single_step_closed_form() {
        let mut cfg = AdaptiveFilterConfig::new(VariantKind::Nlms, 1);
        cfg.mu = 1.0;
        cfg.delta = 1e-12;
        let mut f = AdaptiveFilter::new(cfg).unwrap();
        f.process_sample(1.0, 0.5).unwrap();
        let expected = 0.5 / (1.0 + 1e-12);
        assert!((f.weights()[0] - expected).abs() < 1e-12);
        assert!((f.weights()[0] - 0.5).abs() < 1e-11);
    }

    #[test]
    fn misalignment_reference_values() {
        let h = ImpulseResponse::new(vec![1.0, -0.5, 0.25, 0.1], 16_000, 0).unwrap();
        assert_eq!(misalignment_db(h.taps(), &h).unwrap(), MISALIGNMENT_FLOOR_DB);
        assert!((misalignment_db(&[0.0; 4], &h).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = h.taps().iter().map(|t| t * 1.01).collect();
        assert!((misalignment_db(&scaled, &h).unwrap() + 40.0).abs() < 1e-9);
        let zero = ImpulseResponse::new(vec![0.0; 4], 16_000, 0).unwrap();
        assert!(matches!(misalignment_db(&[0.0; 4], &zero), Err(Error::ZeroPower(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = AdaptiveFilterConfig::new(VariantKind::Nlms, 16);
        cfg.mu = 2.0;
        assert!(AdaptiveFilter::new(cfg).is_err());
        let mut cfg = AdaptiveFilterConfig::new(VariantKind::Apa, 16);
        cfg.variant = FilterVariant::Apa { order: 9 };
        assert!(AdaptiveFilter::new(cfg).is_err());
        let mut cfg = AdaptiveFilterConfig::new(VariantKind::Nlms, 16);
        cfg.delta = 0.0;
        assert!(AdaptiveFilter::new(cfg).is_err());
        assert!("NLMS".parse::<VariantKind>().is_ok());
        assert!("rls".parse::<VariantKind>().is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut f = AdaptiveFilter::new(AdaptiveFilterConfig::new(VariantKind::Nlms, 4)).unwrap();
        assert!(matches!(f.process_sample(f64::NAN, 0.0), Err(Error::NonFinite)));
        assert!(matches!(f.process_sample(0.0, f64::INFINITY), Err(Error::NonFinite)));
    }

    #[test]
    fn divergence_is_reported_and_sticky() {
        let mut cfg = AdaptiveFilterConfig::new(VariantKind::Lms, 4);
        cfg.mu = 1.9;
        cfg.variant = FilterVariant::Lms { input_power: 1e-9 };
        let mut f = AdaptiveFilter::new(cfg).unwrap();
        let mut failed = None;
        for n in 0..10_000 {
            let x = if n % 2 == 0 { 1.0 } else { -0.7 };
            if let Err(e) = f.process_sample(x, 0.3 * x) {
                failed = Some(e);
                break;
            }
        }
        assert!(matches!(failed, Some(Error::Diverged(_))));
        assert!(f.is_diverged());
        assert!(matches!(f.process_sample(0.0, 0.0), Err(Error::Diverged(_))));
    }

    #[test]
    fn dense_solver_matches_known_system() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 4.0, -1.0, 2.0];
        let mut b = vec![3.0, 3.0, 5.0];
        let x = solve_dense(&mut a, &mut b, 3);
        for (xi, ei) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - ei).abs() < 1e-12);
        }
    }
}
