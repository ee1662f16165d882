//! Optimally-modified log-spectral amplitude postfilter.
//!
//! Per frame and bin: a posteriori SIR `gamma`, decision-directed a priori
//! SIR `xi`, speech presence probability `p`, LSA gain, and the final gain
//! `G = g_lsa^p * g_min^(1 - p)` clamped to `[g_min, 1]`.

use crate::error::{Error, Result};
use crate::interference::InterferenceEstimates;
use crate::stft::Spectrogram;

pub const LAMBDA_FLOOR: f64 = 1e-12;
const V_FLOOR: f64 = 1e-10;
const LIKELIHOOD_EXP_CAP: f64 = 50.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostfilterParams {
    /// Decision-directed weighting factor.
    pub beta: f64,
    /// Lower bound on the a priori SIR (linear).
    pub xi_min: f64,
    /// Gain floor (linear).
    pub g_min: f64,
    /// Prior probability of speech absence.
    pub q_absent: f64,
}

impl Default for PostfilterParams {
    fn default() -> Self {
        Self {
            beta: 0.98,
            xi_min: 10f64.powf(-1.5),
            g_min: 10f64.powf(-1.8),
            q_absent: 0.95,
        }
    }
}

impl PostfilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.xi_min > 0.0) || !self.xi_min.is_finite() {
            return Err(Error::InvalidParameter(format!("xi_min must be positive, got {}", self.xi_min)));
        }
        if !(self.g_min > 0.0 && self.g_min <= 1.0) {
            return Err(Error::InvalidParameter(format!("g_min must lie in (0, 1], got {}", self.g_min)));
        }
        if !(0.0..1.0).contains(&self.q_absent) {
            return Err(Error::InvalidParameter(format!(
                "q_absent must lie in [0, 1), got {}",
                self.q_absent
            )));
        }
        Ok(())
    }
}

/// Exponential integral `E1(v) = int_v^inf exp(-t) / t dt` for `v > 0`.
pub fn exp_int_e1(v: f64) -> f64 {
    if !(v > 0.0) {
        return if v == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if v < 1.0 {
        // -gamma - ln v - sum_{k>=1} (-v)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -v / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - v.ln() - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = v + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-v).exp()
    }
}

/// `gamma = |Y|^2 / max(lambda, 1e-12)`.
pub fn a_posteriori_sir(mic_power: &[f64], lambda_total: &[f64]) -> Vec<f64> {
    mic_power
        .iter()
        .zip(lambda_total)
        .map(|(y, l)| y / l.max(LAMBDA_FLOOR))
        .collect()
}

pub fn speech_presence_probability(xi: f64, gamma: f64, q_absent: f64) -> f64 {
    if q_absent == 0.0 {
        return 1.0;
    }
    let v = xi * gamma / (1.0 + xi);
    let likelihood = v.min(LIKELIHOOD_EXP_CAP).exp() / (1.0 + xi);
    let p = 1.0 / (1.0 + q_absent / (1.0 - q_absent) / likelihood);
    p.clamp(0.0, 1.0)
}

/// `(xi / (1 + xi)) exp(E1(v) / 2)` with `v = xi gamma / (1 + xi)`.
pub fn lsa_gain(xi: f64, gamma: f64) -> f64 {
    let v = (xi * gamma / (1.0 + xi)).max(V_FLOOR);
    let g = xi / (1.0 + xi) * (0.5 * exp_int_e1(v)).exp();
    g.clamp(f64::MIN_POSITIVE, 1e3)
}

pub fn omlsa_gain(g_lsa: f64, p: f64, g_min: f64) -> f64 {
    (g_lsa.powf(p) * g_min.powf(1.0 - p)).clamp(g_min, 1.0)
}

/// Per-frame quantities of the last processed frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDiagnostics {
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    pub presence: Vec<f64>,
    pub gain: Vec<f64>,
}

/// Decision-directed recursion memory plus the frame computation.
#[derive(Debug, Clone)]
pub struct Postfilter {
    params: PostfilterParams,
    prev_gain: Vec<f64>,
    prev_gamma: Vec<f64>,
    warm: bool,
    last: FrameDiagnostics,
}

impl Postfilter {
    pub fn new(params: PostfilterParams, n_bins: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            prev_gain: vec![1.0; n_bins],
            prev_gamma: vec![0.0; n_bins],
            warm: false,
            last: FrameDiagnostics::default(),
        })
    }

    pub fn params(&self) -> &PostfilterParams {
        &self.params
    }

    pub fn n_bins(&self) -> usize {
        self.prev_gain.len()
    }

    pub fn is_warm(&self) -> bool {
        self.warm
    }

    pub fn last_frame(&self) -> &FrameDiagnostics {
        &self.last
    }

    /// Decision-directed a priori SIR for the current `gamma`.
    pub fn a_priori_sir(&self, gamma: &[f64]) -> Vec<f64> {
        let PostfilterParams { beta, xi_min, .. } = self.params;
        gamma
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                let ml = (g - 1.0).max(0.0);
                let xi = if self.warm {
                    beta * self.prev_gain[k].powi(2) * self.prev_gamma[k] + (1.0 - beta) * ml
                } else {
                    ml
                };
                xi.max(xi_min)
            })
            .collect()
    }

    /// Presence probabilities this frame would get, without touching the
    /// recursion state.
    pub fn presence(&self, mic_power: &[f64], lambda_total: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_bins();
        if mic_power.len() != n || lambda_total.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "postfilter has {n} bins, frame has {} and variance {}",
                mic_power.len(),
                lambda_total.len()
            )));
        }
        let gamma = a_posteriori_sir(mic_power, lambda_total);
        let xi = self.a_priori_sir(&gamma);
        Ok(xi
            .iter()
            .zip(&gamma)
            .zip(lambda_total)
            .map(|((&x, &g), &lam)| if lam == 0.0 { 1.0 } else { speech_presence_probability(x, g, self.params.q_absent) })
            .collect())
    }

    /// Gains for one frame given `|Y|^2` and the total interference
    /// variance. Updates the recursion state.
    pub fn frame_gains(&mut self, mic_power: &[f64], lambda_total: &[f64]) -> Result<&[f64]> {
        let n = self.n_bins();
        if mic_power.len() != n || lambda_total.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "postfilter has {n} bins, frame has {} and variance {}",
                mic_power.len(),
                lambda_total.len()
            )));
        }
        let gamma = a_posteriori_sir(mic_power, lambda_total);
        let xi = self.a_priori_sir(&gamma);
        let PostfilterParams { g_min, q_absent, .. } = self.params;
        let mut presence = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        for ((&x, &g), &lam) in xi.iter().zip(&gamma).zip(lambda_total) {
            // no interference at all: the limit of p -> 1, G -> 1, which the
            // capped likelihood ratio only approaches
            if lam == 0.0 {
                presence.push(1.0);
                gain.push(1.0);
                continue;
            }
            let p = speech_presence_probability(x, g, q_absent);
            presence.push(p);
            gain.push(omlsa_gain(lsa_gain(x, g), p, g_min));
        }
        self.prev_gain.copy_from_slice(&gain);
        self.prev_gamma.copy_from_slice(&gamma);
        self.warm = true;
        self.last = FrameDiagnostics {
            gamma,
            xi,
            presence,
            gain,
        };
        Ok(&self.last.gain)
    }
}

/// Applies the postfilter frame by frame; `estimates[l]` belongs to frame `l`.
pub fn apply_postfilter(
    spec: &Spectrogram,
    estimates: &[InterferenceEstimates],
    params: PostfilterParams,
) -> Result<(Spectrogram, Vec<Vec<f64>>)> {
    if estimates.len() != spec.n_frames() {
        return Err(Error::DimensionMismatch(format!(
            "{} interference frames for {} spectral frames",
            estimates.len(),
            spec.n_frames()
        )));
    }
    let mut pf = Postfilter::new(params, spec.n_bins())?;
    let mut out = spec.clone();
    let mut gains = Vec::with_capacity(spec.n_frames());
    for (l, est) in estimates.iter().enumerate() {
        let g = pf.frame_gains(&spec.power(l), &est.lambda_total)?.to_vec();
        out.apply_gains(l, &g);
        gains.push(g);
    }
    Ok((out, gains))
}
