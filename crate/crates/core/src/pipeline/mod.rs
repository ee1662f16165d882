//! End-to-end processing: echo cancellation with double-talk gating,
//! reverberation-time estimation from the identified path, interference
//! variance estimation, OM-LSA postfilter, and evaluation against the
//! synthetic ground truth.

pub mod bench;
pub mod config;
pub mod csv;
pub mod scenario;

use std::path::PathBuf;

use realfft::num_complex::Complex64;

use crate::aec::{AdaptiveFilter, DoubleTalkDetector};
use crate::error::{Error, Result};
use crate::interference::{
    estimate_t60, estimate_t60_envelope, InterferenceEstimates, LateEchoEstimator,
    LateReverbEstimator, NoiseTracker, ReverbModel,
};
use crate::metrics::{erle, lsd, segmental_sir, segmental_snr, ErleTrace, MetricsReport};
use crate::omlsa::Postfilter;
use crate::signal::{write_wav, AudioSignal, ImpulseResponse};
use crate::stft::{Spectrogram, Stft};

pub use bench::{run_benchmark, BenchConfig, BenchResult};
pub use config::{PipelineConfig, ScenarioConfig, StageMask};
pub use csv::CsvRow;
pub use scenario::{Decomposition, Scenario};

/// Misalignment is sampled every this many seconds.
pub const MISALIGNMENT_STEP_S: f64 = 0.01;
pub const MISALIGNMENT_THRESHOLD_DB: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T60Source {
    /// Schroeder fit on the identified path.
    Schroeder,
    /// Log-envelope regression on the identified path.
    Envelope,
    /// No usable path; reverberation suppression is skipped.
    Unavailable,
}

#[derive(Debug, Clone)]
pub struct AecOutput {
    pub error: Vec<f64>,
    pub echo_estimate: Vec<f64>,
    pub weights: Vec<f64>,
    /// Energy of the last quarter of the weights at each hop boundary.
    pub tail_energy: Vec<f64>,
    pub misalignment: Vec<(f64, f64)>,
    pub double_talk_fraction: f64,
    pub diverged_at: Option<u64>,
}

/// Sample loop of the echo canceller. After a divergence the filter is
/// bypassed and the microphone passes through unchanged.
pub fn run_aec(config: &PipelineConfig, far: &[f64], mic: &[f64], truth: Option<&Decomposition>) -> Result<AecOutput> {
    let n = far.len();
    let hop = config.stft.hop;
    let fs = config.scenario.sample_rate as f64;
    let mut filter = AdaptiveFilter::new(config.aec)?;
    let mut dtd = DoubleTalkDetector::new(config.dtd)?;
    let taps = config.aec.taps;
    let quarter = taps - taps / 4;
    let step = ((MISALIGNMENT_STEP_S * fs).round() as usize).max(1);

    let mut out = AecOutput {
        error: vec![0.0; n],
        echo_estimate: vec![0.0; n],
        weights: Vec::new(),
        tail_energy: Vec::with_capacity(n / hop + 1),
        misalignment: Vec::new(),
        double_talk_fraction: 0.0,
        diverged_at: None,
    };
    let mut dt_count = 0usize;
    for i in 0..n {
        if i % hop == 0 {
            out.tail_energy.push(filter.weights()[quarter..].iter().map(|w| w * w).sum());
        }
        if out.diverged_at.is_some() {
            out.error[i] = mic[i];
            continue;
        }
        let double_talk = config.dtd_enabled && dtd.observe(far[i], mic[i]);
        dt_count += double_talk as usize;
        filter.set_adaptation(!double_talk);
        match filter.process_sample(far[i], mic[i]) {
            Ok(s) => {
                out.error[i] = s.error;
                out.echo_estimate[i] = s.echo_estimate;
            }
            Err(Error::Diverged(at)) => {
                out.diverged_at = Some(at);
                out.error[i] = mic[i];
                continue;
            }
            Err(e) => return Err(e),
        }
        if let Some(t) = truth {
            if (i + 1) % step == 0 {
                let m = filter.misalignment_db(t.echo_path_at(i))?;
                out.misalignment.push(((i + 1) as f64 / fs, m));
            }
        }
    }
    out.double_talk_fraction = dt_count as f64 / n.max(1) as f64;
    out.weights = filter.weights().to_vec();
    Ok(out)
}

/// First time the misalignment reaches the threshold, and the mean over the
/// trailing `fraction` of the trace.
pub fn misalignment_summary(trace: &[(f64, f64)], fraction: f64) -> (f64, f64) {
    let t20 = trace
        .iter()
        .find(|(_, m)| *m <= MISALIGNMENT_THRESHOLD_DB)
        .map_or(f64::NAN, |(t, _)| *t);
    let start = trace.len() - ((trace.len() as f64 * fraction).round() as usize).min(trace.len());
    let tail = &trace[start..];
    let ss = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().map(|(_, m)| m).sum::<f64>() / tail.len() as f64
    };
    (t20, ss)
}

/// Zero padding that lets every original sample be covered by two frames.
#[derive(Debug, Clone, Copy)]
struct Padding {
    front: usize,
    len: usize,
    padded: usize,
}

impl Padding {
    fn new(len: usize, frame_len: usize, hop: usize) -> Self {
        let front = hop;
        let mut padded = front + len + hop;
        if padded < frame_len {
            padded = frame_len;
        }
        let rem = (padded - frame_len) % hop;
        if rem != 0 {
            padded += hop - rem;
        }
        Self { front, len, padded }
    }

    fn pad(&self, x: &[f64], fs: u32) -> Result<AudioSignal> {
        let mut v = vec![0.0; self.padded];
        v[self.front..self.front + self.len].copy_from_slice(x);
        AudioSignal::new(v, fs)
    }

    fn strip(&self, x: &AudioSignal) -> Result<AudioSignal> {
        AudioSignal::new(x.samples()[self.front..self.front + self.len].to_vec(), x.sample_rate())
    }

    /// Original-signal sample index of the last sample of frame `l`.
    fn frame_end(&self, l: usize, frame_len: usize, hop: usize) -> usize {
        (l * hop + frame_len).saturating_sub(self.front + 1).min(self.len.saturating_sub(1))
    }
}

/// Per-frame postfilter gains plus what they were computed from.
#[derive(Debug, Clone)]
pub struct PostfilterTrace {
    pub gains: Vec<Vec<f64>>,
    pub estimates: Vec<InterferenceEstimates>,
    pub t60: Option<ReverbModel>,
    pub t60_source: T60Source,
}

fn reverb_model(config: &PipelineConfig, weights: &[f64]) -> (Option<ReverbModel>, T60Source) {
    if weights.iter().all(|&w| w == 0.0) {
        return (None, T60Source::Unavailable);
    }
    let hop = config.stft.hop;
    let path = match ImpulseResponse::from_taps(weights.to_vec(), config.scenario.sample_rate) {
        Ok(p) => p,
        Err(_) => return (None, T60Source::Unavailable),
    };
    if let Ok(m) = estimate_t60(&path, hop) {
        return (Some(m), T60Source::Schroeder);
    }
    match estimate_t60_envelope(&path, hop) {
        Ok(m) => (Some(m), T60Source::Envelope),
        Err(_) => (None, T60Source::Unavailable),
    }
}

/// Relative per-bin spectral shape of the last quarter of the path, mean one.
fn tail_profile(weights: &[f64], stft: &Stft) -> Vec<f64> {
    let p = stft.params();
    let quarter = &weights[weights.len() - weights.len() / 4..];
    let mut buf = vec![0.0; p.fft_len];
    for (b, w) in buf.iter_mut().zip(quarter) {
        *b = *w;
    }
    let mut planner = realfft::RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(p.fft_len);
    let mut spec = fft.make_output_vec();
    fft.process(&mut buf, &mut spec).expect("fft sizes match");
    let power: Vec<f64> = spec.iter().map(Complex64::norm_sqr).collect();
    let mean = power.iter().sum::<f64>() / power.len() as f64;
    if mean > 0.0 {
        power.iter().map(|v| v / mean).collect()
    } else {
        vec![1.0; power.len()]
    }
}

/// Computes the postfilter gains for the AEC error spectrogram `err`.
/// `far` is the far-end spectrogram on the same frame grid.
pub fn postfilter_gains(
    config: &PipelineConfig,
    err: &Spectrogram,
    far: &Spectrogram,
    aec: &AecOutput,
    stft: &Stft,
) -> Result<PostfilterTrace> {
    let pf = &config.postfilter;
    let st = pf.stages;
    let p = stft.params();
    let n_bins = err.n_bins();
    let fs = config.scenario.sample_rate;
    let (model, source) = if config.aec_enabled {
        reverb_model(config, &aec.weights)
    } else {
        (None, T60Source::Unavailable)
    };

    let mut noise = NoiseTracker::with_params(n_bins, pf.noise_alpha, pf.noise_init_frames)?;
    let mut late_echo = model.map(|m| LateEchoEstimator::new(m, n_bins));
    let early_frames = (pf.early_ms * 1e-3 * fs as f64 / p.hop as f64).round() as usize;
    let mut late_rev = match model {
        Some(m) => Some(
            LateReverbEstimator::new(m, n_bins, early_frames)
                .with_dpc_factor(pf.dpc_factor)?
                .with_smoothing(pf.reverb_smoothing)?,
        ),
        None => None,
    };
    let profile = match pf.tail_power {
        config::TailPowerMode::PerBin => Some(tail_profile(&aec.weights, stft)),
        config::TailPowerMode::Scalar => None,
    };
    let delay_frames = (config.aec.taps as f64 / p.hop as f64).round() as usize;
    let padding = Padding::new(aec.error.len(), p.frame_len, p.hop);
    let mut postfilter = Postfilter::new(pf.params, n_bins)?;
    let mut presence = vec![0.0; n_bins];
    let mut prev_lr = vec![0.0; n_bins];
    let zero = vec![0.0; n_bins];
    let mut gains = Vec::with_capacity(err.n_frames());
    let mut estimates = Vec::with_capacity(err.n_frames());

    for l in 0..err.n_frames() {
        let power = err.power(l);
        let le = match late_echo.as_mut() {
            Some(est) => {
                let far_power = if l >= delay_frames { far.power(l - delay_frames) } else { zero.clone() };
                let snap = padding.frame_end(l, p.frame_len, p.hop) / p.hop;
                let w0 = aec.tail_energy.get(snap).copied().unwrap_or(0.0) * est_decay(&model);
                match &profile {
                    Some(prof) => {
                        let per_bin: Vec<f64> = prof.iter().map(|g| g * w0).collect();
                        est.update_per_bin(&per_bin, &far_power)?.to_vec()
                    }
                    None => est.update(w0, &far_power)?.to_vec(),
                }
            }
            None => zero.clone(),
        };
        // the noise update is gated on this frame's presence, judged against
        // the interference estimates from before the update
        if st.any() && noise.frame_count() >= pf.noise_init_frames {
            let provisional: Vec<f64> = noise
                .lambda()
                .iter()
                .zip(&le)
                .zip(&prev_lr)
                .map(|((n, e), r)| st.ns as u8 as f64 * n + st.rs as u8 as f64 * e + st.revs as u8 as f64 * r)
                .collect();
            presence = postfilter.presence(&power, &provisional)?;
        }
        let ln = noise.update(&power, &presence)?.to_vec();
        let lr = match late_rev.as_mut() {
            Some(est) => {
                let z: Vec<f64> = power
                    .iter()
                    .zip(&ln)
                    .zip(&le)
                    .map(|((y, n), e)| (y - n - e).max(0.0))
                    .collect();
                est.update(&z, st.dpc)?.0
            }
            None => zero.clone(),
        };
        prev_lr.clone_from(&lr);
        let est = InterferenceEstimates::new(
            if st.ns { ln } else { zero.clone() },
            if st.rs { le } else { zero.clone() },
            if st.revs { lr } else { zero.clone() },
        )?;
        let g = if st.any() {
            postfilter.frame_gains(&power, &est.lambda_total)?.to_vec()
        } else {
            vec![1.0; n_bins]
        };
        gains.push(g);
        estimates.push(est);
    }
    Ok(PostfilterTrace {
        gains,
        estimates,
        t60: model,
        t60_source: source,
    })
}

fn est_decay(model: &Option<ReverbModel>) -> f64 {
    model.map_or(0.0, |m| m.frame_decay)
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub report: MetricsReport,
    pub processed: AudioSignal,
    /// AEC error signal (input of the postfilter).
    pub aec_error: AudioSignal,
    /// ERLE of the echo canceller alone.
    pub aec_erle: Option<ErleTrace>,
    /// ERLE after the postfilter.
    pub output_erle: Option<ErleTrace>,
    pub t20_s: f64,
    pub ss_misalign_db: f64,
    pub t60: Option<ReverbModel>,
    pub t60_source: T60Source,
    pub diverged_at: Option<u64>,
    pub double_talk_fraction: f64,
    /// Smallest and largest postfilter gain applied.
    pub gain_range: (f64, f64),
    /// Postfilter output split into its ground-truth components.
    pub components: Option<ProcessedComponents>,
}

#[derive(Debug, Clone)]
pub struct ProcessedComponents {
    pub residual_echo: AudioSignal,
    pub near_early: AudioSignal,
    pub near_late: AudioSignal,
    pub noise: AudioSignal,
}

impl ProcessedComponents {
    /// Everything except the early near-end speech.
    pub fn interference(&self) -> Result<AudioSignal> {
        self.residual_echo.add(&self.near_late)?.add(&self.noise)
    }
}

fn nan_on_no_activity(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::NoActiveFrames) => Ok(f64::NAN),
        other => other,
    }
}

/// Runs every processing stage on an already built scenario.
pub fn process(config: &PipelineConfig, scenario: &Scenario) -> Result<PipelineResult> {
    config.validate()?;
    let fs = scenario.mic.sample_rate();
    let n = scenario.mic.len();
    let truth = scenario.truth.as_ref();
    let p = config.stft;
    if n < p.frame_len {
        return Err(Error::TooShort {
            len: n,
            needed: p.frame_len,
        });
    }

    let aec = if config.aec_enabled {
        run_aec(config, scenario.far.samples(), scenario.mic.samples(), truth).map_err(Error::at("echo canceller"))?
    } else {
        AecOutput {
            error: scenario.mic.samples().to_vec(),
            echo_estimate: vec![0.0; n],
            weights: vec![0.0; config.aec.taps],
            tail_energy: vec![0.0; n / p.hop + 1],
            misalignment: Vec::new(),
            double_talk_fraction: 0.0,
            diverged_at: None,
        }
    };

    let stft = Stft::new(p)?;
    let padding = Padding::new(n, p.frame_len, p.hop);
    let analyze = |x: &[f64]| -> Result<Spectrogram> { stft.analyze(&padding.pad(x, fs)?) };
    let err_spec = analyze(&aec.error).map_err(Error::at("stft"))?;
    let far_spec = analyze(scenario.far.samples()).map_err(Error::at("stft"))?;
    let trace = postfilter_gains(config, &err_spec, &far_spec, &aec, &stft).map_err(Error::at("postfilter"))?;

    let enhance = |x: &[f64]| -> Result<AudioSignal> {
        let mut s = analyze(x)?;
        for (l, g) in trace.gains.iter().enumerate() {
            s.apply_gains(l, g);
        }
        padding.strip(&stft.synthesize(&s)?)
    };
    let processed = if config.postfilter.stages.any() {
        enhance(&aec.error).map_err(Error::at("postfilter"))?
    } else {
        AudioSignal::new(aec.error.clone(), fs)?
    };
    let gain_range = trace
        .gains
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));

    let aec_error = AudioSignal::new(aec.error.clone(), fs)?;
    let metrics = &config.metrics;
    let (t20_s, ss_misalign_db) = misalignment_summary(&aec.misalignment, metrics.converged_fraction);

    let mut components = None;
    let mut aec_erle = None;
    let mut output_erle = None;
    let mut seg_snr_db = f64::NAN;
    let mut seg_sir_db = f64::NAN;
    let mut lsd_db = f64::NAN;
    if let Some(t) = truth {
        let residual: Vec<f64> = t.echo.samples().iter().zip(&aec.echo_estimate).map(|(e, y)| e - y).collect();
        let residual = match aec.diverged_at {
            // the bypassed part carries the full echo
            Some(at) => {
                let mut r = residual;
                for (i, v) in r.iter_mut().enumerate().skip(at.saturating_sub(1) as usize) {
                    *v = t.echo.samples()[i];
                }
                r
            }
            None => residual,
        };
        let comps = if config.postfilter.stages.any() {
            ProcessedComponents {
                residual_echo: enhance(&residual)?,
                near_early: enhance(t.near_early.samples())?,
                near_late: enhance(t.near_late.samples())?,
                noise: enhance(t.noise.samples())?,
            }
        } else {
            ProcessedComponents {
                residual_echo: AudioSignal::new(residual.clone(), fs)?,
                near_early: t.near_early.clone(),
                near_late: t.near_late.clone(),
                noise: t.noise.clone(),
            }
        };
        if t.echo.power() > 0.0 {
            aec_erle = Some(erle(&t.echo, &AudioSignal::new(residual, fs)?, metrics)?);
            output_erle = Some(erle(&t.echo, &comps.residual_echo, metrics)?);
        }
        if t.has_near {
            seg_snr_db = nan_on_no_activity(segmental_snr(&t.near_early, &processed, metrics))?;
            seg_sir_db = nan_on_no_activity(segmental_sir(&t.near_early, &comps.interference()?, metrics))?;
            lsd_db = lsd(&t.near_early, &processed, p, metrics.activity_threshold_db)?;
        }
        components = Some(comps);
    } else if let Some(r) = scenario.target() {
        seg_snr_db = nan_on_no_activity(segmental_snr(r, &processed, metrics))?;
        lsd_db = lsd(r, &processed, p, metrics.activity_threshold_db)?;
    }

    let mean_erle_db = output_erle.as_ref().map_or(f64::NAN, |e| e.mean_db);
    let report = MetricsReport {
        erle: output_erle.clone(),
        mean_erle_db,
        seg_snr_db,
        seg_sir_db,
        lsd_db,
        misalignment_trace: aec.misalignment.clone(),
    };
    Ok(PipelineResult {
        report,
        processed,
        aec_error,
        aec_erle,
        output_erle,
        t20_s,
        ss_misalign_db,
        t60: trace.t60,
        t60_source: trace.t60_source,
        diverged_at: aec.diverged_at,
        double_talk_fraction: aec.double_talk_fraction,
        gain_range,
        components,
    })
}

impl PipelineResult {
    pub fn csv_row(&self, config: &PipelineConfig) -> CsvRow {
        CsvRow {
            variant: if config.aec_enabled {
                config.aec.variant.kind().to_string()
            } else {
                "none".into()
            },
            environment: config.scenario.name.clone(),
            seed: config.scenario.seed.to_string(),
            mean_erle_db: self.report.mean_erle_db,
            t20_s: self.t20_s,
            ss_misalign_db: self.ss_misalign_db,
            seg_snr_db: self.report.seg_snr_db,
            seg_sir_db: self.report.seg_sir_db,
            lsd_db: self.report.lsd_db,
        }
    }
}

/// Files written by [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub processed_wav: PathBuf,
    pub residual_wav: PathBuf,
    pub metrics_csv: PathBuf,
}

/// Builds the scenario, processes it and, if `output.dir` is set, writes the
/// processed audio, the AEC residual and a one-row metrics CSV.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(PipelineResult, Option<OutputFiles>)> {
    config.validate()?;
    let scenario = Scenario::build(&config.scenario, config.postfilter.early_ms).map_err(Error::at("scenario"))?;
    let result = process(config, &scenario)?;
    let files = match &config.output.dir {
        Some(dir) => {
            let o = &config.output;
            let files = OutputFiles {
                processed_wav: dir.join(&o.processed_wav),
                residual_wav: dir.join(&o.residual_wav),
                metrics_csv: dir.join(&o.metrics_csv),
            };
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                message: e.to_string(),
            })?;
            write_wav(&files.processed_wav, &result.processed, o.encoding)?;
            write_wav(&files.residual_wav, &result.aec_error, o.encoding)?;
            csv::write(&files.metrics_csv, &[result.csv_row(config)])?;
            Some(files)
        }
        None => None,
    };
    Ok((result, files))
}
