//! Frequency-domain block LMS: overlap-save filtering with a 2L transform,
//! per-bin power-normalised step and the gradient constraint (the
//! correlation is windowed back to L taps before it enters the weights).

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

pub(crate) struct FblmsState {
    taps: usize,
    smoothing: f64,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    /// `[previous block | current block]`, oldest sample first.
    input: Vec<f64>,
    errors: Vec<f64>,
    any_adapting: bool,
    fill: usize,
    freq_weights: Vec<Complex64>,
    power: Vec<f64>,
    power_ready: bool,
    input_spec: Vec<Complex64>,
    work_spec: Vec<Complex64>,
    work_time: Vec<f64>,
}

impl FblmsState {
    pub(crate) fn new(taps: usize, smoothing: f64) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        let n = 2 * taps;
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Self {
            taps,
            smoothing,
            input_spec: forward.make_output_vec(),
            work_spec: forward.make_output_vec(),
            work_time: forward.make_input_vec(),
            freq_weights: forward.make_output_vec(),
            forward,
            inverse,
            input: vec![0.0; n],
            errors: vec![0.0; taps],
            any_adapting: false,
            fill: 0,
            power: vec![0.0; taps + 1],
            power_ready: false,
        }
    }

    pub(crate) fn fill(&self) -> usize {
        self.fill
    }

    pub(crate) fn freq_weights(&self) -> &[Complex64] {
        &self.freq_weights
    }

    pub(crate) fn reset(&mut self) {
        self.input.iter_mut().for_each(|v| *v = 0.0);
        self.errors.iter_mut().for_each(|v| *v = 0.0);
        self.freq_weights.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.power.iter_mut().for_each(|v| *v = 0.0);
        self.power_ready = false;
        self.any_adapting = false;
        self.fill = 0;
    }

    /// Recomputes the frequency-domain weights from time-domain `weights`.
    pub(crate) fn sync_weights(&mut self, weights: &[f64]) {
        self.work_time.iter_mut().for_each(|v| *v = 0.0);
        self.work_time[..self.taps].copy_from_slice(weights);
        self.forward
            .process(&mut self.work_time, &mut self.freq_weights)
            .expect("fft sizes match");
    }

    /// Records one sample of the per-sample path. Returns true when the block
    /// is complete and [`finish_block`](Self::finish_block) must run.
    pub(crate) fn push_sample(&mut self, far: f64, error: f64, adapting: bool) -> bool {
        self.input[self.taps + self.fill] = far;
        self.errors[self.fill] = if adapting { error } else { 0.0 };
        self.any_adapting |= adapting;
        self.fill += 1;
        self.fill == self.taps
    }

    /// Overlap-save output for a full block with the current weights.
    /// Leaves the block staged for [`finish_block`](Self::finish_block).
    pub(crate) fn filter_block(&mut self, far: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.fill, 0);
        let l = self.taps;
        self.input[l..].copy_from_slice(far);
        self.transform_input();
        for ((w, u), fw) in self.work_spec.iter_mut().zip(&self.input_spec).zip(&self.freq_weights) {
            *w = u * fw;
        }
        self.inverse_work();
        let scale = 1.0 / (2 * l) as f64;
        for (o, v) in out.iter_mut().zip(&self.work_time[l..]) {
            *o = v * scale;
        }
        self.fill = l;
    }

    pub(crate) fn stage_errors(&mut self, errors: &[f64], adapting: &[bool]) {
        for ((dst, &e), &a) in self.errors.iter_mut().zip(errors).zip(adapting) {
            *dst = if a { e } else { 0.0 };
        }
        self.any_adapting = adapting.iter().any(|&a| a);
    }

    fn transform_input(&mut self) {
        self.work_time.copy_from_slice(&self.input);
        self.forward
            .process(&mut self.work_time, &mut self.input_spec)
            .expect("fft sizes match");
    }

    fn inverse_work(&mut self) {
        self.work_spec[0].im = 0.0;
        let last = self.work_spec.len() - 1;
        self.work_spec[last].im = 0.0;
        self.inverse
            .process(&mut self.work_spec, &mut self.work_time)
            .expect("fft sizes match");
    }

    /// Constrained, normalised gradient step for the staged block. Updates
    /// `weights` in place, re-syncs the frequency-domain copy and slides the
    /// input buffer. `input_ready` says whether `input_spec` already holds
    /// the transform of the current input.
    pub(crate) fn finish_block(&mut self, weights: &mut [f64], mu: f64, delta: f64, input_ready: bool) {
        let l = self.taps;
        if !input_ready {
            self.transform_input();
        }
        let inst = self.input_spec.iter().map(|u| 0.5 * u.norm_sqr());
        if self.power_ready {
            let b = self.smoothing;
            // fast attack: an onset after silence must not meet a stale, tiny power
            self.power
                .iter_mut()
                .zip(inst)
                .for_each(|(p, i)| *p = (b * *p + (1.0 - b) * i).max(i));
        } else {
            self.power.iter_mut().zip(inst).for_each(|(p, i)| *p = i);
            self.power_ready = true;
        }

        if self.any_adapting {
            self.work_time[..l].iter_mut().for_each(|v| *v = 0.0);
            self.work_time[l..].copy_from_slice(&self.errors);
            self.forward
                .process(&mut self.work_time, &mut self.work_spec)
                .expect("fft sizes match");
            for ((g, u), p) in self.work_spec.iter_mut().zip(&self.input_spec).zip(&self.power) {
                *g = u.conj() * *g * (mu / (p + delta));
            }
            self.inverse_work();
            let scale = 1.0 / (2 * l) as f64;
            for (w, g) in weights.iter_mut().zip(&self.work_time[..l]) {
                *w += g * scale;
            }
            self.sync_weights(weights);
        }

        self.input.copy_within(l.., 0);
        self.errors.iter_mut().for_each(|v| *v = 0.0);
        self.any_adapting = false;
        self.fill = 0;
    }
}
