use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtdParams {
    /// Geigel ratio: double-talk when `|mic| > threshold * max|far|`.
    pub threshold: f64,
    /// Far-end samples searched for the maximum.
    pub window: usize,
    /// Samples (including the triggering one) reported as double-talk after a trigger.
    pub hangover: usize,
}

impl Default for DtdParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            window: 1024,
            hangover: 240,
        }
    }
}

impl DtdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "geigel threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("dtd window must be positive".into()));
        }
        Ok(())
    }
}

/// Raw Geigel decision without hangover.
pub fn geigel_declares(mic: f64, far_history: &[f64], threshold: f64) -> bool {
    let peak = far_history.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    mic.abs() > threshold * peak
}

/// Geigel double-talk detector with hangover.
#[derive(Debug, Clone)]
pub struct DoubleTalkDetector {
    params: DtdParams,
    remaining: usize,
    // (sample index, |far|), magnitudes strictly decreasing front to back
    peaks: VecDeque<(u64, f64)>,
    n: u64,
}

impl DoubleTalkDetector {
    pub fn new(params: DtdParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            remaining: 0,
            peaks: VecDeque::new(),
            n: 0,
        })
    }

    pub fn params(&self) -> DtdParams {
        self.params
    }

    /// Hangover samples still pending after the current one.
    pub fn hangover_remaining(&self) -> usize {
        self.remaining
    }

    fn decide(&mut self, declared: bool) -> bool {
        if declared {
            self.remaining = self.params.hangover.saturating_sub(1);
            true
        } else if self.remaining > 0 {
            self.remaining -= 1;
            true
        } else {
            false
        }
    }

    /// Decision for `mic` given an explicit far-end history (newest first);
    /// only the first `window` entries are searched.
    pub fn detect(&mut self, mic: f64, far_history: &[f64]) -> bool {
        let w = far_history.len().min(self.params.window);
        let declared = geigel_declares(mic, &far_history[..w], self.params.threshold);
        self.decide(declared)
    }

    /// Streaming form: appends `far` to the internal window, then decides
    /// for `mic`. Equivalent to [`detect`](Self::detect) on the last
    /// `window` far-end samples.
    pub fn observe(&mut self, far: f64, mic: f64) -> bool {
        let mag = far.abs();
        while self.peaks.back().is_some_and(|&(_, m)| m <= mag) {
            self.peaks.pop_back();
        }
        self.peaks.push_back((self.n, mag));
        let window = self.params.window as u64;
        while self.peaks.front().is_some_and(|&(i, _)| i + window <= self.n) {
            self.peaks.pop_front();
        }
        self.n += 1;
        let peak = self.peaks.front().map_or(0.0, |&(_, m)| m);
        self.decide(mic.abs() > self.params.threshold * peak)
    }

    pub fn reset(&mut self) {
        self.remaining = 0;
        self.peaks.clear();
        self.n = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_far_end_with_speech_is_double_talk() {
        let mut d = DoubleTalkDetector::new(DtdParams::default()).unwrap();
        assert!(d.detect(0.1, &[0.0; 1024]));
    }

    #[test]
    fn attenuated_echo_is_not_double_talk() {
        // echo 12 dB below the far-end peak: ratio 10^(-12/20) = 0.251 < 0.5
        let mut d = DoubleTalkDetector::new(DtdParams::default()).unwrap();
        let far: Vec<f64> = (0..1024).map(|i| 0.8 * ((i as f64) * 0.1).sin()).collect();
        let peak = far.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let echo = peak * 10f64.powf(-12.0 / 20.0);
        assert!(!d.detect(echo, &far));
    }

    #[test]
    fn hangover_holds_after_single_trigger() {
        let params = DtdParams {
            hangover: 5,
            ..DtdParams::default()
        };
        let mut d = DoubleTalkDetector::new(params).unwrap();
        let far = vec![1.0; 16];
        assert!(d.detect(0.9, &far));
        for _ in 0..4 {
            assert!(d.detect(0.0, &far));
        }
        assert!(!d.detect(0.0, &far));
    }

    #[test]
    fn streaming_matches_explicit_history() {
        let params = DtdParams {
            window: 32,
            hangover: 3,
            ..DtdParams::default()
        };
        let mut a = DoubleTalkDetector::new(params).unwrap();
        let mut b = DoubleTalkDetector::new(params).unwrap();
        let mut hist: Vec<f64> = Vec::new();
        let mut state = 12345u64;
        for _ in 0..2000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let far = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * ((state % 7) as f64);
            let mic = ((state >> 20) % 1000) as f64 / 1000.0 - 0.5;
            hist.insert(0, far);
            hist.truncate(32);
            assert_eq!(a.observe(far, mic), b.detect(mic, &hist));
        }
    }

    #[test]
    fn invalid_threshold_rejected() {
        let params = DtdParams {
            threshold: 1.5,
            ..DtdParams::default()
        };
        assert!(DoubleTalkDetector::new(params).is_err());
    }
}
