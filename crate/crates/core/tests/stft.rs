use aecpost::signal::{generate_white_noise, AudioSignal};
use aecpost::stft::*;
use proptest::prelude::*;

fn interior_error(x: &AudioSignal, y: &AudioSignal, edge: usize) -> f64 {
    let a = &x.samples()[edge..x.len() - edge];
    let b = &y.samples()[edge..y.len() - edge];
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    let den: f64 = a.iter().map(|p| p * p).sum();
    (num / den).sqrt()
}

#[test]
fn bin_centred_sinusoid_is_concentrated() {
    let p = FrameParams::default();
    let k = 20.0;
    let f = k * 16_000.0 / p.fft_len as f64;
    let x: Vec<f64> = (0..4096).map(|n| (std::f64::consts::TAU * f * n as f64 / 16_000.0).sin()).collect();
    let s = stft(&AudioSignal::new(x, 16_000).unwrap(), p).unwrap();
    for l in 0..s.n_frames() {
        let pw = s.power(l);
        let total: f64 = pw.iter().sum();
        let near: f64 = pw[19..=21].iter().sum();
        assert!(near / total >= 0.99, "frame {l}: {}", near / total);
    }
}

#[test]
fn parseval_per_frame() {
    let p = FrameParams::default();
    let x = generate_white_noise(0.2, 16_000, 4).unwrap();
    let s = stft(&x, p).unwrap();
    let w = p.window();
    for l in 0..s.n_frames() {
        let time: f64 = x.samples()[l * p.hop..l * p.hop + p.frame_len]
            .iter()
            .zip(&w)
            .map(|(v, w)| (v * w).powi(2))
            .sum();
        // one-sided spectrum: interior bins count twice
        let pw = s.power(l);
        let last = pw.len() - 1;
        let spec: f64 = pw.iter().enumerate().map(|(k, v)| if k == 0 || k == last { *v } else { 2.0 * v }).sum::<f64>()
            / p.fft_len as f64;
        assert!((spec / time - 1.0).abs() < 1e-9);
    }
}

#[test]
fn zeros_and_linearity() {
    let p = FrameParams::default();
    let z = AudioSignal::zeros(2048, 16_000);
    let s = stft(&z, p).unwrap();
    assert!(s.frames().all(|f| f.iter().all(|c| c.norm() == 0.0)));
    assert!(istft(&Spectrogram::zeros(p, 2048, 16_000)).unwrap().samples().iter().all(|&v| v == 0.0));

    let a = generate_white_noise(0.25, 16_000, 1).unwrap();
    let b = generate_white_noise(0.25, 16_000, 2).unwrap();
    let mix = a.scaled(2.0).add(&b.scaled(-0.5)).unwrap();
    let (sa, sb, sm) = (stft(&a, p).unwrap(), stft(&b, p).unwrap(), stft(&mix, p).unwrap());
    for l in 0..sm.n_frames() {
        for k in 0..sm.n_bins() {
            let want = sa.frame(l)[k] * 2.0 - sb.frame(l)[k] * 0.5;
            assert!((sm.frame(l)[k] - want).norm() < 1e-10);
        }
    }
}

#[test]
fn frame_count_and_short_input() {
    let p = FrameParams::default();
    for len in [512, 513, 767, 768, 16_000] {
        let s = stft(&AudioSignal::zeros(len, 16_000), p).unwrap();
        assert_eq!(s.n_frames(), (len - 512) / 256 + 1);
        assert_eq!(s.n_bins(), 257);
    }
    assert!(stft(&AudioSignal::zeros(100, 16_000), p).is_err());
}

#[test]
fn reconstruction_of_random_second() {
    let p = FrameParams::default();
    let x = generate_white_noise(1.0, 16_000, 42).unwrap();
    let y = istft(&stft(&x, p).unwrap()).unwrap();
    assert_eq!(y.len(), x.len());
    assert!(interior_error(&x, &y, p.frame_len) <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_for_other_frame_lengths(seed in 0u64..10_000, half in 16usize..256) {
        let p = FrameParams::with_frame_len(2 * half);
        let x = generate_white_noise(0.3, 16_000, seed).unwrap();
        let y = istft(&stft(&x, p).unwrap()).unwrap();
        prop_assert!(interior_error(&x, &y, p.frame_len) <= 1e-10);
    }
}
