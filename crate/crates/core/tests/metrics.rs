use aecpost::metrics::*;
use aecpost::signal::{generate_speech_like, generate_white_noise, AudioSignal};
use aecpost::stft::FrameParams;
use aecpost::Error;
use proptest::prelude::*;

fn params() -> MetricParams {
    MetricParams::default()
}

#[test]
fn erle_examples() {
    let echo = generate_white_noise(2.0, 16_000, 1).unwrap();
    let t = erle(&echo, &echo, &params()).unwrap();
    assert!(t.values.iter().all(|v| v.unwrap().abs() < 1e-12));
    let t = erle(&echo, &echo.scaled(0.1), &params()).unwrap();
    assert!(t.values.iter().all(|v| (v.unwrap() - 20.0).abs() < 1e-9));
    assert!((t.mean_db - 20.0).abs() < 1e-9);
    assert!(matches!(erle(&echo, &AudioSignal::zeros(10, 16_000), &params()), Err(Error::LengthMismatch(..))));
}

#[test]
fn erle_ignores_windows_without_echo() {
    let mut e = generate_white_noise(2.0, 16_000, 2).unwrap().into_samples();
    // first second silent (below -60 dBFS)
    e[..16_000].iter_mut().for_each(|v| *v *= 1e-4);
    let echo = AudioSignal::new(e, 16_000).unwrap();
    let t = erle(&echo, &echo.scaled(0.5), &params()).unwrap();
    assert!(t.values[..4].iter().all(Option::is_none));
    assert!(t.values[4..].iter().all(Option::is_some));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn erle_is_scale_free(c in 0.1f64..100.0, seed in 0u64..500) {
        let echo = generate_white_noise(1.0, 16_000, seed).unwrap();
        let res = generate_white_noise(1.0, 16_000, seed + 1).unwrap().scaled(0.05);
        let a = erle(&echo, &res, &params()).unwrap();
        let b = erle(&echo.scaled(c), &res.scaled(c), &params()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn self_comparison_hits_the_clamp(seed in 0u64..500) {
        let x = generate_speech_like(1.5, 16_000, seed).unwrap();
        prop_assert_eq!(segmental_snr(&x, &x, &params()).unwrap(), params().clamp_db);
        prop_assert_eq!(lsd(&x, &x, FrameParams::default(), 40.0).unwrap(), 0.0);
    }
}

/// Noise scaled frame by frame to the reference power of that frame.
fn equal_power_noise(reference: &AudioSignal, seed: u64) -> AudioSignal {
    let frame = (params().frame_s * 16_000.0).round() as usize;
    let n = generate_white_noise(reference.duration_s(), 16_000, seed).unwrap();
    let mut out = Vec::with_capacity(reference.len());
    for (r, v) in reference.samples().chunks(frame).zip(n.samples().chunks(frame)) {
        let pr: f64 = r.iter().map(|x| x * x).sum();
        let pv: f64 = v.iter().map(|x| x * x).sum();
        let g = (pr / pv).sqrt();
        out.extend(v.iter().map(|x| x * g));
    }
    AudioSignal::new(out, 16_000).unwrap()
}

#[test]
fn segmental_examples() {
    let s = generate_speech_like(4.0, 16_000, 3).unwrap();
    assert_eq!(segmental_snr(&s, &s, &params()).unwrap(), 35.0);
    let n = equal_power_noise(&s, 4);
    let snr = segmental_snr(&s, &s.add(&n).unwrap(), &params()).unwrap();
    assert!(snr.abs() <= 0.5, "{snr}");
    assert!(segmental_sir(&s, &n, &params()).unwrap().abs() < 1e-9);
    assert_eq!(segmental_sir(&s, &AudioSignal::zeros(s.len(), 16_000), &params()).unwrap(), 35.0);
    let silent = AudioSignal::zeros(s.len(), 16_000);
    assert!(matches!(segmental_snr(&silent, &s, &params()), Err(Error::NoActiveFrames)));
}

#[test]
fn silent_reference_frames_do_not_count() {
    let frame = 512;
    let mut r = generate_white_noise(1.0, 16_000, 5).unwrap().into_samples();
    r[..4 * frame].iter_mut().for_each(|v| *v = 0.0);
    let reference = AudioSignal::new(r, 16_000).unwrap();
    let noise = generate_white_noise(1.0, 16_000, 6).unwrap().scaled(0.3);
    let a = reference.add(&noise).unwrap();
    let mut changed = a.clone().into_samples();
    changed[..4 * frame].iter_mut().for_each(|v| *v = 5.0);
    let b = AudioSignal::new(changed, 16_000).unwrap();
    assert_eq!(segmental_snr(&reference, &a, &params()).unwrap(), segmental_snr(&reference, &b, &params()).unwrap());
}

#[test]
fn lsd_of_uniform_gain() {
    let x = generate_white_noise(1.0, 16_000, 7).unwrap();
    let d = lsd(&x, &x.scaled(10f64.sqrt()), FrameParams::default(), 40.0).unwrap();
    // bins under the -50 dB floor can only pull the distance down
    assert!(d <= 10.0 + 1e-9 && d > 9.95, "{d}");
}

/// Brute-force LSD: direct DFT sums, same framing, floor and activity rule.
fn lsd_oracle(a: &[f64], b: &[f64], p: FrameParams, activity_db: f64) -> f64 {
    let w = p.window();
    let spectrum = |x: &[f64], start: usize| -> Vec<f64> {
        (0..p.n_bins())
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..p.frame_len {
                    let ph = -std::f64::consts::TAU * (k * n) as f64 / p.fft_len as f64;
                    let v = x[start + n] * w[n];
                    re += v * ph.cos();
                    im += v * ph.sin();
                }
                re * re + im * im
            })
            .collect()
    };
    let frames = p.n_frames(a.len());
    let sa: Vec<Vec<f64>> = (0..frames).map(|l| spectrum(a, l * p.hop)).collect();
    let sb: Vec<Vec<f64>> = (0..frames).map(|l| spectrum(b, l * p.hop)).collect();
    let ea: Vec<f64> = sa.iter().map(|s| s.iter().sum()).collect();
    let eb: Vec<f64> = sb.iter().map(|s| s.iter().sum()).collect();
    let ma = ea.iter().cloned().fold(0.0, f64::max);
    let mb = eb.iter().cloned().fold(0.0, f64::max);
    let rel = 10f64.powf(-activity_db / 10.0);
    let mut total = 0.0;
    let mut count = 0;
    for l in 0..frames {
        if ea[l] < rel * ma && eb[l] < rel * mb {
            continue;
        }
        let peak = sa[l].iter().chain(&sb[l]).cloned().fold(0.0, f64::max);
        let eps = 1e-5 * peak;
        let ms: f64 = sa[l]
            .iter()
            .zip(&sb[l])
            .map(|(x, y)| (10.0 * (x.max(eps) / y.max(eps)).log10()).powi(2))
            .sum::<f64>()
            / p.n_bins() as f64;
        total += ms.sqrt();
        count += 1;
    }
    total / count as f64
}

#[test]
fn lsd_matches_direct_summation_and_is_symmetric() {
    let p = FrameParams::with_frame_len(128);
    let a = generate_speech_like(0.25, 16_000, 8).unwrap();
    let b = generate_white_noise(0.25, 16_000, 9).unwrap().scaled(0.2).add(&a.scaled(0.7)).unwrap();
    let got = lsd(&a, &b, p, 40.0).unwrap();
    let want = lsd_oracle(a.samples(), b.samples(), p, 40.0);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert_eq!(got, lsd(&b, &a, p, 40.0).unwrap());
}
