//! Static MFCC coefficients against a from-scratch reference that uses a
//! naive O(N^2) DFT instead of the FFT path.

use std::f64::consts::PI;

use matdnn::features::{compute_mfcc, MfccConfig, Waveform};

fn reference_static(samples: &[f64], sr: f64, frame_idx: usize) -> Vec<f64> {
    let win = 400;
    let hop = 160;
    let nfft = 512;
    let nfilt = 26;
    let ncep = 12;

    // pre-emphasis over the whole signal
    let mut emph = vec![samples[0]];
    for n in 1..samples.len() {
        emph.push(samples[n] - 0.97 * samples[n - 1]);
    }
    let frame = &emph[frame_idx * hop..frame_idx * hop + win];

    let mut power = vec![0.0; nfft / 2 + 1];
    for (k, p) in power.iter_mut().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &x) in frame.iter().enumerate() {
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos();
            let ang = -2.0 * PI * (k * n) as f64 / nfft as f64;
            re += x * w * ang.cos();
            im += x * w * ang.sin();
        }
        *p = re * re + im * im;
    }

    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let centers: Vec<f64> = (0..nfilt + 2).map(|i| inv(top * i as f64 / (nfilt + 1) as f64)).collect();
    let mut logmel = Vec::new();
    for j in 0..nfilt {
        let mut e = 0.0;
        for (k, p) in power.iter().enumerate() {
            let f = k as f64 * sr / nfft as f64;
            let w = if f > centers[j] && f <= centers[j + 1] {
                (f - centers[j]) / (centers[j + 1] - centers[j])
            } else if f > centers[j + 1] && f < centers[j + 2] {
                (centers[j + 2] - f) / (centers[j + 2] - centers[j + 1])
            } else {
                0.0
            };
            e += w * p;
        }
        logmel.push(e.ln().max(-50.0));
    }

    let mut out = Vec::new();
    for i in 1..=ncep {
        let mut c = 0.0;
        for (j, l) in logmel.iter().enumerate() {
            c += l * (PI * i as f64 * (j as f64 + 0.5) / nfilt as f64).cos();
        }
        out.push(c * (2.0 / nfilt as f64).sqrt());
    }
    let energy: f64 = frame.iter().map(|x| x * x).sum();
    out.push(energy.ln().max(-50.0));
    out
}

#[test]
fn sine_440_matches_reference() {
    let sr = 16000.0;
    let samples: Vec<f64> = (0..16000).map(|n| (2.0 * PI * 440.0 * n as f64 / sr).sin()).collect();
    let w = Waveform {
        utterance_id: "sine".into(),
        speaker_id: "x".into(),
        samples: samples.clone(),
        sample_rate: 16000,
    };
    let f = compute_mfcc(&w, &MfccConfig::default()).unwrap();
    for t in [0, 1, 37, 97] {
        let want = reference_static(&samples, sr, t);
        for (d, (got, exp)) in f.frame(t)[..13].iter().zip(&want).enumerate() {
            assert!((got - exp).abs() < 1e-6, "frame {t} coef {d}: {got} vs {exp}");
        }
    }
}
