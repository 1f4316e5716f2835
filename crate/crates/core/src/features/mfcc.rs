//! MFCC with log energy, deltas and double deltas.
//!
//! Chain: pre-emphasis, framing, Hamming window, power spectrum, triangular
//! mel filterbank, log, DCT-II. Static cepstra `c1..cK` are followed by the
//! log frame energy, then the delta and delta-delta blocks of both.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{deltas, FeatureKind, FeatureSequence, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub window_length_ms: f64,
    pub frame_shift_ms: u32,
    pub num_mel_filters: usize,
    pub num_cepstra: usize,
    pub include_energy: bool,
    pub delta_window: usize,
    /// Lower bound for every log-energy value (frame energy and mel bands).
    pub energy_floor: f64,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_length_ms: 25.0,
            frame_shift_ms: 10,
            num_mel_filters: 26,
            num_cepstra: 12,
            include_energy: true,
            delta_window: 2,
            energy_floor: -50.0,
            pre_emphasis: 0.97,
        }
    }
}

impl MfccConfig {
    pub fn static_dim(&self) -> usize {
        self.num_cepstra + usize::from(self.include_energy)
    }

    pub fn output_dim(&self) -> usize {
        3 * self.static_dim()
    }

    fn validate(&self) -> Result<()> {
        if self.num_cepstra >= self.num_mel_filters {
            return Err(Error::Invalid(format!(
                "num_cepstra ({}) must be below num_mel_filters ({})",
                self.num_cepstra, self.num_mel_filters
            )));
        }
        if self.window_length_ms <= 0.0 || self.frame_shift_ms == 0 {
            return Err(Error::Invalid("window and shift must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over `fft_size / 2 + 1` bins, equally spaced on the mel
/// scale between 0 Hz and Nyquist.
fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: f64) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((num_filters, bins));
    for m in 0..num_filters {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate / fft_size as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

struct FrameAnalyzer {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
}

impl FrameAnalyzer {
    fn new(cfg: &MfccConfig, window_len: usize, sample_rate: f64) -> Self {
        let fft_size = window_len.next_power_of_two();
        let window = (0..window_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window_len - 1).max(1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let m = cfg.num_mel_filters;
        let scale = (2.0 / m as f64).sqrt();
        let dct = Array2::from_shape_fn((cfg.num_cepstra, m), |(i, j)| {
            scale * (PI * (i + 1) as f64 * (j as f64 + 0.5) / m as f64).cos()
        });
        Self {
            window,
            fft,
            fft_size,
            filterbank: mel_filterbank(m, fft_size, sample_rate),
            dct,
        }
    }

    /// Static coefficients for one pre-emphasised frame.
    fn analyze(&self, frame: &[f64], cfg: &MfccConfig, out: &mut [f64]) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..self.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = self
            .filterbank
            .rows()
            .into_iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.ln().max(cfg.energy_floor)
            })
            .collect();
        for (i, row) in self.dct.rows().into_iter().enumerate() {
            out[i] = row.iter().zip(&log_mel).map(|(c, l)| c * l).sum();
        }
        if cfg.include_energy {
            let e: f64 = frame.iter().map(|x| x * x).sum();
            out[cfg.num_cepstra] = e.ln().max(cfg.energy_floor);
        }
    }
}

/// Computes MFCC features for one waveform.
///
/// Frame `t` covers samples `[t * shift, t * shift + window)`; trailing
/// samples that do not fill a window are dropped.
pub fn compute_mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    if w.sample_rate == 0 {
        return Err(Error::Utterance {
            utterance_id: w.utterance_id.clone(),
            detail: "sample rate is zero".into(),
        });
    }
    let sr = w.sample_rate as f64;
    let window_len = (cfg.window_length_ms * sr / 1000.0).round() as usize;
    let shift = (cfg.frame_shift_ms as f64 * sr / 1000.0).round() as usize;
    if w.samples.len() < window_len || window_len == 0 {
        return Err(Error::Utterance {
            utterance_id: w.utterance_id.clone(),
            detail: format!(
                "{} samples is shorter than one {window_len}-sample analysis window",
                w.samples.len()
            ),
        });
    }
    let num_frames = (w.samples.len() - window_len) / shift + 1;

    let mut emph = Vec::with_capacity(w.samples.len());
    emph.push(w.samples[0]);
    emph.extend(w.samples.windows(2).map(|p| p[1] - cfg.pre_emphasis * p[0]));

    let analyzer = FrameAnalyzer::new(cfg, window_len, sr);
    let mut stat = Array2::zeros((num_frames, cfg.static_dim()));
    for t in 0..num_frames {
        let frame = &emph[t * shift..t * shift + window_len];
        let mut row = stat.row_mut(t);
        analyzer.analyze(frame, cfg, row.as_slice_mut().expect("standard layout"));
    }
    let d1 = deltas(&stat, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    let frames = concatenate(Axis(1), &[stat.view(), d1.view(), d2.view()]).expect("same rows");
    FeatureSequence::new(
        w.utterance_id.clone(),
        w.speaker_id.clone(),
        frames,
        cfg.frame_shift_ms,
        FeatureKind::Mfcc,
    )
}
