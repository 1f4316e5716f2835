//! Frame-level features: MFCC extraction, context stacking, tandem
//! concatenation and the per-utterance summary vector.

mod matf;
mod mfcc;
mod wav;

pub use matf::{read_corpus_dir, read_matf, write_corpus_dir, write_matf, MATF_VERSION};
pub use mfcc::{compute_mfcc, MfccConfig};
pub use wav::read_wav;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Raw mono audio for one utterance.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub utterance_id: String,
    pub speaker_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// What a feature matrix holds. Not persisted in MATF files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Mfcc,
    Tandem,
    Bottleneck,
    Stacked,
}

/// A `T x D` matrix of frame features for one utterance.
///
/// Construction checks that `T >= 1`, `D >= 1` and every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub utterance_id: String,
    pub speaker_id: String,
    frames: Array2<f64>,
    pub frame_shift_ms: u32,
    pub kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
        frames: Array2<f64>,
        frame_shift_ms: u32,
        kind: FeatureKind,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::Utterance {
                utterance_id,
                detail: format!("empty feature matrix {}x{}", frames.nrows(), frames.ncols()),
            });
        }
        if let Some(((t, d), v)) = frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Utterance {
                utterance_id,
                detail: format!("non-finite value {v} at frame {t}, dim {d}"),
            });
        }
        Ok(Self {
            utterance_id,
            speaker_id: speaker_id.into(),
            frames: frames.as_standard_layout().into_owned(),
            frame_shift_ms,
            kind,
        })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let row = self.frames.row(t);
        row.to_slice().expect("standard layout")
    }

    /// Same metadata, new matrix and kind.
    pub fn with_frames(&self, frames: Array2<f64>, kind: FeatureKind) -> Result<Self> {
        Self::new(
            self.utterance_id.clone(),
            self.speaker_id.clone(),
            frames,
            self.frame_shift_ms,
            kind,
        )
    }
}

/// Regression deltas over `+-window` frames with edge replication.
pub fn deltas(frames: &Array2<f64>, window: usize) -> Array2<f64> {
    let (t_len, dim) = frames.dim();
    let mut out = Array2::zeros((t_len, dim));
    if window == 0 || t_len == 0 {
        return out;
    }
    let denom: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let last = t_len as isize - 1;
    for t in 0..t_len {
        let mut row = out.row_mut(t);
        for k in 1..=window {
            let fwd = (t as isize + k as isize).min(last) as usize;
            let back = (t as isize - k as isize).max(0) as usize;
            let kf = k as f64;
            for d in 0..dim {
                row[d] += kf * (frames[[fwd, d]] - frames[[back, d]]);
            }
        }
        row.mapv_inplace(|v| v / denom);
    }
    out
}

/// Stacks each frame with `radius` neighbours on both sides.
///
/// Output row `t` is `[f(t-w) .. f(t) .. f(t+w)]`, out-of-range neighbours
/// replicated from the nearest edge frame.
pub fn stack_context(f: &FeatureSequence, radius: usize) -> FeatureSequence {
    let (t_len, dim) = f.frames.dim();
    let width = 2 * radius + 1;
    let mut out = Array2::zeros((t_len, dim * width));
    let last = t_len as isize - 1;
    for t in 0..t_len {
        for (b, off) in (-(radius as isize)..=radius as isize).enumerate() {
            let src = (t as isize + off).clamp(0, last) as usize;
            out.slice_mut(s![t, b * dim..(b + 1) * dim])
                .assign(&f.frames.row(src));
        }
    }
    let kind = if radius == 0 { f.kind } else { FeatureKind::Stacked };
    f.with_frames(out, kind).expect("stacking preserves finiteness")
}

/// Frame-wise concatenation of feature streams, columns in input order.
pub fn concat_tandem(parts: &[&FeatureSequence]) -> Result<FeatureSequence> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("concat_tandem needs at least one part".into()))?;
    if parts.len() == 1 {
        return Ok((*first).clone());
    }
    let t_len = first.num_frames();
    for p in &parts[1..] {
        if p.utterance_id != first.utterance_id {
            return Err(Error::Invalid(format!(
                "tandem parts disagree on utterance: {} vs {}",
                first.utterance_id, p.utterance_id
            )));
        }
        if p.num_frames() != t_len {
            return Err(Error::Utterance {
                utterance_id: first.utterance_id.clone(),
                detail: format!("tandem parts have {} and {} frames", t_len, p.num_frames()),
            });
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.frames.view()).collect();
    let joined = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    first.with_frames(joined, FeatureKind::Tandem)
}

/// Per-dimension mean followed by per-dimension (population) standard
/// deviation: a `2D` utterance-level conditioning vector.
pub fn utterance_summary(f: &FeatureSequence) -> Array1<f64> {
    let dim = f.dim();
    let mean = f.frames.mean_axis(Axis(0)).expect("T >= 1");
    let mut out = Array1::zeros(2 * dim);
    out.slice_mut(s![..dim]).assign(&mean);
    for d in 0..dim {
        let col = f.frames.column(d);
        let var = col.iter().map(|v| (v - mean[d]).powi(2)).sum::<f64>() / col.len() as f64;
        out[dim + d] = var.sqrt();
    }
    out
}

/// Repeats a vector on every frame of `like`, for tandem concatenation.
pub fn broadcast(v: ArrayView1<f64>, like: &FeatureSequence) -> FeatureSequence {
    let t_len = like.num_frames();
    let mut out = Array2::zeros((t_len, v.len()));
    for mut row in out.rows_mut() {
        row.assign(&v);
    }
    like.with_frames(out, FeatureKind::Tandem)
        .expect("summary vector is finite")
}
