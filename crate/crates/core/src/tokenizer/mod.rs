//! Unsupervised discovery of one acoustic token set.
//!
//! A layer is fixed by `(m, n)`: `n` left-to-right HMMs of `m` states each.
//! Training alternates hard-assignment model re-estimation with token-loop
//! Viterbi decoding until the frame labels stop changing.

mod hmm;
mod init;
mod io;
mod train;

pub use hmm::{Gaussian, TokenHmm, TokenSetModel, TRANSITION_FLOOR};
pub use init::{default_seg_len, initialize_labels, kmeans};
pub use io::{read_labels_csv, read_matm, write_labels_csv, write_matm, MATM_VERSION};
pub use train::{
    decode, estimate_models, joint_loglik, train_layer, EstimateOptions, EstimateReport,
    LayerResult, TrainOptions, TrainReport,
};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// Temporal (`m`, states per token) and phonetic (`n`, token count)
/// granularity of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HyperParams {
    pub m: usize,
    pub n: usize,
}

impl HyperParams {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m < 1 || n < 2 {
            return Err(Error::Invalid(format!(
                "hyperparameters need m >= 1 and n >= 2, got m={m}, n={n}"
            )));
        }
        Ok(Self { m, n })
    }
}

impl std::fmt::Display for HyperParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "m{}_n{}", self.m, self.n)
    }
}

/// One token occurrence covering frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub token: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceLabels {
    pub utterance_id: String,
    pub segments: Vec<Segment>,
}

impl UtteranceLabels {
    pub fn num_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    /// Token id of every frame.
    pub fn frame_tokens(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_frames());
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.token, s.len()));
        }
        out
    }
}

/// Segment labels for every utterance of a corpus, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenLabeling {
    pub utterances: Vec<UtteranceLabels>,
}

impl TokenLabeling {
    /// Checks contiguity, coverage, token range and the `m`-frame minimum
    /// segment duration (waived for a lone segment when `T < m`).
    pub fn validate(&self, corpus: &[FeatureSequence], psi: HyperParams) -> Result<()> {
        if self.utterances.len() != corpus.len() {
            return Err(Error::Invalid(format!(
                "labeling covers {} utterances, corpus has {}",
                self.utterances.len(),
                corpus.len()
            )));
        }
        for (u, f) in self.utterances.iter().zip(corpus) {
            let bad = |detail: String| Error::Utterance {
                utterance_id: u.utterance_id.clone(),
                detail,
            };
            if u.utterance_id != f.utterance_id {
                return Err(bad(format!("labels are for {}, features for {}", u.utterance_id, f.utterance_id)));
            }
            let t_len = f.num_frames();
            let mut pos = 0;
            for s in &u.segments {
                if s.start != pos || s.is_empty() {
                    return Err(bad(format!("segment {}..{} breaks contiguity at {pos}", s.start, s.end)));
                }
                if s.token >= psi.n {
                    return Err(bad(format!("token {} out of range for n={}", s.token, psi.n)));
                }
                let lone_short = t_len < psi.m && u.segments.len() == 1;
                if s.len() < psi.m && !lone_short {
                    return Err(bad(format!(
                        "segment {}..{} shorter than m={}",
                        s.start, s.end, psi.m
                    )));
                }
                pos = s.end;
            }
            if pos != t_len {
                return Err(bad(format!("labels end at {pos}, utterance has {t_len} frames")));
            }
        }
        Ok(())
    }

    pub fn num_segments(&self) -> usize {
        self.utterances.iter().map(|u| u.segments.len()).sum()
    }

    /// Fraction of frames whose token id differs between two labelings of
    /// the same corpus.
    pub fn changed_fraction(&self, other: &TokenLabeling) -> f64 {
        let (mut changed, mut total) = (0usize, 0usize);
        for (a, b) in self.utterances.iter().zip(&other.utterances) {
            let (ta, tb) = (a.frame_tokens(), b.frame_tokens());
            total += ta.len();
            changed += ta.iter().zip(&tb).filter(|(x, y)| x != y).count();
        }
        if total == 0 {
            0.0
        } else {
            changed as f64 / total as f64
        }
    }
}
