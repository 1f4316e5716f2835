//! Mutual reinforcement across layers: fuse token boundaries, cut new
//! segments at the fused peaks, and relabel those segments with LDA topics
//! to obtain fresh initial labels for every layer.

mod lda;

pub use lda::{lda_gibbs, LdaModel, LdaOptions};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::granularity::{LayerGrid, LayerSet};
use crate::seed;
use crate::tokenizer::{write_labels_csv, HyperParams, Segment, TokenLabeling, UtteranceLabels};

/// Binary boundary indicator over the junctures `1..T` of one utterance;
/// juncture `j` sits between frames `j - 1` and `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryFunction {
    pub utterance_id: String,
    /// `b[j - 1]` holds juncture `j`.
    pub b: Vec<bool>,
}

impl BoundaryFunction {
    pub fn num_frames(&self) -> usize {
        self.b.len() + 1
    }

    pub fn at(&self, j: usize) -> bool {
        self.b[j - 1]
    }
}

/// Weighted average of the layer boundary functions, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedBoundary {
    pub utterance_id: String,
    /// `values[j - 1]` holds juncture `j`.
    pub values: Vec<f64>,
}

impl FusedBoundary {
    pub fn num_frames(&self) -> usize {
        self.values.len() + 1
    }
}

/// One new segment as a bag of layer tokens. Word ids are flattened:
/// the offset of a layer is the sum of `n` over the layers before it in
/// `(m, n)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentDocument {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub words: BTreeMap<usize, u32>,
}

impl SegmentDocument {
    pub fn num_words(&self) -> usize {
        self.words.values().map(|&c| c as usize).sum()
    }

    /// Word ids repeated by count, in id order.
    pub fn tokens(&self) -> Vec<usize> {
        self.words
            .iter()
            .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
            .collect()
    }
}

pub fn layer_boundaries(labeling: &TokenLabeling) -> Vec<BoundaryFunction> {
    labeling
        .utterances
        .iter()
        .map(|u| {
            let t_len = u.num_frames();
            let mut b = vec![false; t_len.saturating_sub(1)];
            for s in u.segments.iter().skip(1) {
                b[s.start - 1] = true;
            }
            BoundaryFunction {
                utterance_id: u.utterance_id.clone(),
                b,
            }
        })
        .collect()
}

/// Boundary functions of one layer.
#[derive(Debug, Clone)]
pub struct LayerBoundaries {
    pub psi: HyperParams,
    pub functions: Vec<BoundaryFunction>,
}

/// `B(j) = Σ w_l b_l(j)` with `w_l = m_l / Σ m`.
pub fn fuse_boundaries(layers: &[LayerBoundaries]) -> Result<Vec<FusedBoundary>> {
    let Some(first) = layers.first() else {
        return Err(Error::Invalid("no layers to fuse".into()));
    };
    let m_total: usize = layers.iter().map(|l| l.psi.m).sum();
    for l in layers {
        if l.functions.len() != first.functions.len() {
            return Err(Error::Invalid(format!(
                "layer {} has {} utterances, layer {} has {}",
                l.psi,
                l.functions.len(),
                first.psi,
                first.functions.len()
            )));
        }
        for (a, b) in l.functions.iter().zip(&first.functions) {
            if a.utterance_id != b.utterance_id || a.b.len() != b.b.len() {
                return Err(Error::Utterance {
                    utterance_id: a.utterance_id.clone(),
                    detail: format!(
                        "layer {} has {} junctures, layer {} has {} for {}",
                        l.psi,
                        a.b.len(),
                        first.psi,
                        b.b.len(),
                        b.utterance_id
                    ),
                });
            }
        }
    }
    Ok((0..first.functions.len())
        .into_par_iter()
        .map(|u| {
            let mut values = vec![0.0; first.functions[u].b.len()];
            for l in layers {
                let w = l.psi.m as f64 / m_total as f64;
                for (v, &on) in values.iter_mut().zip(&l.functions[u].b) {
                    if on {
                        *v += w;
                    }
                }
            }
            // unanimity must read as exactly 1
            for v in values.iter_mut() {
                if (*v - 1.0).abs() < 1e-12 {
                    *v = 1.0;
                }
            }
            FusedBoundary {
                utterance_id: first.functions[u].utterance_id.clone(),
                values,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    pub smooth_width: usize,
    pub threshold: f64,
    pub min_gap: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            smooth_width: 3,
            threshold: 0.4,
            min_gap: 3,
        }
    }
}

/// Centered triangular moving average; values past the ends count as 0.
/// Even widths are widened to the next odd width.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    if half == 0 {
        return values.to_vec();
    }
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| (half + 1 - i.abs_diff(half)) as f64)
        .collect();
    let norm: f64 = kernel.iter().sum();
    (0..values.len())
        .map(|j| {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let idx = j as isize + i as isize - half as isize;
                if idx >= 0 && (idx as usize) < values.len() {
                    acc += k * values[idx as usize];
                }
            }
            acc / norm
        })
        .collect()
}

/// Junctures where the smoothed fused boundary peaks above the threshold,
/// at least `min_gap` apart, in increasing order.
pub fn pick_peaks(fb: &FusedBoundary, opts: &PeakOptions) -> Vec<usize> {
    let s = smooth(&fb.values, opts.smooth_width);
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= s.len() {
            0.0
        } else {
            s[i as usize]
        }
    };
    let mut candidates: Vec<usize> = (0..s.len())
        .filter(|&i| {
            let (l, c, r) = (at(i as isize - 1), s[i], at(i as isize + 1));
            fb.values[i] > 0.0 && c >= opts.threshold && (l - 2.0 * c + r < 0.0 || (l < c && r < c))
        })
        .collect();
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in candidates {
        if kept.iter().all(|&k| k.abs_diff(i) >= opts.min_gap) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| i + 1).collect()
}

/// `[start, end)` spans cut at `peaks`.
pub fn segments_from_peaks(peaks: &[usize], num_frames: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(peaks.len() + 1);
    let mut start = 0;
    for &p in peaks {
        out.push((start, p));
        start = p;
    }
    out.push((start, num_frames));
    out
}

/// New segments of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceSegments {
    pub utterance_id: String,
    pub spans: Vec<(usize, usize)>,
}

/// Vocabulary size `Σ n` over `layers`.
pub fn vocab_size(layers: &[(HyperParams, &TokenLabeling)]) -> usize {
    layers.iter().map(|(psi, _)| psi.n).sum()
}

/// One document per new segment holding every layer token that overlaps it.
pub fn build_documents(
    segments: &[UtteranceSegments],
    layers: &[(HyperParams, &TokenLabeling)],
) -> Result<Vec<SegmentDocument>> {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for (psi, l) in layers {
        if l.utterances.len() != segments.len() {
            return Err(Error::Invalid(format!(
                "layer {psi} covers {} utterances, segmentation has {}",
                l.utterances.len(),
                segments.len()
            )));
        }
        offsets.push(acc);
        acc += psi.n;
    }
    let per_utt: Vec<Vec<SegmentDocument>> = segments
        .par_iter()
        .enumerate()
        .map(|(u, seg)| {
            let mut docs: Vec<SegmentDocument> = seg
                .spans
                .iter()
                .map(|&(start, end)| SegmentDocument {
                    utterance_id: seg.utterance_id.clone(),
                    start,
                    end,
                    words: BTreeMap::new(),
                })
                .collect();
            for ((_, labeling), &offset) in layers.iter().zip(&offsets) {
                let tokens = &labeling.utterances[u].segments;
                // both lists are sorted and contiguous: sweep them together
                let mut first = 0;
                for doc in docs.iter_mut() {
                    while first < tokens.len() && tokens[first].end <= doc.start {
                        first += 1;
                    }
                    for t in tokens[first..].iter().take_while(|t| t.start < doc.end) {
                        *doc.words.entry(offset + t.token).or_insert(0) += 1;
                    }
                }
            }
            docs
        })
        .collect();
    Ok(per_utt.into_iter().flatten().collect())
}

/// Merges spans shorter than `m` into their left neighbour (the first span
/// merges right). A lone span shorter than `m` is left as is.
pub fn merge_short(spans: &[(usize, usize, usize)], m: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(spans.len());
    let mut pending: Option<usize> = None;
    for &(start, end, token) in spans {
        if end - start < m {
            if let Some(last) = out.last_mut() {
                last.end = end;
            } else {
                pending.get_or_insert(start);
            }
            continue;
        }
        let start = pending.take().unwrap_or(start);
        out.push(Segment { token, start, end });
    }
    if let Some(start) = pending {
        let end = spans.last().map_or(start, |s| s.1);
        out.push(Segment {
            token: spans[0].2,
            start,
            end,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforceOptions {
    pub peaks: PeakOptions,
    pub lda: LdaOptions,
}

impl Default for ReinforceOptions {
    fn default() -> Self {
        Self {
            peaks: PeakOptions::default(),
            lda: LdaOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReinforceOutput {
    pub fused: Vec<FusedBoundary>,
    pub segments: Vec<UtteranceSegments>,
    pub documents: Vec<SegmentDocument>,
    /// One LDA model per distinct `n`.
    pub lda: BTreeMap<usize, LdaModel>,
    /// New initial labels per layer.
    pub initial: BTreeMap<HyperParams, TokenLabeling>,
}

/// One round of mutual reinforcement over a complete layer set.
pub fn reinforce(
    layer_set: &LayerSet,
    corpus: &[FeatureSequence],
    grid: &LayerGrid,
    opts: &ReinforceOptions,
) -> Result<ReinforceOutput> {
    for psi in grid.pairs() {
        if !layer_set.layers.contains_key(&psi) {
            return Err(Error::Invalid(format!("layer set lacks layer {psi}")));
        }
    }
    let layers: Vec<(HyperParams, &TokenLabeling)> = grid
        .pairs()
        .into_iter()
        .map(|psi| (psi, &layer_set.layers[&psi].labeling))
        .collect();
    for (psi, l) in &layers {
        l.validate(corpus, *psi)?;
    }

    let boundaries: Vec<LayerBoundaries> = layers
        .iter()
        .map(|(psi, l)| LayerBoundaries {
            psi: *psi,
            functions: layer_boundaries(l),
        })
        .collect();
    let fused = fuse_boundaries(&boundaries)?;
    let segments: Vec<UtteranceSegments> = fused
        .par_iter()
        .map(|fb| UtteranceSegments {
            utterance_id: fb.utterance_id.clone(),
            spans: segments_from_peaks(&pick_peaks(fb, &opts.peaks), fb.num_frames()),
        })
        .collect();
    let documents = build_documents(&segments, &layers)?;
    let vocab = vocab_size(&layers);
    let bags: Vec<Vec<usize>> = documents.iter().map(|d| d.tokens()).collect();

    let distinct_n: BTreeSet<usize> = grid.phonetic().iter().copied().collect();
    let runs: Vec<(usize, Result<LdaModel>)> = distinct_n
        .into_par_iter()
        .map(|n| {
            let lda_opts = LdaOptions {
                seed: seed::derive(opts.lda.seed, &[n as u64]),
                ..opts.lda
            };
            (n, lda_gibbs(&bags, vocab, n, &lda_opts))
        })
        .collect();
    let mut lda = BTreeMap::new();
    for (n, model) in runs {
        let model = model?;
        if !model.empty_docs.is_empty() {
            log::warn!("{} empty segment documents in the n={n} LDA run", model.empty_docs.len());
        }
        lda.insert(n, model);
    }

    let mut initial = BTreeMap::new();
    for (psi, _) in &layers {
        let model = &lda[&psi.n];
        let mut doc = 0;
        let utterances = segments
            .iter()
            .map(|seg| {
                let spans: Vec<(usize, usize, usize)> = seg
                    .spans
                    .iter()
                    .map(|&(s, e)| {
                        let topic = model.doc_topic(doc);
                        doc += 1;
                        (s, e, topic)
                    })
                    .collect();
                UtteranceLabels {
                    utterance_id: seg.utterance_id.clone(),
                    segments: merge_short(&spans, psi.m),
                }
            })
            .collect();
        initial.insert(*psi, TokenLabeling { utterances });
    }

    Ok(ReinforceOutput {
        fused,
        segments,
        documents,
        lda,
        initial,
    })
}

impl ReinforceOutput {
    /// Writes `fused.csv`, `documents.csv` and `init/m{m}_n{n}.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let init_dir = dir.join("init");
        fs::create_dir_all(&init_dir).map_err(|e| Error::io(&init_dir, e))?;

        let path = dir.join("fused.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["utterance_id", "juncture", "B"])?;
        for fb in &self.fused {
            for (i, v) in fb.values.iter().enumerate() {
                w.write_record([fb.utterance_id.as_str(), &(i + 1).to_string(), &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("documents.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["utterance_id", "start", "end", "word_id", "count"])?;
        for d in &self.documents {
            for (word, count) in &d.words {
                w.write_record([
                    d.utterance_id.as_str(),
                    &d.start.to_string(),
                    &d.end.to_string(),
                    &word.to_string(),
                    &count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        for (psi, l) in &self.initial {
            write_labels_csv(l, &init_dir.join(format!("{psi}.csv")))?;
        }
        Ok(())
    }
}
