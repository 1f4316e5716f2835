use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::hmm::{Gaussian, TokenHmm, TokenSetModel, TRANSITION_FLOOR};
use super::init::{default_seg_len, initialize_labels};
use super::{HyperParams, Segment, TokenLabeling, UtteranceLabels};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub lm_weight: f64,
    /// Drives the perturbation of re-seeded empty tokens.
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            lm_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateReport {
    /// Tokens with no segments that were re-seeded from the most populated
    /// token.
    pub rescued: usize,
}

fn check_dims(corpus: &[FeatureSequence], dim: usize) -> Result<()> {
    match corpus.iter().find(|f| f.dim() != dim) {
        Some(f) => Err(Error::Dimension {
            expected: dim,
            actual: f.dim(),
        }),
        None => Ok(()),
    }
}

/// Per-dimension variance floor: `1e-3` of the corpus variance.
fn variance_floor(corpus: &[FeatureSequence], dim: usize) -> Vec<f64> {
    let mut n = 0.0;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for f in corpus {
        for t in 0..f.num_frames() {
            n += 1.0;
            for (d, &v) in f.frame(t).iter().enumerate() {
                sum[d] += v;
                sq[d] += v * v;
            }
        }
    }
    (0..dim)
        .map(|d| {
            let mean = sum[d] / n;
            let var = (sq[d] / n - mean * mean).max(0.0);
            (1e-3 * var).max(1e-8)
        })
        .collect()
}

struct StateStats {
    count: f64,
    sum: Vec<f64>,
    sq: Vec<f64>,
    loops: f64,
    advances: f64,
}

impl StateStats {
    fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            sum: vec![0.0; dim],
            sq: vec![0.0; dim],
            loops: 0.0,
            advances: 0.0,
        }
    }
}

/// State of every frame in a segment: the current model's best path, or an
/// even split when no model exists yet.
fn segment_states(
    f: &FeatureSequence,
    seg: &Segment,
    m: usize,
    prev: Option<&TokenSetModel>,
) -> Vec<usize> {
    let len = seg.len();
    match prev {
        Some(model) => model.hmms[seg.token].align(len, |i| f.frame(seg.start + i)).1,
        None => (0..len).map(|i| i * m / len).collect(),
    }
}

/// Re-estimates all token HMMs and the token unigram from a labeling.
///
/// State Gaussians are maximum-likelihood under the variance floor, self-loop
/// probabilities are clamped relative frequencies, and the unigram is add-one
/// smoothed.
pub fn estimate_models(
    corpus: &[FeatureSequence],
    labeling: &TokenLabeling,
    psi: HyperParams,
    prev: Option<&TokenSetModel>,
    opts: &EstimateOptions,
) -> Result<(TokenSetModel, EstimateReport)> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Invalid("cannot estimate models on an empty corpus".into()))?;
    let dim = first.dim();
    check_dims(corpus, dim)?;
    labeling.validate(corpus, psi)?;
    if let Some(p) = prev {
        if p.psi != psi || p.feature_dim != dim {
            return Err(Error::Invalid("previous model does not match layer shape".into()));
        }
    }
    let (m, n) = (psi.m, psi.n);
    let floor = variance_floor(corpus, dim);

    let alignments: Vec<Vec<Vec<usize>>> = corpus
        .par_iter()
        .zip(&labeling.utterances)
        .map(|(f, u)| u.segments.iter().map(|s| segment_states(f, s, m, prev)).collect())
        .collect();

    let mut stats: Vec<Vec<StateStats>> = (0..n)
        .map(|_| (0..m).map(|_| StateStats::new(dim)).collect())
        .collect();
    let mut occurrences = vec![0usize; n];
    for ((f, u), aligns) in corpus.iter().zip(&labeling.utterances).zip(&alignments) {
        for (seg, states) in u.segments.iter().zip(aligns) {
            occurrences[seg.token] += 1;
            let tok = &mut stats[seg.token];
            for (i, &s) in states.iter().enumerate() {
                let st = &mut tok[s];
                st.count += 1.0;
                for (d, &v) in f.frame(seg.start + i).iter().enumerate() {
                    st.sum[d] += v;
                    st.sq[d] += v * v;
                }
            }
            if seg.len() >= m {
                for w in states.windows(2) {
                    if w[0] == w[1] {
                        tok[w[0]].loops += 1.0;
                    } else {
                        tok[w[0]].advances += 1.0;
                    }
                }
                tok[m - 1].advances += 1.0;
            }
        }
    }

    let mut hmms: Vec<Option<TokenHmm>> = stats
        .iter()
        .enumerate()
        .map(|(k, tok)| {
            if occurrences[k] == 0 {
                return None;
            }
            let mut states = Vec::with_capacity(m);
            let mut self_loop = Vec::with_capacity(m);
            for (s, st) in tok.iter().enumerate() {
                if st.count > 0.0 {
                    let mean: Vec<f64> = st.sum.iter().map(|v| v / st.count).collect();
                    let var = (0..dim)
                        .map(|d| (st.sq[d] / st.count - mean[d] * mean[d]).max(floor[d]))
                        .collect();
                    states.push(Gaussian::new(mean, var));
                } else {
                    // unobserved state: any value is a maximiser, keep the old one
                    let g = match prev {
                        Some(p) => p.hmms[k].states[s].clone(),
                        None => Gaussian::new(vec![0.0; dim], vec![1.0; dim]),
                    };
                    states.push(g);
                }
                let visits = st.loops + st.advances;
                let p = if visits > 0.0 {
                    st.loops / visits
                } else {
                    prev.map_or(0.5, |p| p.hmms[k].self_loop[s])
                };
                self_loop.push(p.clamp(TRANSITION_FLOOR, 1.0 - TRANSITION_FLOOR));
            }
            Some(TokenHmm {
                token_id: k,
                states,
                self_loop,
            })
        })
        .collect();

    let mut report = EstimateReport::default();
    let donor = (0..n)
        .max_by(|&a, &b| occurrences[a].cmp(&occurrences[b]).then(b.cmp(&a)))
        .expect("n >= 2");
    for k in 0..n {
        if hmms[k].is_some() {
            continue;
        }
        report.rescued += 1;
        let src = hmms[donor].as_ref().expect("donor has occurrences").clone();
        let mut rng = seed::rng(seed::derive(opts.seed, &[k as u64]));
        let states = src
            .states
            .iter()
            .map(|g| {
                let mean = g
                    .mean()
                    .iter()
                    .zip(g.var())
                    .map(|(&mu, &v)| {
                        let sd = (0.01 * v).sqrt();
                        mu + Normal::new(0.0, sd).expect("finite sd").sample(&mut rng)
                    })
                    .collect();
                Gaussian::new(mean, g.var().to_vec())
            })
            .collect();
        hmms[k] = Some(TokenHmm {
            token_id: k,
            states,
            self_loop: src.self_loop.clone(),
        });
    }
    if report.rescued > 0 {
        log::warn!("layer {psi}: re-seeded {} empty token(s)", report.rescued);
    }

    let total: usize = occurrences.iter().sum();
    let token_lm = occurrences
        .iter()
        .map(|&c| (c + 1) as f64 / (total + n) as f64)
        .collect();

    Ok((
        TokenSetModel {
            psi,
            hmms: hmms.into_iter().map(|h| h.expect("all tokens filled")).collect(),
            token_lm,
            feature_dim: dim,
            lm_weight: opts.lm_weight,
        },
        report,
    ))
}

fn segment_score(model: &TokenSetModel, f: &FeatureSequence, seg: &Segment) -> f64 {
    let (acoustic, _) = model.hmms[seg.token].align(seg.len(), |i| f.frame(seg.start + i));
    acoustic + model.log_lm(seg.token)
}

/// Sum over all labeled segments of the best-path log-likelihood under the
/// segment's token HMM plus the weighted log unigram.
pub fn joint_loglik(corpus: &[FeatureSequence], model: &TokenSetModel, labeling: &TokenLabeling) -> Result<f64> {
    check_dims(corpus, model.feature_dim)?;
    labeling.validate(corpus, model.psi)?;
    let per_utt: Vec<f64> = corpus
        .par_iter()
        .zip(&labeling.utterances)
        .map(|(f, u)| u.segments.iter().map(|s| segment_score(model, f, s)).sum())
        .collect();
    Ok(per_utt.iter().sum())
}

/// Token-loop Viterbi for one utterance.
fn decode_utterance(f: &FeatureSequence, model: &TokenSetModel) -> UtteranceLabels {
    let (m, n) = (model.psi.m, model.psi.n);
    let t_len = f.num_frames();
    let log_lm: Vec<f64> = (0..n).map(|k| model.log_lm(k)).collect();

    if t_len < m {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..n {
            let seg = Segment { token: k, start: 0, end: t_len };
            let score = segment_score(model, f, &seg);
            if score > best.1 {
                best = (k, score);
            }
        }
        return UtteranceLabels {
            utterance_id: f.utterance_id.clone(),
            segments: vec![Segment { token: best.0, start: 0, end: t_len }],
        };
    }

    let width = n * m;
    let log_self: Vec<f64> = model
        .hmms
        .iter()
        .flat_map(|h| (0..m).map(|s| h.log_self(s)))
        .collect();
    let log_fwd: Vec<f64> = model
        .hmms
        .iter()
        .flat_map(|h| (0..m).map(|s| h.log_forward(s)))
        .collect();

    let mut delta = vec![f64::NEG_INFINITY; width];
    let mut next = vec![f64::NEG_INFINITY; width];
    // stay[t * width + k * m + s]: true if state (k, s) at t was reached by a
    // self-loop rather than by advancing or entering
    let mut stay = vec![false; t_len * width];
    // best exiting token at each frame, used by tokens entered at t + 1
    let mut exit_token = vec![0usize; t_len];

    let x0 = f.frame(0);
    for k in 0..n {
        delta[k * m] = log_lm[k] + model.hmms[k].states[0].log_pdf(x0);
    }
    for t in 1..t_len {
        let mut best_exit = (0, f64::NEG_INFINITY);
        for k in 0..n {
            let v = delta[k * m + m - 1] + log_fwd[k * m + m - 1];
            if v > best_exit.1 {
                best_exit = (k, v);
            }
        }
        exit_token[t - 1] = best_exit.0;
        let x = f.frame(t);
        for k in 0..n {
            let hmm = &model.hmms[k];
            for s in 0..m {
                let i = k * m + s;
                let keep = delta[i] + log_self[i];
                let enter = if s == 0 {
                    best_exit.1 + log_lm[k]
                } else {
                    delta[i - 1] + log_fwd[i - 1]
                };
                let (best, is_stay) = if keep >= enter { (keep, true) } else { (enter, false) };
                stay[t * width + i] = is_stay;
                next[i] = if best == f64::NEG_INFINITY {
                    best
                } else {
                    best + hmm.states[s].log_pdf(x)
                };
            }
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut end = (0, f64::NEG_INFINITY);
    for k in 0..n {
        let v = delta[k * m + m - 1] + log_fwd[k * m + m - 1];
        if v > end.1 {
            end = (k, v);
        }
    }

    let mut segments = Vec::new();
    let (mut k, mut s) = (end.0, m - 1);
    let mut seg_end = t_len;
    for t in (1..t_len).rev() {
        let i = k * m + s;
        if stay[t * width + i] {
            continue;
        }
        if s > 0 {
            s -= 1;
        } else {
            segments.push(Segment { token: k, start: t, end: seg_end });
            seg_end = t;
            k = exit_token[t - 1];
            s = m - 1;
        }
    }
    debug_assert_eq!(s, 0, "path must start in the first state");
    segments.push(Segment { token: k, start: 0, end: seg_end });
    segments.reverse();
    UtteranceLabels {
        utterance_id: f.utterance_id.clone(),
        segments,
    }
}

/// Maximum-likelihood token sequence of every utterance. Any token may follow
/// any token; ties prefer the lower token id and the earlier boundary.
pub fn decode(corpus: &[FeatureSequence], model: &TokenSetModel) -> Result<TokenLabeling> {
    check_dims(corpus, model.feature_dim)?;
    let utterances = corpus.par_iter().map(|f| decode_utterance(f, model)).collect();
    Ok(TokenLabeling { utterances })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Stop once fewer than this fraction of frames change token.
    pub label_change_tol: f64,
    pub seed: u64,
    pub lm_weight: f64,
    /// Initial segment length; `None` means `max(m, 10)`.
    pub seg_len: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            label_change_tol: 0.01,
            seed: 0,
            lm_weight: 1.0,
            seg_len: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Joint log-likelihood after every half step: `(θ1, ω0), (θ1, ω1),
    /// (θ2, ω1), (θ2, ω2), ...`.
    pub loglik_trace: Vec<f64>,
    /// Fraction of frames relabeled by each decode.
    pub change_fractions: Vec<f64>,
    pub iterations: usize,
    pub rescued: usize,
}

#[derive(Debug, Clone)]
pub struct LayerResult {
    pub model: TokenSetModel,
    pub labeling: TokenLabeling,
    pub report: TrainReport,
}

/// Alternates re-estimation and decoding from `initial` (or from the
/// segment + k-means initialization) until labels settle.
pub fn train_layer(
    corpus: &[FeatureSequence],
    psi: HyperParams,
    opts: &TrainOptions,
    initial: Option<TokenLabeling>,
) -> Result<LayerResult> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot train a layer on an empty corpus".into()));
    }
    let mut labeling = match initial {
        Some(l) => l,
        None => {
            let seg_len = opts.seg_len.unwrap_or_else(|| default_seg_len(psi));
            initialize_labels(corpus, psi, seg_len, seed::derive(opts.seed, &[0]))?
        }
    };
    let est = |iter: usize| EstimateOptions {
        lm_weight: opts.lm_weight,
        seed: seed::derive(opts.seed, &[1, iter as u64]),
    };
    let mut report = TrainReport::default();
    let (mut model, r) = estimate_models(corpus, &labeling, psi, None, &est(0))?;
    report.rescued += r.rescued;
    report.loglik_trace.push(joint_loglik(corpus, &model, &labeling)?);

    for iter in 1..=opts.max_iters {
        let decoded = decode(corpus, &model)?;
        let changed = decoded.changed_fraction(&labeling);
        labeling = decoded;
        report.loglik_trace.push(joint_loglik(corpus, &model, &labeling)?);
        let (next, r) = estimate_models(corpus, &labeling, psi, Some(&model), &est(iter))?;
        model = next;
        report.rescued += r.rescued;
        report.loglik_trace.push(joint_loglik(corpus, &model, &labeling)?);
        report.change_fractions.push(changed);
        report.iterations = iter;
        log::debug!("layer {psi} iter {iter}: {:.4} of frames relabeled", changed);
        if changed < opts.label_change_tol {
            break;
        }
    }
    Ok(LayerResult {
        model,
        labeling,
        report,
    })
}
