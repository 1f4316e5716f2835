use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::{s, ArrayView2};
use rand::seq::index;
use rayon::prelude::*;

use super::annotation::Annotation;
use super::dtw::dtw_divergence;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::seed;

/// One gold phone occurrence with its neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbxItem {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub phone: String,
    /// Previous and next phone; `#` at utterance edges.
    pub context: (String, String),
    pub speaker_id: String,
}

/// Every phone of the gold phone tier as an ABX item.
pub fn abx_items(gold: &Annotation) -> Vec<AbxItem> {
    let edge = || "#".to_string();
    let mut items = Vec::new();
    for u in &gold.utterances {
        for (i, p) in u.phones.iter().enumerate() {
            let prev = if i == 0 { edge() } else { u.phones[i - 1].symbol.clone() };
            let next = u.phones.get(i + 1).map_or_else(edge, |n| n.symbol.clone());
            items.push(AbxItem {
                utterance_id: u.utterance_id.clone(),
                start: p.start,
                end: p.end,
                phone: p.symbol.clone(),
                context: (prev, next),
                speaker_id: u.speaker_id.clone(),
            });
        }
    }
    items
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbxMode {
    /// A, B and X from one speaker.
    Within,
    /// A and B from one speaker, X from another.
    Across,
}

impl std::fmt::Display for AbxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbxMode::Within => "within",
            AbxMode::Across => "across",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbxOptions {
    /// Triples scored per (context, phone pair, speaker cell); larger cells
    /// are subsampled.
    pub max_triples: usize,
    pub seed: u64,
}

impl Default for AbxOptions {
    fn default() -> Self {
        Self {
            max_triples: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbxResult {
    pub mode: AbxMode,
    /// In percent.
    pub error: f64,
    pub triples: usize,
    pub cells: usize,
    /// Cells lacking the items a triple needs.
    pub skipped_cells: usize,
}

struct Cell<'a> {
    p: &'a str,
    q: &'a str,
    speakers: (&'a str, Option<&'a str>),
    a: &'a [usize],
    b: &'a [usize],
    /// Empty in within mode, where X is drawn from `a`.
    x: &'a [usize],
}

type ByContext<'a> = BTreeMap<&'a (String, String), BTreeMap<&'a str, BTreeMap<&'a str, Vec<usize>>>>;

/// ABX error over phone pairs sharing a context. Scores are averaged over
/// triples, then contexts, then speaker cells, then ordered phone pairs.
pub fn abx_error(
    features: &[FeatureSequence],
    items: &[AbxItem],
    mode: AbxMode,
    opts: &AbxOptions,
) -> Result<AbxResult> {
    let by_id: HashMap<&str, &FeatureSequence> = features.iter().map(|f| (f.utterance_id.as_str(), f)).collect();
    let mut views: Vec<ArrayView2<f64>> = Vec::with_capacity(items.len());
    for it in items {
        let f = by_id.get(it.utterance_id.as_str()).ok_or_else(|| Error::Utterance {
            utterance_id: it.utterance_id.clone(),
            detail: "no features for ABX item".into(),
        })?;
        if it.start >= it.end || it.end > f.num_frames() {
            return Err(Error::Utterance {
                utterance_id: it.utterance_id.clone(),
                detail: format!("ABX item {}..{} outside {} frames", it.start, it.end, f.num_frames()),
            });
        }
        views.push(f.frames().slice(s![it.start..it.end, ..]));
    }

    let mut grouped: ByContext = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        grouped
            .entry(&it.context)
            .or_default()
            .entry(it.phone.as_str())
            .or_default()
            .entry(it.speaker_id.as_str())
            .or_default()
            .push(i);
    }

    let mut cells = Vec::new();
    let mut skipped = 0;
    for phones in grouped.values() {
        for (&p, p_spk) in phones {
            for (&q, q_spk) in phones {
                if p == q {
                    continue;
                }
                let speakers: BTreeSet<&str> = p_spk.keys().chain(q_spk.keys()).copied().collect();
                for &s in &speakers {
                    let a = p_spk.get(s).map_or(&[][..], |v| v.as_slice());
                    let b = q_spk.get(s).map_or(&[][..], |v| v.as_slice());
                    match mode {
                        AbxMode::Within => {
                            if a.len() < 2 || b.is_empty() {
                                skipped += 1;
                                continue;
                            }
                            cells.push(Cell { p, q, speakers: (s, None), a, b, x: &[] });
                        }
                        AbxMode::Across => {
                            for (&sx, x) in p_spk {
                                if sx == s {
                                    continue;
                                }
                                if a.is_empty() || b.is_empty() {
                                    skipped += 1;
                                    continue;
                                }
                                cells.push(Cell { p, q, speakers: (s, Some(sx)), a, b, x });
                            }
                        }
                    }
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Invalid(format!("no {mode}-speaker ABX cell has enough items")));
    }

    let scored: Vec<Result<(f64, usize)>> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, cell)| {
            let (na, nb) = (cell.a.len(), cell.b.len());
            let nx = if cell.x.is_empty() { na - 1 } else { cell.x.len() };
            let total = na * nb * nx;
            let picks: Vec<usize> = if total <= opts.max_triples {
                (0..total).collect()
            } else {
                let mut rng = seed::rng(seed::derive(opts.seed, &[ci as u64]));
                let mut v = index::sample(&mut rng, total, opts.max_triples).into_vec();
                v.sort_unstable();
                v
            };
            let mut sum = 0.0;
            for &t in &picks {
                let ai = t / (nb * nx);
                let bi = (t / nx) % nb;
                let xi = t % nx;
                let x = if cell.x.is_empty() {
                    cell.a[if xi >= ai { xi + 1 } else { xi }]
                } else {
                    cell.x[xi]
                };
                let dxa = dtw_divergence(views[x], views[cell.a[ai]])?;
                let dxb = dtw_divergence(views[x], views[cell.b[bi]])?;
                sum += if dxb < dxa {
                    1.0
                } else if dxb == dxa {
                    0.5
                } else {
                    0.0
                };
            }
            Ok((sum / picks.len() as f64, picks.len()))
        })
        .collect();

    type SpeakerKey<'a> = (&'a str, &'a str, (&'a str, Option<&'a str>));
    let mut over_context: BTreeMap<SpeakerKey, Vec<f64>> = BTreeMap::new();
    let mut triples = 0;
    for (cell, res) in cells.iter().zip(scored) {
        let (score, n) = res?;
        triples += n;
        over_context.entry((cell.p, cell.q, cell.speakers)).or_default().push(score);
    }
    let mut over_speakers: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for ((p, q, _), scores) in over_context {
        over_speakers.entry((p, q)).or_default().push(mean(&scores));
    }
    let pair_scores: Vec<f64> = over_speakers.values().map(|v| mean(v)).collect();
    Ok(AbxResult {
        mode,
        error: 100.0 * mean(&pair_scores),
        triples,
        cells: cells.len(),
        skipped_cells: skipped,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
