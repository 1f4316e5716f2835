use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::annotation::{Annotation, Interval, UtteranceAnnotation};
use crate::error::{Error, Result};
use crate::tokenizer::TokenLabeling;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClusterInterval {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
}

/// Discovered intervals grouped by class id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiscoveredClusters {
    pub clusters: BTreeMap<usize, Vec<ClusterInterval>>,
}

impl DiscoveredClusters {
    /// Groups the segments of one layer on their token id.
    pub fn from_labeling(labeling: &TokenLabeling) -> Self {
        let mut clusters: BTreeMap<usize, Vec<ClusterInterval>> = BTreeMap::new();
        for u in &labeling.utterances {
            for s in &u.segments {
                clusters.entry(s.token).or_default().push(ClusterInterval {
                    utterance_id: u.utterance_id.clone(),
                    start: s.start,
                    end: s.end,
                });
            }
        }
        Self { clusters }
    }

    pub fn num_intervals(&self) -> usize {
        self.clusters.values().map(Vec::len).sum()
    }

    fn intervals(&self) -> impl Iterator<Item = (usize, &ClusterInterval)> {
        self.clusters.iter().flat_map(|(&c, v)| v.iter().map(move |i| (c, i)))
    }

    fn check(&self, gold: &Annotation) -> Result<()> {
        for (_, iv) in self.intervals() {
            let u = gold.get(&iv.utterance_id).ok_or_else(|| Error::Utterance {
                utterance_id: iv.utterance_id.clone(),
                detail: "discovered interval in an utterance without gold annotation".into(),
            })?;
            if iv.start >= iv.end || iv.end > u.num_frames() {
                return Err(Error::Utterance {
                    utterance_id: iv.utterance_id.clone(),
                    detail: format!("interval {}..{} outside {} frames", iv.start, iv.end, u.num_frames()),
                });
            }
        }
        Ok(())
    }
}

/// Precision, recall and their harmonic mean, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f }
    }

    /// `hits / proposed` and `hits / reference`, 0 for empty denominators.
    pub fn from_counts(hits: usize, proposed: usize, reference: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self::new(ratio(hits, proposed), ratio(hits, reference))
    }
}

/// Gold phones of `[start, end)`: those with at least half their duration
/// inside, or else the single phone overlapping most.
pub fn transcribe(u: &UtteranceAnnotation, start: usize, end: usize) -> Vec<&str> {
    let inside: Vec<&str> = u
        .phones
        .iter()
        .filter(|p| !p.is_empty() && 2 * p.overlap(start, end) >= p.len())
        .map(|p| p.symbol.as_str())
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    let mut best: Option<(usize, &str)> = None;
    for p in &u.phones {
        let o = p.overlap(start, end);
        if o > 0 && best.is_none_or(|(b, _)| o > b) {
            best = Some((o, p.symbol.as_str()));
        }
    }
    best.map(|(_, s)| vec![s]).unwrap_or_default()
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn normalized_edit(a: &[&str], b: &[&str]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NedCoverage {
    /// Percent; `None` when no cluster has two intervals.
    pub ned: Option<f64>,
    /// Percent of gold phone-tier frames inside a discovered interval.
    pub coverage: f64,
    pub pairs: u64,
}

pub fn ned_and_coverage(clusters: &DiscoveredClusters, gold: &Annotation) -> Result<NedCoverage> {
    if clusters.num_intervals() == 0 {
        return Err(Error::Invalid("no discovered intervals".into()));
    }
    clusters.check(gold)?;

    let mut ned_sum = 0.0;
    let mut pairs: u64 = 0;
    for members in clusters.clusters.values() {
        // identical transcriptions contribute 0, so work on distinct strings
        let mut counts: BTreeMap<Vec<&str>, u64> = BTreeMap::new();
        for iv in members {
            let u = gold.get(&iv.utterance_id).expect("checked");
            *counts.entry(transcribe(u, iv.start, iv.end)).or_default() += 1;
        }
        let distinct: Vec<(&Vec<&str>, u64)> = counts.iter().map(|(k, &c)| (k, c)).collect();
        for (i, (a, ca)) in distinct.iter().enumerate() {
            pairs += ca * (ca - 1) / 2;
            for (b, cb) in &distinct[i + 1..] {
                pairs += ca * cb;
                ned_sum += (ca * cb) as f64 * normalized_edit(a, b);
            }
        }
    }

    let mut covered: HashMap<&str, Vec<bool>> = gold
        .utterances
        .iter()
        .map(|u| (u.utterance_id.as_str(), vec![false; u.num_frames()]))
        .collect();
    for (_, iv) in clusters.intervals() {
        let mask = covered.get_mut(iv.utterance_id.as_str()).expect("checked");
        mask[iv.start..iv.end].iter_mut().for_each(|m| *m = true);
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for u in &gold.utterances {
        let mask = &covered[u.utterance_id.as_str()];
        for p in &u.phones {
            total += p.len();
            hit += mask[p.start..p.end].iter().filter(|&&m| m).count();
        }
    }
    Ok(NedCoverage {
        ned: (pairs > 0).then(|| 100.0 * ned_sum / pairs as f64),
        coverage: if total == 0 { 0.0 } else { 100.0 * hit as f64 / total as f64 },
        pairs,
    })
}

/// Size of a maximum one-to-one matching between two sorted boundary lists
/// where a pair matches within `tol` frames. Greedy in time order is
/// optimal here.
pub fn match_boundaries(found: &[usize], gold: &[usize], tol: usize) -> usize {
    let mut g = 0;
    let mut hits = 0;
    for &d in found {
        while g < gold.len() && gold[g] + tol < d {
            g += 1;
        }
        if g < gold.len() && gold[g] <= d + tol {
            hits += 1;
            g += 1;
        }
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParsingScores {
    pub boundary: Prf,
    pub token: Prf,
    pub type_: Prf,
}

/// Gold word whose edges both lie within `tol` of the interval's, closest
/// first.
fn token_match(u: &UtteranceAnnotation, start: usize, end: usize, tol: usize) -> Option<&Interval> {
    u.words
        .iter()
        .filter(|w| w.start.abs_diff(start) <= tol && w.end.abs_diff(end) <= tol)
        .min_by_key(|w| w.start.abs_diff(start) + w.end.abs_diff(end))
}

/// Boundary, token and type scores against the gold word tier. Utterance
/// edges are not counted as boundaries.
pub fn parsing_scores(clusters: &DiscoveredClusters, gold: &Annotation, tol: usize) -> Result<ParsingScores> {
    clusters.check(gold)?;
    let mut found: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for (_, iv) in clusters.intervals() {
        let set = found.entry(iv.utterance_id.as_str()).or_default();
        set.insert(iv.start);
        set.insert(iv.end);
    }
    let (mut hits, mut n_found, mut n_gold) = (0, 0, 0);
    for u in &gold.utterances {
        let t_len = u.num_frames();
        let inner = |b: &usize| *b > 0 && *b < t_len;
        let g: BTreeSet<usize> = u.words.iter().flat_map(|w| [w.start, w.end]).filter(inner).collect();
        let g: Vec<usize> = g.into_iter().collect();
        let d: Vec<usize> = found
            .get(u.utterance_id.as_str())
            .map(|s| s.iter().copied().filter(inner).collect())
            .unwrap_or_default();
        hits += match_boundaries(&d, &g, tol);
        n_found += d.len();
        n_gold += g.len();
    }
    let boundary = Prf::from_counts(hits, n_found, n_gold);

    let mut spans: HashMap<&str, BTreeSet<(usize, usize)>> = HashMap::new();
    let mut token_hits = 0;
    let mut votes: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for (c, iv) in clusters.intervals() {
        let u = gold.get(&iv.utterance_id).expect("checked");
        spans.entry(iv.utterance_id.as_str()).or_default().insert((iv.start, iv.end));
        if let Some(w) = token_match(u, iv.start, iv.end, tol) {
            token_hits += 1;
            *votes.entry(c).or_default().entry(w.symbol.as_str()).or_default() += 1;
        }
    }
    // a gold word is found when any discovered interval matches it
    let mut found_words = 0;
    for u in &gold.utterances {
        if let Some(s) = spans.get(u.utterance_id.as_str()) {
            found_words += u
                .words
                .iter()
                .filter(|w| s.iter().any(|&(a, b)| w.start.abs_diff(a) <= tol && w.end.abs_diff(b) <= tol))
                .count();
        }
    }
    let n_words: usize = gold.utterances.iter().map(|u| u.words.len()).sum();
    let token = Prf::new(ratio(token_hits, clusters.num_intervals()), ratio(found_words, n_words));

    let assigned: BTreeSet<&str> = votes
        .values()
        .filter_map(|v| {
            v.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(s, _)| *s)
        })
        .collect();
    let gold_types: BTreeSet<&str> = gold
        .utterances
        .iter()
        .flat_map(|u| u.words.iter().map(|w| w.symbol.as_str()))
        .collect();
    let type_ = Prf::new(
        ratio(assigned.len(), clusters.clusters.len()),
        ratio(assigned.len(), gold_types.len()),
    );
    Ok(ParsingScores { boundary, token, type_ })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grouping {
    pub scores: Prf,
    /// No token-matched interval, or no pair on one side.
    pub degenerate: bool,
}

/// Pair precision/recall of the clustering of token-matched intervals
/// against their gold word types.
pub fn grouping_scores(clusters: &DiscoveredClusters, gold: &Annotation, tol: usize) -> Result<Grouping> {
    clusters.check(gold)?;
    let mut by_cluster: BTreeMap<usize, u64> = BTreeMap::new();
    let mut by_type: BTreeMap<&str, u64> = BTreeMap::new();
    let mut by_both: BTreeMap<(usize, &str), u64> = BTreeMap::new();
    for (c, iv) in clusters.intervals() {
        let u = gold.get(&iv.utterance_id).expect("checked");
        if let Some(w) = token_match(u, iv.start, iv.end, tol) {
            let t = w.symbol.as_str();
            *by_cluster.entry(c).or_default() += 1;
            *by_type.entry(t).or_default() += 1;
            *by_both.entry((c, t)).or_default() += 1;
        }
    }
    let pairs = |m: &mut dyn Iterator<Item = u64>| -> u64 { m.map(|k| k * k.saturating_sub(1) / 2).sum() };
    let same_cluster = pairs(&mut by_cluster.values().copied());
    let same_type = pairs(&mut by_type.values().copied());
    let both = pairs(&mut by_both.values().copied());
    let r = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Grouping {
        scores: Prf::new(r(both, same_cluster), r(both, same_type)),
        degenerate: same_cluster == 0 || same_type == 0,
    })
}
