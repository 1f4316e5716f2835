use rand::Rng;

use super::{HyperParams, Segment, TokenLabeling, UtteranceLabels};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::seed;

/// `max(m, 10)` frames, roughly one phone at a 10 ms shift.
pub fn default_seg_len(psi: HyperParams) -> usize {
    psi.m.max(10)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(points: &[Vec<f64>], assign: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &c in assign.iter() {
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(&points[i], &centroids[assign[i]]);
                let dj = sq_dist(&points[j], &centroids[assign[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            });
        if let Some(i) = far {
            counts[assign[i]] -= 1;
            assign[i] = c;
            counts[c] = 1;
            centroids[c] = points[i].clone();
        }
    }
}

/// Seeded k-means (k-means++ seeding, Lloyd iterations). Returns the cluster
/// of every point. Requires `points.len() >= k`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1 && points.len() >= k, "kmeans needs at least k points");
    let mut rng = seed::rng(seed);
    let dim = points[0].len();

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        let newest = centroids.last().expect("non-empty");
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, newest));
        }
    }

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    repair_empty(points, &mut assign, &mut centroids);
    for _ in 0..100 {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        repair_empty(points, &mut next, &mut centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

/// Cuts every utterance into `seg_len`-frame pieces (remainder joins the
/// last piece) and labels the pieces by k-means over their mean vectors.
pub fn initialize_labels(
    corpus: &[FeatureSequence],
    psi: HyperParams,
    seg_len: usize,
    seed: u64,
) -> Result<TokenLabeling> {
    if seg_len < psi.m {
        return Err(Error::Invalid(format!(
            "initial segment length {seg_len} is below m={}",
            psi.m
        )));
    }
    let mut spans: Vec<Vec<(usize, usize)>> = Vec::with_capacity(corpus.len());
    let mut means = Vec::new();
    for f in corpus {
        let t_len = f.num_frames();
        let pieces = (t_len / seg_len).max(1);
        let mut u_spans = Vec::with_capacity(pieces);
        for i in 0..pieces {
            let start = i * seg_len;
            let end = if i + 1 == pieces { t_len } else { start + seg_len };
            u_spans.push((start, end));
            let mut mean = vec![0.0; f.dim()];
            for t in start..end {
                for (m, v) in mean.iter_mut().zip(f.frame(t)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= (end - start) as f64);
            means.push(mean);
        }
        spans.push(u_spans);
    }
    if means.len() < psi.n {
        return Err(Error::Invalid(format!(
            "corpus yields {} initial segments of {seg_len} frames; at least n={} are required",
            means.len(),
            psi.n
        )));
    }
    let assign = kmeans(&means, psi.n, seed);
    let mut next = assign.into_iter();
    let utterances = corpus
        .iter()
        .zip(spans)
        .map(|(f, u_spans)| UtteranceLabels {
            utterance_id: f.utterance_id.clone(),
            segments: u_spans
                .into_iter()
                .map(|(start, end)| Segment {
                    token: next.next().expect("one label per segment"),
                    start,
                    end,
                })
                .collect(),
        })
        .collect();
    Ok(TokenLabeling { utterances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use ndarray::Array2;

    fn seq(id: &str, t: usize) -> FeatureSequence {
        let frames = Array2::from_shape_fn((t, 2), |(i, d)| (i as f64).sin() + d as f64);
        FeatureSequence::new(id, "s", frames, 10, FeatureKind::Mfcc).unwrap()
    }

    #[test]
    fn thirty_frames_three_segments() {
        let psi = HyperParams::new(3, 2).unwrap();
        let corpus = [seq("a", 30)];
        let l = initialize_labels(&corpus, psi, 10, 0).unwrap();
        let segs = &l.utterances[0].segments;
        assert_eq!(segs.len(), 3);
        assert!(segs.iter().all(|s| s.len() == 10 && s.token < 2));
        l.validate(&corpus, psi).unwrap();
    }

    #[test]
    fn remainder_joins_last_and_short_utterance_is_whole() {
        let psi = HyperParams::new(3, 2).unwrap();
        let corpus = [seq("a", 27), seq("b", 2)];
        let l = initialize_labels(&corpus, psi, 10, 0).unwrap();
        let lens: Vec<usize> = l.utterances[0].segments.iter().map(|s| s.len()).collect();
        assert_eq!(lens, vec![10, 17]);
        assert_eq!(l.utterances[1].segments.len(), 1);
        assert_eq!(l.utterances[1].segments[0].len(), 2);
        l.validate(&corpus, psi).unwrap();
    }

    #[test]
    fn too_few_segments_rejected() {
        let psi = HyperParams::new(3, 5).unwrap();
        let err = initialize_labels(&[seq("a", 30)], psi, 10, 0).unwrap_err();
        assert!(err.to_string().contains("n=5"), "{err}");
        assert!(initialize_labels(&[seq("a", 30)], HyperParams::new(3, 2).unwrap(), 2, 0).is_err());
    }

    #[test]
    fn kmeans_fills_every_cluster() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 4) as f64]).collect();
        let a = kmeans(&pts, 4, 3);
        for c in 0..4 {
            assert!(a.contains(&c));
        }
        // identical points: still k distinct labels
        let same = vec![vec![1.0]; 5];
        let a = kmeans(&same, 3, 0);
        let mut ids = a.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 3);
    }
}
