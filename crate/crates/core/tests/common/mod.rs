//! Independent brute-force references shared by the oracle tests and the
//! acceptance suite. Nothing here calls the code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use matdnn::features::{FeatureKind, FeatureSequence};
use matdnn::mdnn::Mdnn;
use matdnn::tokenizer::{Gaussian, HyperParams, TokenHmm, TokenSetModel};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seq(id: &str, speaker: &str, frames: Array2<f64>) -> FeatureSequence {
    FeatureSequence::new(id, speaker, frames, 10, FeatureKind::Mfcc).unwrap()
}

/// Diagonal Gaussian log density written out term by term.
pub fn log_normal(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v))
        .sum()
}

/// Every way to write `total` as an ordered sum of `parts` positive
/// integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Best left-to-right path score of `frames` through `hmm` by enumerating
/// the duration of every state; the last state's advance closes the token.
pub fn brute_segment_score(hmm: &TokenHmm, frames: &[Vec<f64>]) -> f64 {
    let m = hmm.states.len();
    let mut best = f64::NEG_INFINITY;
    for durs in compositions(frames.len(), m) {
        let mut t = 0;
        let mut score = 0.0;
        for (s, &d) in durs.iter().enumerate() {
            let g = &hmm.states[s];
            for _ in 0..d {
                score += log_normal(&frames[t], g.mean(), g.var());
                t += 1;
            }
            let p = hmm.self_loop[s];
            score += (d - 1) as f64 * p.ln() + (1.0 - p).ln();
        }
        best = best.max(score);
    }
    best
}

/// Every segmentation of `0..t_len` into pieces of at least `min_len`
/// frames.
pub fn segmentations(t_len: usize, min_len: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(start: usize, t_len: usize, min_len: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if start == t_len {
            out.push(cur.clone());
            return;
        }
        for end in start + min_len..=t_len {
            cur.push((start, end));
            rec(end, t_len, min_len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, t_len, min_len, &mut Vec::new(), &mut out);
    out
}

/// Highest-scoring labeling `(start, end, token)` over all segmentations
/// and token assignments, with its score and the runner-up score.
pub fn brute_decode(frames: &[Vec<f64>], model: &TokenSetModel) -> (Vec<(usize, usize, usize)>, f64, f64) {
    let m = model.psi.m;
    let n = model.hmms.len();
    let mut best: (Vec<(usize, usize, usize)>, f64) = (Vec::new(), f64::NEG_INFINITY);
    let mut second = f64::NEG_INFINITY;
    for segs in segmentations(frames.len(), m) {
        let per_seg: Vec<Vec<f64>> = segs
            .iter()
            .map(|&(s, e)| {
                (0..n)
                    .map(|k| brute_segment_score(&model.hmms[k], &frames[s..e]) + model.lm_weight * model.token_lm[k].ln())
                    .collect()
            })
            .collect();
        let combos = n.pow(segs.len() as u32);
        for c in 0..combos {
            let mut code = c;
            let mut score = 0.0;
            let mut lab = Vec::with_capacity(segs.len());
            for (i, &(s, e)) in segs.iter().enumerate() {
                let k = code % n;
                code /= n;
                score += per_seg[i][k];
                lab.push((s, e, k));
            }
            if score > best.1 {
                second = best.1;
                best = (lab, score);
            } else if score > second {
                second = score;
            }
        }
    }
    (best.0, best.1, second)
}

/// Random left-to-right token set with `n` tokens of `m` states over `dim`
/// dimensions.
pub fn random_model(rng: &mut impl Rng, m: usize, n: usize, dim: usize) -> TokenSetModel {
    let hmms = (0..n)
        .map(|k| TokenHmm {
            token_id: k,
            states: (0..m)
                .map(|_| {
                    Gaussian::new(
                        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                        (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
                    )
                })
                .collect(),
            self_loop: (0..m).map(|_| rng.random_range(0.1..0.9)).collect(),
        })
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let z: f64 = raw.iter().sum();
    TokenSetModel {
        psi: HyperParams::new(m, n).unwrap(),
        hmms,
        token_lm: raw.iter().map(|r| r / z).collect(),
        feature_dim: dim,
        lm_weight: 1.0,
    }
}

/// Size of the largest one-to-one matching between `found` and `gold`
/// boundaries within `tol`, by trying every matching.
pub fn exhaustive_matching(found: &[usize], gold: &[usize], tol: usize) -> usize {
    fn rec(i: usize, found: &[usize], gold: &[usize], used: &mut Vec<bool>, tol: usize) -> usize {
        if i == found.len() {
            return 0;
        }
        let mut best = rec(i + 1, found, gold, used, tol);
        for j in 0..gold.len() {
            if !used[j] && found[i].abs_diff(gold[j]) <= tol {
                used[j] = true;
                best = best.max(1 + rec(i + 1, found, gold, used, tol));
                used[j] = false;
            }
        }
        best
    }
    rec(0, found, gold, &mut vec![false; gold.len()], tol)
}

/// Minimum-cost monotone alignment (shortest among the cheapest) divided by
/// its length, enumerating every path.
pub fn brute_dtw(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let cost = |i: usize, j: usize| {
        let (x, y) = (a.row(i), b.row(j));
        let (nx, ny) = (x.dot(&x).sqrt(), y.dot(&y).sqrt());
        match (nx > 0.0, ny > 0.0) {
            (false, false) => 0.0,
            (true, true) => 1.0 - x.dot(&y) / (nx * ny),
            _ => 1.0,
        }
    };
    let mut paths: Vec<(f64, usize)> = Vec::new();
    fn walk(
        i: usize,
        j: usize,
        n: usize,
        m: usize,
        acc: f64,
        len: usize,
        cost: &dyn Fn(usize, usize) -> f64,
        out: &mut Vec<(f64, usize)>,
    ) {
        let acc = acc + cost(i, j);
        if i == n - 1 && j == m - 1 {
            out.push((acc, len + 1));
            return;
        }
        if i + 1 < n {
            walk(i + 1, j, n, m, acc, len + 1, cost, out);
        }
        if j + 1 < m {
            walk(i, j + 1, n, m, acc, len + 1, cost, out);
        }
        if i + 1 < n && j + 1 < m {
            walk(i + 1, j + 1, n, m, acc, len + 1, cost, out);
        }
    }
    walk(0, 0, a.nrows(), b.nrows(), 0.0, 0, &cost, &mut paths);
    let min_cost = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let len = paths
        .iter()
        .filter(|p| p.0 <= min_cost + 1e-12)
        .map(|p| p.1)
        .min()
        .unwrap();
    min_cost / len as f64
}

/// Per-head cross-entropy averaged over frames then heads, from the
/// network's own parameters with a hand-written forward pass.
pub fn oracle_loss(net: &Mdnn, x: ArrayView2<f64>, y: &[Vec<usize>]) -> f64 {
    let act = |v: f64| match net.activation {
        matdnn::mdnn::Activation::Logistic => 1.0 / (1.0 + (-v).exp()),
        matdnn::mdnn::Activation::Tanh => v.tanh(),
    };
    let mut total = 0.0;
    for h in 0..net.heads.len() {
        let mut sum = 0.0;
        for t in 0..x.nrows() {
            let mut a: Vec<f64> = x.row(t).to_vec();
            for layer in &net.trunk {
                a = (0..layer.b.len())
                    .map(|o| act(layer.b[o] + (0..a.len()).map(|i| a[i] * layer.w[[i, o]]).sum::<f64>()))
                    .collect();
            }
            let head = &net.head_layers[h];
            let z: Vec<f64> = (0..head.b.len())
                .map(|o| head.b[o] + (0..a.len()).map(|i| a[i] * head.w[[i, o]]).sum::<f64>())
                .collect();
            let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            sum += lse - z[y[h][t]];
        }
        total += sum / x.nrows() as f64;
    }
    total / net.heads.len() as f64
}

/// Largest relative error between the analytic gradient and central
/// differences with step `eps`, over every parameter.
pub fn max_gradient_error(net: &Mdnn, x: ArrayView2<f64>, y: &[Vec<usize>], eps: f64) -> f64 {
    let (_, grads) = matdnn::mdnn::loss_and_gradient(net, x, y).unwrap();
    let analytic = grads.values();
    let count = net.num_params();
    assert_eq!(analytic.len(), count);
    let mut worst: f64 = 0.0;
    for p in 0..count {
        let shifted = |delta: f64| {
            let mut probe = net.clone();
            let mut idx = 0;
            probe.for_each_param_mut(|v| {
                if idx == p {
                    *v += delta;
                }
                idx += 1;
            });
            oracle_loss(&probe, x, y)
        };
        let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let denom = analytic[p].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[p] - numeric).abs() / denom);
    }
    worst
}
