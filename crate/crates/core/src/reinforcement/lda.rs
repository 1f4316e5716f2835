use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaOptions {
    /// Doc-topic prior; `None` means `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for LdaOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: 0.01,
            iters: 200,
            seed: 0,
        }
    }
}

/// State of a collapsed Gibbs chain after its final sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab_size: usize,
    pub seed: u64,
    /// `K x V`, row-major.
    pub topic_word_counts: Vec<u32>,
    pub topic_counts: Vec<u32>,
    /// `D x K`, row-major.
    pub doc_topic_counts: Vec<u32>,
    /// Topic of every word token, per document.
    pub assignments: Vec<Vec<usize>>,
    /// Documents without words; their posterior is uniform.
    pub empty_docs: Vec<usize>,
}

impl LdaModel {
    pub fn num_docs(&self) -> usize {
        self.assignments.len()
    }

    /// `p(topic | doc) ∝ count + alpha`.
    pub fn doc_posterior(&self, d: usize) -> Vec<f64> {
        let row = &self.doc_topic_counts[d * self.k..(d + 1) * self.k];
        let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>() + self.k as f64 * self.alpha;
        row.iter().map(|&c| (c as f64 + self.alpha) / total).collect()
    }

    /// Most probable topic; ties go to the lowest id.
    pub fn doc_topic(&self, d: usize) -> usize {
        let row = &self.doc_topic_counts[d * self.k..(d + 1) * self.k];
        let mut best = 0;
        for (t, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = t;
            }
        }
        best
    }
}

/// Collapsed Gibbs sampling over `docs` (each a list of word ids below
/// `vocab_size`).
pub fn lda_gibbs(docs: &[Vec<usize>], vocab_size: usize, k: usize, opts: &LdaOptions) -> Result<LdaModel> {
    if k == 0 {
        return Err(Error::Invalid("LDA needs at least one topic".into()));
    }
    if vocab_size == 0 {
        return Err(Error::Invalid("LDA vocabulary is empty".into()));
    }
    if let Some(w) = docs.iter().flatten().find(|&&w| w >= vocab_size) {
        return Err(Error::Invalid(format!("word id {w} outside vocabulary of {vocab_size}")));
    }
    let alpha = opts.alpha.unwrap_or(50.0 / k as f64);
    if !(alpha > 0.0 && opts.beta > 0.0) {
        return Err(Error::Invalid(format!("LDA priors must be positive (alpha={alpha}, beta={})", opts.beta)));
    }
    let beta = opts.beta;
    let v_beta = vocab_size as f64 * beta;
    let mut rng = seed::rng(opts.seed);

    let mut tw = vec![0u32; k * vocab_size];
    let mut tc = vec![0u32; k];
    let mut dt = vec![0u32; docs.len() * k];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let zd: Vec<usize> = doc
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                tw[t * vocab_size + w] += 1;
                tc[t] += 1;
                dt[d * k + t] += 1;
                t
            })
            .collect();
        z.push(zd);
    }

    let mut p = vec![0.0; k];
    for _ in 0..opts.iters {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                tw[old * vocab_size + w] -= 1;
                tc[old] -= 1;
                dt[d * k + old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let v = (dt[d * k + t] as f64 + alpha) * (tw[t * vocab_size + w] as f64 + beta)
                        / (tc[t] as f64 + v_beta);
                    total += v;
                    p[t] = total;
                }
                let r = rng.random::<f64>() * total;
                let new = p.partition_point(|&c| c <= r).min(k - 1);
                z[d][i] = new;
                tw[new * vocab_size + w] += 1;
                tc[new] += 1;
                dt[d * k + new] += 1;
            }
        }
    }

    let empty_docs = docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_empty())
        .map(|(i, _)| i)
        .collect();
    Ok(LdaModel {
        k,
        alpha,
        beta,
        vocab_size,
        seed: opts.seed,
        topic_word_counts: tw,
        topic_counts: tc,
        doc_topic_counts: dt,
        assignments: z,
        empty_docs,
    })
}
