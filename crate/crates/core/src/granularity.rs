//! The `M x N` grid of tokenizer layers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{write_matf, FeatureSequence};
use crate::seed;
use crate::tokenizer::{
    read_labels_csv, train_layer, write_labels_csv, HyperParams, TokenLabeling, TokenSetModel,
    TrainOptions, TrainReport,
};

/// Temporal granularities `m` crossed with phonetic granularities `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGrid {
    temporal: Vec<usize>,
    phonetic: Vec<usize>,
}

impl LayerGrid {
    pub fn new(temporal: Vec<usize>, phonetic: Vec<usize>) -> Result<Self> {
        if temporal.is_empty() || phonetic.is_empty() {
            return Err(Error::Invalid("layer grid needs at least one m and one n".into()));
        }
        for (name, list) in [("temporal", &temporal), ("phonetic", &phonetic)] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!("{name} granularities must be strictly increasing: {list:?}")));
            }
        }
        for &m in &temporal {
            for &n in &phonetic {
                HyperParams::new(m, n)?;
            }
        }
        Ok(Self { temporal, phonetic })
    }

    pub fn temporal(&self) -> &[usize] {
        &self.temporal
    }

    pub fn phonetic(&self) -> &[usize] {
        &self.phonetic
    }

    /// All `(m, n)` pairs in `(m, n)` order.
    pub fn pairs(&self) -> Vec<HyperParams> {
        self.temporal
            .iter()
            .flat_map(|&m| self.phonetic.iter().map(move |&n| HyperParams { m, n }))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.temporal.len() * self.phonetic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for LayerGrid {
    /// `m` in {3, 5, 7, 9} by `n` in {50, 100, 300, 500}: sixteen layers.
    fn default() -> Self {
        Self {
            temporal: vec![3, 5, 7, 9],
            phonetic: vec![50, 100, 300, 500],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub model: TokenSetModel,
    pub labeling: TokenLabeling,
    pub report: TrainReport,
}

/// Trained layers keyed and ordered by `(m, n)`.
#[derive(Debug, Clone)]
pub struct LayerSet {
    pub layers: BTreeMap<HyperParams, Layer>,
    /// SHA-256 over the MATF encoding of the corpus the layers were trained
    /// on.
    pub fingerprint: String,
}

impl LayerSet {
    pub fn labelings(&self) -> Vec<(HyperParams, &TokenLabeling)> {
        self.layers.iter().map(|(&psi, l)| (psi, &l.labeling)).collect()
    }

    /// Writes `m{m}_n{n}/{model.matm,labels.csv}` plus `fingerprint.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (psi, layer) in &self.layers {
            let sub = dir.join(psi.to_string());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            layer.model.save(&sub.join("model.matm"))?;
            write_labels_csv(&layer.labeling, &sub.join("labels.csv"))?;
        }
        let fp = dir.join("fingerprint.txt");
        fs::write(&fp, format!("{}\n", self.fingerprint)).map_err(|e| Error::io(&fp, e))
    }

    /// Loads every layer of `grid` and checks it against `corpus`.
    pub fn load(dir: &Path, grid: &LayerGrid, corpus: &[FeatureSequence]) -> Result<Self> {
        let fp_path = dir.join("fingerprint.txt");
        let stored = fs::read_to_string(&fp_path).map_err(|_| Error::Missing(fp_path.clone()))?;
        let fingerprint = corpus_fingerprint(corpus);
        if stored.trim() != fingerprint {
            return Err(Error::Invalid(format!(
                "layers in {} were trained on a different corpus",
                dir.display()
            )));
        }
        let mut layers = BTreeMap::new();
        for psi in grid.pairs() {
            let sub = dir.join(psi.to_string());
            let model_path = sub.join("model.matm");
            let labels_path = sub.join("labels.csv");
            for p in [&model_path, &labels_path] {
                if !p.exists() {
                    return Err(Error::Missing(p.clone()));
                }
            }
            let model = TokenSetModel::load(&model_path)?;
            if model.psi != psi {
                return Err(Error::Invalid(format!("{} holds a model for {}", sub.display(), model.psi)));
            }
            let labeling = read_labels_csv(&labels_path)?;
            labeling.validate(corpus, psi)?;
            layers.insert(
                psi,
                Layer {
                    model,
                    labeling,
                    report: TrainReport::default(),
                },
            );
        }
        Ok(Self { layers, fingerprint })
    }
}

pub fn corpus_fingerprint(corpus: &[FeatureSequence]) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for f in corpus {
        buf.clear();
        write_matf(f, &mut buf).expect("writing to memory");
        hasher.update(&buf);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Seed of layer `(m, n)`, independent of scheduling order.
pub fn layer_seed(global: u64, psi: HyperParams) -> u64 {
    seed::derive(global, &[psi.m as u64, psi.n as u64])
}

/// Trains every layer of the grid independently, starting each from
/// `initial[psi]` when given.
pub fn train_grid(
    corpus: &[FeatureSequence],
    grid: &LayerGrid,
    opts: &TrainOptions,
    initial: Option<&BTreeMap<HyperParams, TokenLabeling>>,
) -> Result<LayerSet> {
    let trained: Vec<(HyperParams, Result<Layer>)> = grid
        .pairs()
        .into_par_iter()
        .map(|psi| {
            let layer_opts = TrainOptions {
                seed: layer_seed(opts.seed, psi),
                ..*opts
            };
            let init = initial.and_then(|m| m.get(&psi)).cloned();
            let res = train_layer(corpus, psi, &layer_opts, init).map(|r| Layer {
                model: r.model,
                labeling: r.labeling,
                report: r.report,
            });
            (psi, res)
        })
        .collect();
    let mut layers = BTreeMap::new();
    for (psi, res) in trained {
        let layer = res.map_err(|e| Error::Layer {
            m: psi.m,
            n: psi.n,
            source: Box::new(e),
        })?;
        layers.insert(psi, layer);
    }
    Ok(LayerSet {
        layers,
        fingerprint: corpus_fingerprint(corpus),
    })
}
