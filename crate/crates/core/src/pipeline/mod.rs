//! The iterated MAT / MDNN loop over a run directory.
//!
//! ```text
//! <run>/config.txt                      canonical config
//! <run>/manifest.txt                    config hash, corpus fingerprint, finished stages
//! <run>/features/*.matf                 initial features
//! <run>/layers/iter{k}/round{r}/        layer set (plus fused.csv, documents.csv, init/ for r > 0)
//! <run>/mdnn/iter{k}.matn               network, iter{k}_loss.csv
//! <run>/bnf/iter{k}/*.matf              bottleneck features
//! <run>/reports/                        abx.csv, track2.csv, summary.txt
//! ```

mod config;
mod manifest;
mod report;
mod validate;

pub use config::{EvalSettings, MdnnSettings, PipelineConfig, SEED_ENV};
pub use manifest::Manifest;
pub use report::{abx_row, evaluate, AbxRow, RunReport, Track2Row};
pub use validate::{validate_run, ValidationReport};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::features::{
    broadcast, concat_tandem, read_corpus_dir, stack_context, utterance_summary, write_corpus_dir, FeatureKind,
    FeatureSequence,
};
use crate::granularity::{corpus_fingerprint, train_grid, LayerSet};
use crate::mdnn::{extract_bnf, frame_targets, train_corpus, Mdnn};
use crate::reinforcement::reinforce;
use crate::seed;

const TAG_GRID: u64 = 0;
const TAG_MR: u64 = 1;
const TAG_MDNN: u64 = 2;
pub(crate) const TAG_ABX: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn layers(&self, k: usize, round: usize) -> PathBuf {
        self.root.join("layers").join(format!("iter{k}")).join(format!("round{round}"))
    }

    pub fn mdnn(&self, k: usize) -> PathBuf {
        self.root.join("mdnn").join(format!("iter{k}.matn"))
    }

    pub fn mdnn_loss(&self, k: usize) -> PathBuf {
        self.root.join("mdnn").join(format!("iter{k}_loss.csv"))
    }

    pub fn bnf(&self, k: usize) -> PathBuf {
        self.root.join("bnf").join(format!("iter{k}"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Network input for iteration `k`: stacked initial features, stacked
/// bottleneck features of iteration `k - 1` when given, and the utterance
/// summary of the initial features.
pub fn mdnn_inputs(
    initial: &[FeatureSequence],
    prev_bnf: Option<&[FeatureSequence]>,
    context: usize,
) -> Result<Vec<FeatureSequence>> {
    if let Some(prev) = prev_bnf {
        if prev.len() != initial.len() {
            return Err(Error::Invalid(format!(
                "{} bottleneck utterances for {} initial ones",
                prev.len(),
                initial.len()
            )));
        }
    }
    initial
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut parts = vec![stack_context(f, context)];
            if let Some(prev) = prev_bnf {
                parts.push(stack_context(&prev[i], context));
            }
            parts.push(broadcast(utterance_summary(f).view(), f));
            let refs: Vec<&FeatureSequence> = parts.iter().collect();
            concat_tandem(&refs)
        })
        .collect()
}

/// What one iteration leaves behind, as read back from disk.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub k: usize,
    /// Layer set after the last MR round.
    pub layers: LayerSet,
    pub net: Mdnn,
    pub bnf: Vec<FeatureSequence>,
}

/// An open run directory.
#[derive(Debug)]
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub layout: RunLayout,
    manifest: Manifest,
}

impl Pipeline {
    /// Creates a run directory, or reopens one with `resume`. A directory
    /// made under a different config is refused.
    pub fn open(cfg: &PipelineConfig, root: &Path, resume: bool) -> Result<Self> {
        cfg.validate()?;
        let layout = RunLayout::new(root);
        let hash = cfg.hash();
        let manifest = if layout.manifest().exists() {
            if !resume {
                return Err(Error::Config(format!(
                    "{} already holds a run; pass --resume to continue it",
                    root.display()
                )));
            }
            let m = Manifest::load(&layout.manifest())?;
            if m.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} was produced by config {}, this config hashes to {}",
                    root.display(),
                    m.config_hash,
                    hash
                )));
            }
            m
        } else {
            fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
            let path = layout.config();
            fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))?;
            let m = Manifest::new(hash);
            m.save(&layout.manifest())?;
            m
        };
        Ok(Self {
            cfg: cfg.clone(),
            layout,
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn stage_seed(&self, tag: u64, k: usize, round: usize) -> u64 {
        seed::derive(self.cfg.seed, &[tag, k as u64, round as u64])
    }

    /// Runs `produce` unless the manifest already lists `name`.
    fn stage<F: FnOnce(&Self) -> Result<()>>(&mut self, name: &str, produce: F) -> Result<()> {
        if self.manifest.is_done(name) {
            log::info!("stage {name}: already done");
            return Ok(());
        }
        log::info!("stage {name}");
        produce(self)?;
        self.manifest.mark(name);
        self.manifest.save(&self.layout.manifest())
    }

    /// Copies the configured corpus into the run and returns it as stored.
    pub fn features(&mut self) -> Result<Vec<FeatureSequence>> {
        self.stage("features", |p| {
            let corpus = read_corpus_dir(&p.cfg.features, FeatureKind::Mfcc)?;
            if corpus.is_empty() {
                return Err(Error::Invalid(format!("no .matf files in {}", p.cfg.features.display())));
            }
            write_corpus_dir(&p.layout.features(), &corpus)
        })?;
        let corpus = read_corpus_dir(&self.layout.features(), FeatureKind::Mfcc)?;
        let fp = corpus_fingerprint(&corpus);
        match &self.manifest.corpus {
            Some(stored) if *stored != fp => {
                return Err(Error::Invalid(format!(
                    "features in {} do not match the corpus recorded in the manifest",
                    self.layout.features().display()
                )))
            }
            Some(_) => {}
            None => {
                self.manifest.corpus = Some(fp);
                self.manifest.save(&self.layout.manifest())?;
            }
        }
        Ok(corpus)
    }

    /// Iteration `k`: tokenizer grid on the initial features (`k = 1`) or on
    /// `prev_bnf`, the configured MR rounds, then MDNN training and
    /// bottleneck extraction.
    pub fn run_iteration(
        &mut self,
        k: usize,
        initial: &[FeatureSequence],
        prev_bnf: Option<&[FeatureSequence]>,
    ) -> Result<IterationOutput> {
        if k == 0 || (k > 1) != prev_bnf.is_some() {
            return Err(Error::Invalid(format!(
                "iteration {k} needs bottleneck features exactly when k > 1"
            )));
        }
        let mat_input = prev_bnf.unwrap_or(initial);
        let grid = self.cfg.grid.clone();

        let dir = self.layout.layers(k, 0);
        self.stage(&format!("iter{k}/round0"), |p| {
            let opts = p.cfg.tokenizer_options(p.stage_seed(TAG_GRID, k, 0));
            train_grid(mat_input, &grid, &opts, None)?.save(&dir)
        })?;
        let mut layers = LayerSet::load(&dir, &grid, mat_input)?;

        for round in 1..=self.cfg.mr_rounds {
            let dir = self.layout.layers(k, round);
            self.stage(&format!("iter{k}/round{round}"), |p| {
                let mr_opts = p.cfg.reinforce_options(p.stage_seed(TAG_MR, k, round));
                let mr = reinforce(&layers, mat_input, &grid, &mr_opts)?;
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                mr.save(&dir)?;
                let opts = p.cfg.tokenizer_options(p.stage_seed(TAG_GRID, k, round));
                train_grid(mat_input, &grid, &opts, Some(&mr.initial))?.save(&dir)
            })?;
            layers = LayerSet::load(&dir, &grid, mat_input)?;
        }

        let inputs = mdnn_inputs(initial, prev_bnf, self.cfg.mdnn.context)?;
        let net_path = self.layout.mdnn(k);
        self.stage(&format!("iter{k}/mdnn"), |p| {
            let targets = frame_targets(&layers)?;
            let cfg = p
                .cfg
                .mdnn
                .config(inputs[0].dim(), targets.heads.clone(), p.stage_seed(TAG_MDNN, k, 0));
            let trained = train_corpus(&inputs, &targets, &cfg)?;
            let dir = net_path.parent().expect("file in mdnn/");
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            trained.net.save(&net_path)?;
            let loss_path = p.layout.mdnn_loss(k);
            let mut w = csv::Writer::from_path(&loss_path)?;
            w.write_record(["epoch", "loss"])?;
            for (epoch, l) in trained.loss_trace.iter().enumerate() {
                w.write_record([epoch.to_string(), l.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&loss_path, e))
        })?;
        let net = Mdnn::load(&net_path)?;

        let bnf_dir = self.layout.bnf(k);
        self.stage(&format!("iter{k}/bnf"), |_| {
            let bnf: Vec<FeatureSequence> = inputs.par_iter().map(|f| extract_bnf(&net, f)).collect::<Result<_>>()?;
            write_corpus_dir(&bnf_dir, &bnf)
        })?;
        let bnf = read_corpus_dir(&bnf_dir, FeatureKind::Bottleneck)?;
        if bnf.len() != initial.len() {
            return Err(Error::Invalid(format!(
                "{} holds {} utterances, expected {}",
                bnf_dir.display(),
                bnf.len(),
                initial.len()
            )));
        }
        Ok(IterationOutput { k, layers, net, bnf })
    }

    /// Every iteration in order, then the reports when an annotation is
    /// configured.
    pub fn run(&mut self) -> Result<RunReport> {
        let initial = self.features()?;
        let gold = match &self.cfg.annotation {
            Some(path) => {
                let g = Annotation::read_csv(path)?;
                check_annotation(&g, &initial)?;
                Some(g)
            }
            None => None,
        };
        let mut outputs: Vec<IterationOutput> = Vec::with_capacity(self.cfg.iterations);
        for k in 1..=self.cfg.iterations {
            let prev = outputs.last().map(|o| o.bnf.as_slice());
            let out = self.run_iteration(k, &initial, prev)?;
            outputs.push(out);
        }
        let report = match &gold {
            Some(g) => evaluate(&self.cfg, &initial, &outputs, g)?,
            None => RunReport::default(),
        };
        let dir = self.layout.reports();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        report.write(&dir)?;
        self.manifest.mark("reports");
        self.manifest.save(&self.layout.manifest())?;
        Ok(report)
    }
}

/// Opens (or resumes) `root` and runs the whole loop.
pub fn run_pipeline(cfg: &PipelineConfig, root: &Path, resume: bool) -> Result<RunReport> {
    Pipeline::open(cfg, root, resume)?.run()
}

/// Every annotated utterance must exist in the corpus with the same length.
pub fn check_annotation(gold: &Annotation, corpus: &[FeatureSequence]) -> Result<()> {
    for u in &gold.utterances {
        let f = corpus
            .iter()
            .find(|f| f.utterance_id == u.utterance_id)
            .ok_or_else(|| Error::Utterance {
                utterance_id: u.utterance_id.clone(),
                detail: "annotated but absent from the corpus".into(),
            })?;
        if f.num_frames() != u.num_frames() {
            return Err(Error::Utterance {
                utterance_id: u.utterance_id.clone(),
                detail: format!("annotation spans {} frames, features {}", u.num_frames(), f.num_frames()),
            });
        }
    }
    Ok(())
}
