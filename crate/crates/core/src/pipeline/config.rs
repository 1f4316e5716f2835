//! Line-oriented `key = value` run configuration.
//!
//! Keys may be written in full (`mdnn.epochs = 20`) or under a `[mdnn]`
//! section header. `#` starts a comment. Lists are comma separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::granularity::LayerGrid;
use crate::mdnn::{Activation, MdnnConfig};
use crate::reinforcement::{LdaOptions, ReinforceOptions};
use crate::tokenizer::TrainOptions;

pub const SEED_ENV: &str = "MATDNN_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct MdnnSettings {
    /// Frames of context stacked on each side of every input block.
    pub context: usize,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    /// Hidden layers after the bottleneck.
    pub post_hidden: Vec<usize>,
    pub activation: Activation,
    pub learn_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MdnnSettings {
    fn default() -> Self {
        Self {
            context: 4,
            hidden: vec![256, 256],
            bottleneck: 39,
            post_hidden: Vec::new(),
            activation: Activation::Logistic,
            learn_rate: 0.1,
            epochs: 20,
            batch_size: 128,
        }
    }
}

impl MdnnSettings {
    pub fn config(&self, input_dim: usize, heads: Vec<usize>, seed: u64) -> MdnnConfig {
        let mut layer_dims = vec![input_dim];
        layer_dims.extend(&self.hidden);
        layer_dims.push(self.bottleneck);
        let bottleneck_index = layer_dims.len() - 1;
        layer_dims.extend(&self.post_hidden);
        MdnnConfig {
            layer_dims,
            bottleneck_index,
            heads,
            activation: self.activation,
            learn_rate: self.learn_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub abx: bool,
    pub track2: bool,
    pub abx_max_triples: usize,
    pub boundary_tol: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            abx: true,
            track2: true,
            abx_max_triples: 50,
            boundary_tol: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory of MATF files.
    pub features: PathBuf,
    /// Gold annotation CSV; evaluation is skipped without it.
    pub annotation: Option<PathBuf>,
    pub grid: LayerGrid,
    pub iterations: usize,
    pub mr_rounds: usize,
    pub tokenizer: TrainOptions,
    pub reinforce: ReinforceOptions,
    pub mdnn: MdnnSettings,
    pub eval: EvalSettings,
    pub seed: u64,
}

impl PipelineConfig {
    /// Defaults with the desk grid `{3,5} x {4,8}`.
    pub fn new(features: PathBuf) -> Self {
        Self {
            features,
            annotation: None,
            grid: LayerGrid::new(vec![3, 5], vec![4, 8]).expect("valid grid"),
            iterations: 2,
            mr_rounds: 1,
            tokenizer: TrainOptions::default(),
            reinforce: ReinforceOptions::default(),
            mdnn: MdnnSettings::default(),
            eval: EvalSettings::default(),
            seed: 0,
        }
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::new(PathBuf::new());
        let mut have_features = false;
        let (mut grid_m, mut grid_n) = (cfg.grid.temporal().to_vec(), cfg.grid.phonetic().to_vec());
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", no + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            let num = |v: &str| -> Result<usize> { v.parse().map_err(|_| at(format!("{key}: `{v}` is not a count"))) };
            let real = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| at(format!("{key}: `{v}` is not a number")))
            };
            let flag = |v: &str| -> Result<bool> {
                match v {
                    "true" | "yes" | "1" => Ok(true),
                    "false" | "no" | "0" => Ok(false),
                    _ => Err(at(format!("{key}: `{v}` is not a boolean"))),
                }
            };
            let list = |v: &str| -> Result<Vec<usize>> {
                v.trim_matches(|c| c == '[' || c == ']')
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(num)
                    .collect()
            };
            let path = |v: &str| -> PathBuf {
                let p = PathBuf::from(v);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            };
            match key.as_str() {
                "corpus.features" => {
                    cfg.features = path(v);
                    have_features = true;
                }
                "corpus.annotation" => cfg.annotation = Some(path(v)),
                "seed" => cfg.seed = v.parse().map_err(|_| at(format!("seed: `{v}` is not an integer")))?,
                "iterations" => cfg.iterations = num(v)?,
                "grid.m" => grid_m = list(v)?,
                "grid.n" => grid_n = list(v)?,
                "tokenizer.max_iters" => cfg.tokenizer.max_iters = num(v)?,
                "tokenizer.label_change_tol" => cfg.tokenizer.label_change_tol = real(v)?,
                "tokenizer.lm_weight" => cfg.tokenizer.lm_weight = real(v)?,
                "tokenizer.seg_len" => cfg.tokenizer.seg_len = Some(num(v)?),
                "mr.rounds" => cfg.mr_rounds = num(v)?,
                "mr.smooth_width" => cfg.reinforce.peaks.smooth_width = num(v)?,
                "mr.threshold" => cfg.reinforce.peaks.threshold = real(v)?,
                "mr.min_gap" => cfg.reinforce.peaks.min_gap = num(v)?,
                "mr.lda_iters" => cfg.reinforce.lda.iters = num(v)?,
                "mr.alpha" => cfg.reinforce.lda.alpha = Some(real(v)?),
                "mr.beta" => cfg.reinforce.lda.beta = real(v)?,
                "mdnn.context" => cfg.mdnn.context = num(v)?,
                "mdnn.hidden" => cfg.mdnn.hidden = list(v)?,
                "mdnn.bottleneck" => cfg.mdnn.bottleneck = num(v)?,
                "mdnn.post_hidden" => cfg.mdnn.post_hidden = list(v)?,
                "mdnn.activation" => {
                    cfg.mdnn.activation =
                        Activation::parse(v).ok_or_else(|| at(format!("unknown activation `{v}`")))?
                }
                "mdnn.learn_rate" => cfg.mdnn.learn_rate = real(v)?,
                "mdnn.epochs" => cfg.mdnn.epochs = num(v)?,
                "mdnn.batch_size" => cfg.mdnn.batch_size = num(v)?,
                "eval.abx" => cfg.eval.abx = flag(v)?,
                "eval.track2" => cfg.eval.track2 = flag(v)?,
                "eval.abx_max_triples" => cfg.eval.abx_max_triples = num(v)?,
                "eval.boundary_tol" => cfg.eval.boundary_tol = num(v)?,
                _ => return Err(at(format!("unknown key `{key}`"))),
            }
        }
        if !have_features {
            return Err(Error::Config("missing required key `corpus.features`".into()));
        }
        cfg.grid = LayerGrid::new(grid_m, grid_n).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `MATDNN_SEED` override.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{s}` is not an integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.mdnn.bottleneck == 0 || self.mdnn.hidden.contains(&0) || self.mdnn.post_hidden.contains(&0) {
            return bad("mdnn layer widths must be positive");
        }
        if self.mdnn.batch_size == 0 || !(self.mdnn.learn_rate > 0.0) {
            return bad("mdnn batch_size and learn_rate must be positive");
        }
        if !(self.reinforce.lda.beta > 0.0) || self.reinforce.lda.alpha.is_some_and(|a| a <= 0.0) {
            return bad("LDA priors must be positive");
        }
        if !(0.0..=1.0).contains(&self.tokenizer.label_change_tol) {
            return bad("tokenizer.label_change_tol must lie in [0, 1]");
        }
        Ok(())
    }

    /// Canonical rendering of every setting; parsing it back yields the same
    /// config.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("corpus.features", self.features.display().to_string());
        if let Some(a) = &self.annotation {
            kv("corpus.annotation", a.display().to_string());
        }
        kv("seed", self.seed.to_string());
        kv("iterations", self.iterations.to_string());
        kv("grid.m", join(self.grid.temporal()));
        kv("grid.n", join(self.grid.phonetic()));
        kv("tokenizer.max_iters", self.tokenizer.max_iters.to_string());
        kv("tokenizer.label_change_tol", self.tokenizer.label_change_tol.to_string());
        kv("tokenizer.lm_weight", self.tokenizer.lm_weight.to_string());
        if let Some(l) = self.tokenizer.seg_len {
            kv("tokenizer.seg_len", l.to_string());
        }
        kv("mr.rounds", self.mr_rounds.to_string());
        kv("mr.smooth_width", self.reinforce.peaks.smooth_width.to_string());
        kv("mr.threshold", self.reinforce.peaks.threshold.to_string());
        kv("mr.min_gap", self.reinforce.peaks.min_gap.to_string());
        kv("mr.lda_iters", self.reinforce.lda.iters.to_string());
        if let Some(a) = self.reinforce.lda.alpha {
            kv("mr.alpha", a.to_string());
        }
        kv("mr.beta", self.reinforce.lda.beta.to_string());
        kv("mdnn.context", self.mdnn.context.to_string());
        kv("mdnn.hidden", join(&self.mdnn.hidden));
        kv("mdnn.bottleneck", self.mdnn.bottleneck.to_string());
        kv("mdnn.post_hidden", join(&self.mdnn.post_hidden));
        kv(
            "mdnn.activation",
            match self.mdnn.activation {
                Activation::Logistic => "logistic",
                Activation::Tanh => "tanh",
            }
            .to_string(),
        );
        kv("mdnn.learn_rate", self.mdnn.learn_rate.to_string());
        kv("mdnn.epochs", self.mdnn.epochs.to_string());
        kv("mdnn.batch_size", self.mdnn.batch_size.to_string());
        kv("eval.abx", self.eval.abx.to_string());
        kv("eval.track2", self.eval.track2.to_string());
        kv("eval.abx_max_triples", self.eval.abx_max_triples.to_string());
        kv("eval.boundary_tol", self.eval.boundary_tol.to_string());
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn tokenizer_options(&self, seed: u64) -> TrainOptions {
        TrainOptions { seed, ..self.tokenizer }
    }

    pub fn reinforce_options(&self, seed: u64) -> ReinforceOptions {
        ReinforceOptions {
            peaks: self.reinforce.peaks,
            lda: LdaOptions { seed, ..self.reinforce.lda },
        }
    }
}
