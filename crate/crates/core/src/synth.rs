//! Seeded synthetic corpora in feature space with exact phone/word
//! annotations and per-speaker offsets.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::eval::{Annotation, Interval, UtteranceAnnotation};
use crate::features::{write_corpus_dir, FeatureKind, FeatureSequence};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_phones: usize,
    pub feature_dim: usize,
    pub phone_mean_scale: f64,
    pub phone_noise_std: f64,
    pub min_phone_frames: usize,
    pub max_phone_frames: usize,
    pub vocab_size: usize,
    pub min_word_phones: usize,
    pub max_word_phones: usize,
    pub num_speakers: usize,
    pub speaker_offset_std: f64,
    pub num_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Linear mean ramp across each phone instead of a static mean.
    pub trajectory: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_phones: 8,
            feature_dim: 8,
            phone_mean_scale: 3.0,
            phone_noise_std: 0.5,
            min_phone_frames: 5,
            max_phone_frames: 15,
            vocab_size: 12,
            min_word_phones: 2,
            max_word_phones: 4,
            num_speakers: 3,
            speaker_offset_std: 0.8,
            num_utterances: 60,
            min_words: 3,
            max_words: 8,
            trajectory: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_phones", self.num_phones),
            ("feature_dim", self.feature_dim),
            ("min_phone_frames", self.min_phone_frames),
            ("vocab_size", self.vocab_size),
            ("min_word_phones", self.min_word_phones),
            ("num_speakers", self.num_speakers),
            ("num_utterances", self.num_utterances),
            ("min_words", self.min_words),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("synth {name} must be positive")));
        }
        let ranges = [
            ("phone frames", self.min_phone_frames, self.max_phone_frames),
            ("word phones", self.min_word_phones, self.max_word_phones),
            ("words", self.min_words, self.max_words),
        ];
        if let Some((name, lo, hi)) = ranges.iter().find(|(_, lo, hi)| lo > hi) {
            return Err(Error::Invalid(format!("synth {name} range {lo}..={hi} is empty")));
        }
        if self.phone_noise_std < 0.0 || self.speaker_offset_std < 0.0 {
            return Err(Error::Invalid("synth standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    /// `key = value` echo, one field per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_phones = {}", self.num_phones);
        let _ = writeln!(s, "feature_dim = {}", self.feature_dim);
        let _ = writeln!(s, "phone_mean_scale = {}", self.phone_mean_scale);
        let _ = writeln!(s, "phone_noise_std = {}", self.phone_noise_std);
        let _ = writeln!(s, "phone_frames = {}..{}", self.min_phone_frames, self.max_phone_frames);
        let _ = writeln!(s, "vocab_size = {}", self.vocab_size);
        let _ = writeln!(s, "word_phones = {}..{}", self.min_word_phones, self.max_word_phones);
        let _ = writeln!(s, "num_speakers = {}", self.num_speakers);
        let _ = writeln!(s, "speaker_offset_std = {}", self.speaker_offset_std);
        let _ = writeln!(s, "num_utterances = {}", self.num_utterances);
        let _ = writeln!(s, "words_per_utterance = {}..{}", self.min_words, self.max_words);
        let _ = writeln!(s, "trajectory = {}", self.trajectory);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub features: Vec<FeatureSequence>,
    pub gold: Annotation,
    pub config: SynthConfig,
}

impl SynthCorpus {
    /// Writes `features/*.matf`, `annotation.csv` and `synth.conf`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_corpus_dir(&dir.join("features"), &self.features)?;
        self.gold.write_csv(&dir.join("annotation.csv"))?;
        let conf = dir.join("synth.conf");
        fs::write(&conf, self.config.to_text()).map_err(|e| Error::io(&conf, e))
    }
}

fn normal_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

pub fn phone_symbol(p: usize) -> String {
    format!("p{p}")
}

/// Generates a corpus; independent random streams feed prototypes, speakers,
/// vocabulary, utterance structure and frame noise so that changing one
/// scale parameter leaves the other draws untouched.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let dim = cfg.feature_dim;
    let mut proto_rng = seed::rng(seed::derive(cfg.seed, &[1]));
    let means: Vec<Array1<f64>> = (0..cfg.num_phones)
        .map(|_| normal_vec(&mut proto_rng, dim, cfg.phone_mean_scale))
        .collect();
    let slopes: Vec<Array1<f64>> = (0..cfg.num_phones)
        .map(|_| normal_vec(&mut proto_rng, dim, cfg.phone_mean_scale / 3.0))
        .collect();

    let mut spk_rng = seed::rng(seed::derive(cfg.seed, &[2]));
    let offsets: Vec<Array1<f64>> = (0..cfg.num_speakers)
        .map(|_| normal_vec(&mut spk_rng, dim, cfg.speaker_offset_std))
        .collect();

    let mut vocab_rng = seed::rng(seed::derive(cfg.seed, &[3]));
    let mut vocab: Vec<Vec<usize>> = Vec::with_capacity(cfg.vocab_size);
    let mut attempts = 0;
    while vocab.len() < cfg.vocab_size {
        let len = vocab_rng.random_range(cfg.min_word_phones..=cfg.max_word_phones);
        let word: Vec<usize> = (0..len).map(|_| vocab_rng.random_range(0..cfg.num_phones)).collect();
        attempts += 1;
        // distinct words while the phone inventory allows it
        if !vocab.contains(&word) || attempts > 100 * cfg.vocab_size {
            vocab.push(word);
        }
    }

    let mut utt_rng = seed::rng(seed::derive(cfg.seed, &[4]));
    let mut noise_rng = seed::rng(seed::derive(cfg.seed, &[5]));
    let mut features = Vec::with_capacity(cfg.num_utterances);
    let mut utts = Vec::with_capacity(cfg.num_utterances);
    for u in 0..cfg.num_utterances {
        let utterance_id = format!("utt{u:04}");
        let spk = u % cfg.num_speakers;
        let speaker_id = format!("spk{spk:02}");
        let n_words = utt_rng.random_range(cfg.min_words..=cfg.max_words);
        let mut phones = Vec::new();
        let mut words = Vec::new();
        let mut pos = 0;
        for _ in 0..n_words {
            let w = utt_rng.random_range(0..vocab.len());
            let word_start = pos;
            for &p in &vocab[w] {
                let dur = utt_rng.random_range(cfg.min_phone_frames..=cfg.max_phone_frames);
                phones.push(Interval::new(pos, pos + dur, phone_symbol(p)));
                pos += dur;
            }
            words.push(Interval::new(word_start, pos, format!("w{w}")));
        }

        let mut frames = Array2::zeros((pos, dim));
        let mut phone_ids = Vec::with_capacity(phones.len());
        for w in &words {
            let idx: usize = w.symbol[1..].parse().expect("generated word symbol");
            phone_ids.extend_from_slice(&vocab[idx]);
        }
        for (seg, &p) in phones.iter().zip(&phone_ids) {
            let dur = seg.len();
            for (i, t) in (seg.start..seg.end).enumerate() {
                let mut mean = &means[p] + &offsets[spk];
                if cfg.trajectory && dur > 1 {
                    let r = 2.0 * i as f64 / (dur - 1) as f64 - 1.0;
                    mean = mean + &slopes[p] * r;
                }
                let noise = normal_vec(&mut noise_rng, dim, cfg.phone_noise_std);
                frames.row_mut(t).assign(&(mean + noise));
            }
        }
        features.push(FeatureSequence::new(
            utterance_id.clone(),
            speaker_id.clone(),
            frames,
            10,
            FeatureKind::Mfcc,
        )?);
        utts.push(UtteranceAnnotation {
            utterance_id,
            speaker_id,
            phones,
            words,
        });
    }
    Ok(SynthCorpus {
        features,
        gold: Annotation::new(utts)?,
        config: cfg.clone(),
    })
}
