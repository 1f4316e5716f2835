use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use matdnn::eval::{
    abx_error, abx_items, grouping_scores, ned_and_coverage, parsing_scores, AbxMode, AbxOptions, Annotation,
    DiscoveredClusters,
};
use matdnn::features::{compute_mfcc, read_corpus_dir, read_wav, write_corpus_dir, FeatureKind, MfccConfig};
use matdnn::granularity::{train_grid, LayerGrid, LayerSet};
use matdnn::mdnn::{extract_bnf, frame_targets, train_corpus, Activation, Mdnn};
use matdnn::pipeline::{mdnn_inputs, run_pipeline, validate_run, MdnnSettings, PipelineConfig};
use matdnn::reinforcement::{reinforce, LdaOptions, ReinforceOptions};
use matdnn::synth::{generate_corpus, SynthConfig};
use matdnn::tokenizer::{read_labels_csv, TokenLabeling, TrainOptions};

#[derive(Parser)]
#[command(name = "matdnn", version, about = "Unsupervised acoustic unit discovery")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus (features, annotation, config echo).
    Synth(SynthArgs),
    /// MFCC features for a directory of WAV files.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV `utterance_id,speaker_id`; otherwise the file stem up to the
        /// first `_` is the speaker.
        #[arg(long)]
        speakers: Option<PathBuf>,
    },
    /// Train a tokenizer grid.
    Tokenize {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Directory of `m{m}_n{n}.csv` initial labels (as written by
        /// `reinforce` under `init/`).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One mutual-reinforcement round over a trained grid.
    Reinforce {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        layers: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the multi-target network on a grid's frame labels.
    TrainMdnn {
        #[command(flatten)]
        input: NetInputArgs,
        #[arg(long)]
        layers: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        learn_rate: f64,
        /// 256-dim bottleneck instead of 39.
        #[arg(long)]
        wide: bool,
        #[arg(long, value_enum, default_value_t = Act::Logistic)]
        activation: Act,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Bottleneck features from a trained network.
    ExtractBnf {
        #[command(flatten)]
        input: NetInputArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ABX error of a feature directory.
    EvalAbx {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_triples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Track-2 scores of token label files.
    EvalStd {
        /// Label CSVs, or directories searched for `labels.csv`.
        #[arg(required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long, default_value_t = 2)]
        tol: usize,
    },
    /// Run the full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue a run, skipping finished stages.
        #[arg(long)]
        resume: bool,
    },
    /// Re-parse every artifact of a run directory.
    Validate { run: PathBuf },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    phones: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    #[arg(long, default_value_t = 0.8)]
    speaker_offset: f64,
    #[arg(long, default_value_t = 60)]
    utterances: usize,
    #[arg(long)]
    trajectory: bool,
}

#[derive(Args)]
struct GridArgs {
    /// States per token, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 5])]
    m: Vec<usize>,
    /// Tokens per layer, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
    n: Vec<usize>,
}

impl GridArgs {
    fn grid(&self) -> Result<LayerGrid> {
        Ok(LayerGrid::new(self.m.clone(), self.n.clone())?)
    }
}

#[derive(Args)]
struct NetInputArgs {
    /// Initial features.
    #[arg(long)]
    features: PathBuf,
    /// Bottleneck features of the previous iteration.
    #[arg(long)]
    prev_bnf: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    context: usize,
}

impl NetInputArgs {
    fn load(&self) -> Result<Vec<matdnn::features::FeatureSequence>> {
        let initial = read_corpus_dir(&self.features, FeatureKind::Mfcc)?;
        let prev = match &self.prev_bnf {
            Some(p) => Some(read_corpus_dir(p, FeatureKind::Bottleneck)?),
            None => None,
        };
        Ok(mdnn_inputs(&initial, prev.as_deref(), self.context)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Act {
    Logistic,
    Tanh,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.cmd {
        Cmd::Synth(a) => {
            let cfg = SynthConfig {
                num_phones: a.phones,
                feature_dim: a.dim,
                phone_noise_std: a.noise,
                num_speakers: a.speakers,
                speaker_offset_std: a.speaker_offset,
                num_utterances: a.utterances,
                trajectory: a.trajectory,
                seed: a.seed,
                ..SynthConfig::default()
            };
            let corpus = generate_corpus(&cfg)?;
            corpus.write_dir(&a.out)?;
            println!("{} utterances written to {}", corpus.features.len(), a.out.display());
        }
        Cmd::Features { wav, out, speakers } => features(&wav, &out, speakers.as_deref())?,
        Cmd::Tokenize {
            features,
            out,
            grid,
            init,
            max_iters,
            seed,
        } => {
            let corpus = read_corpus_dir(&features, FeatureKind::Mfcc)?;
            let grid = grid.grid()?;
            let initial = match init {
                Some(dir) => {
                    let mut m = BTreeMap::new();
                    for psi in grid.pairs() {
                        m.insert(psi, read_labels_csv(&dir.join(format!("{psi}.csv")))?);
                    }
                    Some(m)
                }
                None => None,
            };
            let opts = TrainOptions {
                max_iters,
                seed,
                ..TrainOptions::default()
            };
            let set = train_grid(&corpus, &grid, &opts, initial.as_ref())?;
            set.save(&out)?;
            for (psi, layer) in &set.layers {
                println!(
                    "{psi}: {} segments after {} iterations",
                    layer.labeling.num_segments(),
                    layer.report.iterations
                );
            }
        }
        Cmd::Reinforce {
            features,
            layers,
            out,
            grid,
            seed,
        } => {
            let corpus = read_corpus_dir(&features, FeatureKind::Mfcc)?;
            let grid = grid.grid()?;
            let set = LayerSet::load(&layers, &grid, &corpus)?;
            let opts = ReinforceOptions {
                lda: LdaOptions {
                    seed,
                    ..LdaOptions::default()
                },
                ..ReinforceOptions::default()
            };
            let mr = reinforce(&set, &corpus, &grid, &opts)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            mr.save(&out)?;
            println!("{} segment documents; initial labels in {}", mr.documents.len(), out.join("init").display());
        }
        Cmd::TrainMdnn {
            input,
            layers,
            grid,
            out,
            epochs,
            learn_rate,
            wide,
            activation,
            seed,
        } => {
            let inputs = input.load()?;
            let initial = read_corpus_dir(&input.features, FeatureKind::Mfcc)?;
            let mat_input = match &input.prev_bnf {
                Some(p) => read_corpus_dir(p, FeatureKind::Bottleneck)?,
                None => initial,
            };
            let set = LayerSet::load(&layers, &grid.grid()?, &mat_input)?;
            let targets = frame_targets(&set)?;
            let settings = MdnnSettings {
                context: input.context,
                bottleneck: if wide { 256 } else { 39 },
                activation: match activation {
                    Act::Logistic => Activation::Logistic,
                    Act::Tanh => Activation::Tanh,
                },
                learn_rate,
                epochs,
                ..MdnnSettings::default()
            };
            let cfg = settings.config(inputs[0].dim(), targets.heads.clone(), seed);
            let trained = train_corpus(&inputs, &targets, &cfg)?;
            trained.net.save(&out)?;
            let first = trained.loss_trace.first().copied().unwrap_or(f64::NAN);
            let last = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
            println!("loss {first:.4} -> {last:.4}; model written to {}", out.display());
        }
        Cmd::ExtractBnf { input, model, out } => {
            let inputs = input.load()?;
            let net = Mdnn::load(&model)?;
            let bnf = inputs
                .par_iter()
                .map(|f| extract_bnf(&net, f))
                .collect::<matdnn::Result<Vec<_>>>()?;
            write_corpus_dir(&out, &bnf)?;
            println!("{} utterances of {}-dim features", bnf.len(), net.bottleneck_dim());
        }
        Cmd::EvalAbx {
            features,
            annotation,
            max_triples,
            seed,
        } => {
            let feats = read_corpus_dir(&features, FeatureKind::Mfcc)?;
            let gold = Annotation::read_csv(&annotation)?;
            let items = abx_items(&gold);
            let opts = AbxOptions { max_triples, seed };
            for mode in [AbxMode::Within, AbxMode::Across] {
                match abx_error(&feats, &items, mode, &opts) {
                    Ok(r) => println!(
                        "{mode}: {:.2}% over {} triples ({} cells, {} skipped)",
                        r.error, r.triples, r.cells, r.skipped_cells
                    ),
                    Err(matdnn::Error::Invalid(msg)) => println!("{mode}: n/a ({msg})"),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Cmd::EvalStd {
            labels,
            annotation,
            tol,
        } => {
            let gold = Annotation::read_csv(&annotation)?;
            println!("labels,NED,Cov.,Grouping F,Type F,Token F,Boundary F");
            for path in label_files(&labels)? {
                let labeling: TokenLabeling = read_labels_csv(&path)?;
                let clusters = DiscoveredClusters::from_labeling(&labeling);
                let nc = ned_and_coverage(&clusters, &gold)?;
                let g = grouping_scores(&clusters, &gold, tol)?;
                let p = parsing_scores(&clusters, &gold, tol)?;
                println!(
                    "{},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
                    path.display(),
                    nc.ned.map(|v| format!("{v:.2}")).unwrap_or_default(),
                    nc.coverage,
                    100.0 * g.scores.f,
                    100.0 * p.type_.f,
                    100.0 * p.token.f,
                    100.0 * p.boundary.f
                );
            }
        }
        Cmd::Run { config, out, resume } => {
            let cfg = PipelineConfig::from_file(&config)?;
            let report = run_pipeline(&cfg, &out, resume)?;
            print!("{}", report.summary());
        }
        Cmd::Validate { run } => {
            let r = validate_run(&run)?;
            println!("{} files checked; complete stages: {}", r.files, r.stages.join(", "));
        }
    }
    Ok(())
}

fn features(wav_dir: &Path, out: &Path, speakers: Option<&Path>) -> Result<()> {
    let speaker_of: BTreeMap<String, String> = match speakers {
        Some(p) => {
            let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(p)?;
            let mut m = BTreeMap::new();
            for rec in r.records() {
                let rec = rec?;
                if let (Some(u), Some(s)) = (rec.get(0), rec.get(1)) {
                    m.insert(u.to_string(), s.to_string());
                }
            }
            m
        }
        None => BTreeMap::new(),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(wav_dir)
        .with_context(|| format!("reading {}", wav_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .wav files in {}", wav_dir.display());
    }
    let cfg = MfccConfig::default();
    let feats = paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let spk = speaker_of
                .get(&id)
                .cloned()
                .unwrap_or_else(|| id.split('_').next().unwrap_or(&id).to_string());
            compute_mfcc(&read_wav(p, &id, &spk)?, &cfg)
        })
        .collect::<matdnn::Result<Vec<_>>>()?;
    write_corpus_dir(out, &feats)?;
    println!("{} utterances of {}-dim MFCC", feats.len(), cfg.output_dim());
    Ok(())
}

fn label_files(args: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for a in args {
        if a.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(a)?
                .filter_map(|e| e.ok().map(|e| e.path().join("labels.csv")))
                .filter(|p| p.is_file())
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no */labels.csv under {}", a.display());
            }
            out.extend(found);
        } else {
            out.push(a.clone());
        }
    }
    Ok(out)
}
