use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use matdnn::features::{read_corpus_dir, FeatureKind};
use matdnn::granularity::{LayerGrid, LayerSet};
use matdnn::mdnn::Mdnn;
use matdnn::pipeline::*;
use matdnn::synth::{generate_corpus, SynthConfig};
use tempfile::TempDir;

fn corpus_dir(seed: u64) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&SynthConfig { num_utterances: 12, seed, ..SynthConfig::default() })
        .unwrap()
        .write_dir(dir.path())
        .unwrap();
    dir
}

fn small_config(corpus: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(corpus.join("features"));
    cfg.annotation = Some(corpus.join("annotation.csv"));
    cfg.grid = LayerGrid::new(vec![3], vec![4, 6]).unwrap();
    cfg.iterations = 2;
    cfg.mr_rounds = 1;
    cfg.tokenizer.max_iters = 3;
    cfg.reinforce.lda.iters = 20;
    cfg.mdnn.hidden = vec![24];
    cfg.mdnn.bottleneck = 6;
    cfg.mdnn.context = 1;
    cfg.mdnn.epochs = 2;
    cfg.eval.abx_max_triples = 5;
    cfg
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn single_iteration_without_reinforcement() {
    let corpus = corpus_dir(1);
    let run = tempfile::tempdir().unwrap();
    let mut cfg = small_config(corpus.path());
    cfg.iterations = 1;
    cfg.mr_rounds = 0;
    let report = run_pipeline(&cfg, run.path(), false).unwrap();
    let layout = Pipeline::open(&cfg, run.path(), true).unwrap().layout;
    assert!(layout.layers(1, 0).is_dir());
    assert!(!layout.layers(1, 1).exists());
    assert!(layout.bnf(1).is_dir());
    assert!(!layout.bnf(2).exists());
    assert!(!layout.mdnn(2).exists());
    assert_eq!(report.track2.len(), 2);
    assert!(report.abx_for("bnf-iter1").is_some());
    let v = validate_run(run.path()).unwrap();
    assert!(v.files > 0);
}

#[test]
fn second_iteration_tokenizes_bottleneck_features() {
    let corpus = corpus_dir(2);
    let run = tempfile::tempdir().unwrap();
    let cfg = small_config(corpus.path());
    let mut p = Pipeline::open(&cfg, run.path(), false).unwrap();
    let initial = p.features().unwrap();
    let first = p.run_iteration(1, &initial, None).unwrap();
    let second = p.run_iteration(2, &initial, Some(&first.bnf)).unwrap();
    for layer in second.layers.layers.values() {
        assert_eq!(layer.model.feature_dim, 6);
    }
    for layer in first.layers.layers.values() {
        assert_eq!(layer.model.feature_dim, initial[0].dim());
    }
    let d = initial[0].dim();
    assert_eq!(first.net.input_dim(), 3 * d + 2 * d);
    assert_eq!(second.net.input_dim(), 3 * d + 3 * 6 + 2 * d);
    assert_eq!(second.net.heads, vec![4, 6]);
    assert!(second.bnf.iter().all(|f| f.dim() == 6));
    let bnf1 = read_corpus_dir(&p.layout.bnf(1), FeatureKind::Bottleneck).unwrap();
    assert!(LayerSet::load(&p.layout.layers(2, 1), &cfg.grid, &bnf1).is_ok());
    assert!(LayerSet::load(&p.layout.layers(2, 1), &cfg.grid, &initial).is_err());
    assert_eq!(Mdnn::load(&p.layout.mdnn(2)).unwrap(), second.net);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let corpus = corpus_dir(3);
    let cfg = small_config(corpus.path());
    let full = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, full.path(), false).unwrap();

    let partial = tempfile::tempdir().unwrap();
    {
        let mut p = Pipeline::open(&cfg, partial.path(), false).unwrap();
        let initial = p.features().unwrap();
        p.run_iteration(1, &initial, None).unwrap();
        assert!(p.manifest().is_done("iter1/bnf"));
        assert!(!p.manifest().is_done("iter2/round0"));
    }
    assert!(run_pipeline(&cfg, partial.path(), false).is_err());
    run_pipeline(&cfg, partial.path(), true).unwrap();
    assert_eq!(tree(full.path()), tree(partial.path()));

    let before = tree(full.path());
    run_pipeline(&cfg, full.path(), true).unwrap();
    assert_eq!(before, tree(full.path()));
}

#[test]
fn changed_config_is_refused() {
    let corpus = corpus_dir(4);
    let mut cfg = small_config(corpus.path());
    cfg.iterations = 1;
    let run = tempfile::tempdir().unwrap();
    Pipeline::open(&cfg, run.path(), false).unwrap();
    let mut other = cfg.clone();
    other.seed = 9;
    let err = Pipeline::open(&other, run.path(), true).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");
    assert!(Pipeline::open(&cfg, run.path(), true).is_ok());
}

#[test]
fn config_text_round_trips() {
    let corpus = corpus_dir(5);
    let cfg = small_config(corpus.path());
    let back = PipelineConfig::parse(&cfg.to_text(), Path::new("")).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn validation_catches_damage() {
    let corpus = corpus_dir(6);
    let mut cfg = small_config(corpus.path());
    cfg.iterations = 1;
    let run = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, run.path(), false).unwrap();
    validate_run(run.path()).unwrap();
    let layout = RunLayout::new(run.path());
    let bytes = fs::read(layout.mdnn(1)).unwrap();
    fs::write(layout.mdnn(1), &bytes[..bytes.len() / 2]).unwrap();
    assert!(validate_run(run.path()).is_err());
}
