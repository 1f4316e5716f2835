use std::fs;
use std::path::{Path, PathBuf};

use super::{Manifest, PipelineConfig, RunLayout};
use crate::error::{Error, Result};
use crate::features::{read_corpus_dir, FeatureKind, FeatureSequence};
use crate::granularity::{corpus_fingerprint, LayerSet};
use crate::mdnn::Mdnn;
use crate::tokenizer::read_labels_csv;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Stages found complete and checked.
    pub stages: Vec<String>,
    pub files: usize,
}

/// Re-parses every artifact of a run directory and checks that they fit
/// together: config hash, corpus fingerprint, layer sets, MR outputs,
/// networks, bottleneck features and reports.
pub fn validate_run(root: &Path) -> Result<ValidationReport> {
    let layout = RunLayout::new(root);
    let mut report = ValidationReport::default();
    let manifest = Manifest::load(&need(layout.manifest())?)?;
    let config_path = need(layout.config())?;
    let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let cfg = PipelineConfig::parse(&text, Path::new(""))?;
    if cfg.hash() != manifest.config_hash {
        return Err(Error::Invalid(format!(
            "{} does not hash to the manifest's config hash",
            config_path.display()
        )));
    }
    report.files += 2;
    if !manifest.is_done("features") {
        return Ok(report);
    }

    let initial = read_corpus_dir(&need(layout.features())?, FeatureKind::Mfcc)?;
    report.files += initial.len();
    if manifest.corpus.as_deref() != Some(corpus_fingerprint(&initial).as_str()) {
        return Err(Error::Invalid("stored features do not match the manifest fingerprint".into()));
    }
    report.stages.push("features".into());

    let mut prev_bnf: Option<Vec<FeatureSequence>> = None;
    for k in 1..=cfg.iterations {
        let mat_input = prev_bnf.as_deref().unwrap_or(&initial);
        for round in 0..=cfg.mr_rounds {
            let stage = format!("iter{k}/round{round}");
            if !manifest.is_done(&stage) {
                return Ok(report);
            }
            let dir = layout.layers(k, round);
            let layers = LayerSet::load(&dir, &cfg.grid, mat_input)?;
            report.files += 1 + 2 * layers.layers.len();
            if round > 0 {
                report.files += check_csv(&dir.join("fused.csv"), &["utterance_id", "juncture", "B"])?;
                report.files += check_csv(
                    &dir.join("documents.csv"),
                    &["utterance_id", "start", "end", "word_id", "count"],
                )?;
                for psi in cfg.grid.pairs() {
                    let path = need(dir.join("init").join(format!("{psi}.csv")))?;
                    read_labels_csv(&path)?.validate(mat_input, psi)?;
                    report.files += 1;
                }
            }
            report.stages.push(stage);
        }

        let stage = format!("iter{k}/mdnn");
        if !manifest.is_done(&stage) {
            return Ok(report);
        }
        let net = Mdnn::load(&need(layout.mdnn(k))?)?;
        let expected_heads: Vec<usize> = cfg.grid.pairs().iter().map(|p| p.n).collect();
        if net.heads != expected_heads {
            return Err(Error::Invalid(format!(
                "{} has heads {:?}, the grid implies {:?}",
                layout.mdnn(k).display(),
                net.heads,
                expected_heads
            )));
        }
        report.files += 1 + check_csv(&layout.mdnn_loss(k), &["epoch", "loss"])?;
        report.stages.push(stage);

        let stage = format!("iter{k}/bnf");
        if !manifest.is_done(&stage) {
            return Ok(report);
        }
        let bnf = read_corpus_dir(&need(layout.bnf(k))?, FeatureKind::Bottleneck)?;
        if bnf.len() != initial.len() {
            return Err(Error::Invalid(format!("{} is incomplete", layout.bnf(k).display())));
        }
        for (b, f) in bnf.iter().zip(&initial) {
            if b.utterance_id != f.utterance_id || b.num_frames() != f.num_frames() || b.dim() != net.bottleneck_dim()
            {
                return Err(Error::Utterance {
                    utterance_id: b.utterance_id.clone(),
                    detail: format!("bottleneck features in {} do not fit the run", layout.bnf(k).display()),
                });
            }
        }
        report.files += bnf.len();
        report.stages.push(stage);
        prev_bnf = Some(bnf);
    }

    if manifest.is_done("reports") {
        let dir = layout.reports();
        report.files += check_csv(
            &dir.join("abx.csv"),
            &["system", "within", "across", "within_triples", "across_triples"],
        )?;
        report.files += check_csv(&dir.join("track2.csv"), &["iteration", "m", "n", "NED", "Cov."])?;
        need(dir.join("summary.txt"))?;
        report.files += 1;
        report.stages.push("reports".into());
    }
    Ok(report)
}

fn need(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Missing(path))
    }
}

/// Checks the leading header fields and that every other field after the
/// first column is empty or numeric. Returns 1 for the file counted.
fn check_csv(path: &Path, header: &[&str]) -> Result<usize> {
    let path = need(path.to_path_buf())?;
    let mut r = csv::Reader::from_path(&path)?;
    let head = r.headers()?.clone();
    if head.len() < header.len() || header.iter().zip(head.iter()).any(|(a, b)| *a != b) {
        return Err(Error::format("report CSV", format!("{}: unexpected header", path.display())));
    }
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let numeric_from = usize::from(header[0] == "utterance_id" || header[0] == "system");
        for v in rec.iter().skip(numeric_from) {
            if !v.is_empty() && v.parse::<f64>().is_err() {
                return Err(Error::format(
                    "report CSV",
                    format!("{}: row {} holds `{v}`", path.display(), row + 2),
                ));
            }
        }
    }
    Ok(1)
}
