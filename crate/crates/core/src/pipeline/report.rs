use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{IterationOutput, PipelineConfig, TAG_ABX};
use crate::error::{Error, Result};
use crate::eval::{
    abx_error, abx_items, grouping_scores, ned_and_coverage, parsing_scores, AbxItem, AbxMode, AbxOptions, AbxResult,
    Annotation, DiscoveredClusters, Grouping, NedCoverage, ParsingScores, Prf,
};
use crate::features::{stack_context, FeatureSequence};
use crate::seed;
use crate::tokenizer::HyperParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AbxRow {
    /// `mfcc`, `stacked` or `bnf-iter{k}`.
    pub system: String,
    /// `None` when the corpus has no cell for the mode.
    pub within: Option<AbxResult>,
    pub across: Option<AbxResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track2Row {
    pub iteration: usize,
    pub psi: HyperParams,
    pub ned: NedCoverage,
    pub grouping: Grouping,
    pub parsing: ParsingScores,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub abx: Vec<AbxRow>,
    pub track2: Vec<Track2Row>,
}

/// Within- and across-speaker ABX on one feature set; a mode without any
/// usable cell yields `None`.
pub fn abx_row(system: &str, features: &[FeatureSequence], items: &[AbxItem], opts: &AbxOptions) -> Result<AbxRow> {
    let run = |mode| match abx_error(features, items, mode, opts) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Invalid(msg)) => {
            log::warn!("{system}: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    };
    Ok(AbxRow {
        system: system.to_string(),
        within: run(AbxMode::Within)?,
        across: run(AbxMode::Across)?,
    })
}

/// ABX on the initial, stacked and bottleneck features of every iteration,
/// and Track-2 scores for every final-round layer, as enabled in `cfg`.
pub fn evaluate(
    cfg: &PipelineConfig,
    initial: &[FeatureSequence],
    iterations: &[IterationOutput],
    gold: &Annotation,
) -> Result<RunReport> {
    let mut report = RunReport::default();
    if cfg.eval.abx {
        let items = abx_items(gold);
        let opts = AbxOptions {
            max_triples: cfg.eval.abx_max_triples,
            seed: seed::derive(cfg.seed, &[TAG_ABX]),
        };
        report.abx.push(abx_row("mfcc", initial, &items, &opts)?);
        let stacked: Vec<FeatureSequence> = initial.iter().map(|f| stack_context(f, cfg.mdnn.context)).collect();
        report.abx.push(abx_row("stacked", &stacked, &items, &opts)?);
        for it in iterations {
            report.abx.push(abx_row(&format!("bnf-iter{}", it.k), &it.bnf, &items, &opts)?);
        }
    }
    if cfg.eval.track2 {
        for it in iterations {
            let rows: Vec<Result<Track2Row>> = it
                .layers
                .layers
                .par_iter()
                .map(|(&psi, layer)| {
                    let clusters = DiscoveredClusters::from_labeling(&layer.labeling);
                    Ok(Track2Row {
                        iteration: it.k,
                        psi,
                        ned: ned_and_coverage(&clusters, gold)?,
                        grouping: grouping_scores(&clusters, gold, cfg.eval.boundary_tol)?,
                        parsing: parsing_scores(&clusters, gold, cfg.eval.boundary_tol)?,
                    })
                })
                .collect();
            for r in rows {
                report.track2.push(r?);
            }
        }
    }
    Ok(report)
}

fn pct(x: f64) -> String {
    format!("{:.4}", 100.0 * x)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl RunReport {
    pub fn abx_for(&self, system: &str) -> Option<&AbxRow> {
        self.abx.iter().find(|r| r.system == system)
    }

    /// Writes `abx.csv`, `track2.csv` and `summary.txt`; every score in
    /// percent.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("abx.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["system", "within", "across", "within_triples", "across_triples"])?;
        for r in &self.abx {
            let triples = |x: &Option<AbxResult>| x.as_ref().map(|a| a.triples.to_string()).unwrap_or_default();
            w.write_record([
                r.system.clone(),
                opt(r.within.as_ref().map(|a| a.error)),
                opt(r.across.as_ref().map(|a| a.error)),
                triples(&r.within),
                triples(&r.across),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("track2.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> = ["iteration", "m", "n", "NED", "Cov."].map(String::from).to_vec();
        for metric in ["Grouping", "Type", "Token", "Boundary"] {
            header.extend(["P", "R", "F"].map(|part| format!("{metric} {part}")));
        }
        w.write_record(&header)?;
        for r in &self.track2 {
            let mut rec = vec![
                r.iteration.to_string(),
                r.psi.m.to_string(),
                r.psi.n.to_string(),
                opt(r.ned.ned),
                format!("{:.4}", r.ned.coverage),
            ];
            for s in [r.grouping.scores, r.parsing.type_, r.parsing.token, r.parsing.boundary] {
                rec.extend([pct(s.precision), pct(s.recall), pct(s.f)]);
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("summary.txt");
        fs::write(&path, self.summary()).map_err(|e| Error::io(&path, e))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        if self.abx.is_empty() && self.track2.is_empty() {
            s.push_str("no evaluation (no annotation configured)\n");
            return s;
        }
        if !self.abx.is_empty() {
            let _ = writeln!(s, "ABX error (%)\n{:<12} {:>8} {:>8}", "system", "within", "across");
            for r in &self.abx {
                let cell = |x: &Option<AbxResult>| x.as_ref().map_or("-".to_string(), |a| format!("{:.2}", a.error));
                let _ = writeln!(s, "{:<12} {:>8} {:>8}", r.system, cell(&r.within), cell(&r.across));
            }
        }
        if !self.track2.is_empty() {
            if !self.abx.is_empty() {
                s.push('\n');
            }
            let _ = writeln!(
                s,
                "Track 2 (%)\n{:<4} {:<8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                "iter", "layer", "NED", "Cov.", "Grp F", "Type F", "Tok F", "Bnd F"
            );
            for r in &self.track2 {
                let f = |p: Prf| format!("{:.1}", 100.0 * p.f);
                let _ = writeln!(
                    s,
                    "{:<4} {:<8} {:>6} {:>6.1} {:>6} {:>6} {:>6} {:>6}",
                    r.iteration,
                    format!("{},{}", r.psi.m, r.psi.n),
                    r.ned.ned.map_or("-".to_string(), |v| format!("{v:.1}")),
                    r.ned.coverage,
                    f(r.grouping.scores),
                    f(r.parsing.type_),
                    f(r.parsing.token),
                    f(r.parsing.boundary)
                );
            }
        }
        s
    }
}
