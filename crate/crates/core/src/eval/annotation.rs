//! Gold phone/word annotations.
//!
//! CSV layout, one row per segment:
//! `utterance_id,tier,start_frame,end_frame,symbol,speaker_id` with `tier`
//! either `phone` or `word` and `end_frame` exclusive.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub symbol: String,
}

impl Interval {
    pub fn new(start: usize, end: usize, symbol: impl Into<String>) -> Self {
        Self {
            start,
            end,
            symbol: symbol.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, start: usize, end: usize) -> usize {
        self.end.min(end).saturating_sub(self.start.max(start))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceAnnotation {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phones: Vec<Interval>,
    pub words: Vec<Interval>,
}

impl UtteranceAnnotation {
    pub fn num_frames(&self) -> usize {
        self.phones.last().map_or(0, |p| p.end)
    }

    fn validate(&self) -> Result<()> {
        let bad = |detail: String| Error::Utterance {
            utterance_id: self.utterance_id.clone(),
            detail,
        };
        let mut pos = 0;
        for p in &self.phones {
            if p.start != pos || p.is_empty() {
                return Err(bad(format!(
                    "phone tier not contiguous at {}..{} (expected start {pos})",
                    p.start, p.end
                )));
            }
            pos = p.end;
        }
        let phone_edges: std::collections::BTreeSet<usize> = self
            .phones
            .iter()
            .flat_map(|p| [p.start, p.end])
            .collect();
        let mut last_end = 0;
        for w in &self.words {
            if w.is_empty() || w.start < last_end {
                return Err(bad(format!("word tier overlaps or is empty at {}..{}", w.start, w.end)));
            }
            if !phone_edges.contains(&w.start) || !phone_edges.contains(&w.end) {
                return Err(bad(format!(
                    "word {}..{} does not align to phone boundaries",
                    w.start, w.end
                )));
            }
            last_end = w.end;
        }
        Ok(())
    }
}

/// Gold annotation for a corpus, utterances sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotation {
    pub utterances: Vec<UtteranceAnnotation>,
}

impl Annotation {
    pub fn new(mut utterances: Vec<UtteranceAnnotation>) -> Result<Self> {
        utterances.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        for u in &utterances {
            u.validate()?;
        }
        if let Some(w) = utterances.windows(2).find(|w| w[0].utterance_id == w[1].utterance_id) {
            return Err(Error::Invalid(format!("duplicate utterance {}", w[0].utterance_id)));
        }
        Ok(Self { utterances })
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceAnnotation> {
        self.utterances
            .binary_search_by(|u| u.utterance_id.as_str().cmp(utterance_id))
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["utterance_id", "tier", "start_frame", "end_frame", "symbol", "speaker_id"])?;
        for u in &self.utterances {
            for (tier, ivs) in [("phone", &u.phones), ("word", &u.words)] {
                for iv in ivs {
                    w.write_record([
                        u.utterance_id.as_str(),
                        tier,
                        &iv.start.to_string(),
                        &iv.end.to_string(),
                        &iv.symbol,
                        &u.speaker_id,
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut by_utt: BTreeMap<String, UtteranceAnnotation> = BTreeMap::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| {
                field(i).parse::<usize>().map_err(|_| {
                    Error::format("annotation CSV", format!("row {}: bad frame index {:?}", line + 2, field(i)))
                })
            };
            let entry = by_utt
                .entry(field(0).to_string())
                .or_insert_with(|| UtteranceAnnotation {
                    utterance_id: field(0).to_string(),
                    speaker_id: field(5).to_string(),
                    phones: Vec::new(),
                    words: Vec::new(),
                });
            let iv = Interval::new(num(2)?, num(3)?, field(4));
            match field(1) {
                "phone" => entry.phones.push(iv),
                "word" => entry.words.push(iv),
                other => {
                    return Err(Error::format(
                        "annotation CSV",
                        format!("row {}: unknown tier {other:?}", line + 2),
                    ))
                }
            }
        }
        for u in by_utt.values_mut() {
            u.phones.sort_by_key(|p| p.start);
            u.words.sort_by_key(|p| p.start);
        }
        Self::new(by_utt.into_values().collect())
    }
}
