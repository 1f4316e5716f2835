use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// `manifest.txt`: `key = value` lines naming the config hash, the corpus
/// fingerprint and each finished stage in completion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub config_hash: String,
    pub corpus: Option<String>,
    pub done: Vec<String>,
}

impl Manifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            corpus: None,
            done: Vec::new(),
        }
    }

    pub fn is_done(&self, stage: &str) -> bool {
        self.done.iter().any(|s| s == stage)
    }

    pub fn mark(&mut self, stage: &str) {
        if !self.is_done(stage) {
            self.done.push(stage.to_string());
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut hash = None;
        let mut corpus = None;
        let mut done = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::format("manifest", format!("line {}: `{line}`", no + 1));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let v = v.trim().to_string();
            match k.trim() {
                "config_hash" => hash = Some(v),
                "corpus" => corpus = Some(v),
                "done" => done.push(v),
                _ => return Err(bad()),
            }
        }
        Ok(Self {
            config_hash: hash.ok_or_else(|| Error::format("manifest", "no config_hash line"))?,
            corpus,
            done,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("config_hash = {}\n", self.config_hash);
        if let Some(c) = &self.corpus {
            s += &format!("corpus = {c}\n");
        }
        for d in &self.done {
            s += &format!("done = {d}\n");
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Writes through a temporary file so an interrupted save leaves the
    /// previous manifest intact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_text()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}
