//! MATF feature files.
//!
//! Layout (little-endian): `"MATF"`, version `u32`, utterance id (`u32`
//! length + bytes), speaker id (`u32` length + bytes), `T`, `D`,
//! frame shift in ms (all `u32`), then `T * D` row-major `f32` values.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{FeatureKind, FeatureSequence};
use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

pub const MATF_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MATF";

pub fn write_matf<W: Write>(f: &FeatureSequence, out: W) -> std::io::Result<()> {
    let mut w = LeWriter::new(out);
    w.bytes(MAGIC)?;
    w.u32(MATF_VERSION as usize)?;
    w.string(&f.utterance_id)?;
    w.string(&f.speaker_id)?;
    w.u32(f.num_frames())?;
    w.u32(f.dim())?;
    w.u32(f.frame_shift_ms as usize)?;
    for &v in f.frames().iter() {
        w.f32(v)?;
    }
    w.finish().map(|_| ())
}

/// Reads one MATF stream; the kind is not stored on disk and is supplied by
/// the caller.
pub fn read_matf<R: Read>(input: R, kind: FeatureKind) -> Result<FeatureSequence> {
    let mut r = LeReader::new(input, "MATF");
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != MATF_VERSION {
        return Err(Error::format("MATF", format!("unsupported version {version}")));
    }
    let utterance_id = r.string("utterance id")?;
    let speaker_id = r.string("speaker id")?;
    let t_len = r.usize("T")?;
    let dim = r.usize("D")?;
    let shift = r.u32("frame shift")?;
    let total = t_len
        .checked_mul(dim)
        .filter(|&n| n <= 1 << 31)
        .ok_or_else(|| Error::format("MATF", format!("implausible shape {t_len}x{dim}")))?;
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(r.f32("frame data")? as f64);
    }
    r.expect_eof()?;
    let frames = Array2::from_shape_vec((t_len, dim), values).expect("length checked");
    FeatureSequence::new(utterance_id, speaker_id, frames, shift, kind)
}

/// Writes `<dir>/<utterance_id>.matf` for every sequence.
pub fn write_corpus_dir(dir: &Path, corpus: &[FeatureSequence]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in corpus {
        let path = dir.join(format!("{}.matf", f.utterance_id));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_matf(f, BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every `*.matf` in `dir`, sorted by utterance id.
pub fn read_corpus_dir(dir: &Path, kind: FeatureKind) -> Result<Vec<FeatureSequence>> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "matf"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let file = File::open(&p).map_err(|e| Error::io(&p, e))?;
        out.push(read_matf(BufReader::new(file), kind)?);
    }
    out.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    if let Some(w) = out.windows(2).find(|w| w[0].utterance_id == w[1].utterance_id) {
        return Err(Error::Invalid(format!("duplicate utterance {}", w[0].utterance_id)));
    }
    Ok(out)
}
