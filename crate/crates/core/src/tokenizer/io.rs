//! Label CSVs and MATM model dumps.
//!
//! MATM layout (little-endian): `"MATM"`, version, `m`, `n`, `D` as `u32`;
//! then for every token in id order its unigram probability followed by,
//! per state, the self-loop probability, `D` means and `D` variances; and a
//! trailing LM weight. All reals are `f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::hmm::{Gaussian, TokenHmm, TokenSetModel};
use super::{HyperParams, Segment, TokenLabeling, UtteranceLabels};
use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

pub const MATM_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MATM";

/// Writes `utterance_id,start_frame,end_frame,token_id` rows (with header).
pub fn write_labels_csv(labeling: &TokenLabeling, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["utterance_id", "start_frame", "end_frame", "token_id"])?;
    for u in &labeling.utterances {
        for s in &u.segments {
            w.write_record([
                u.utterance_id.as_str(),
                &s.start.to_string(),
                &s.end.to_string(),
                &s.token.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a label CSV; utterances come back sorted by id, segments by start.
pub fn read_labels_csv(path: &Path) -> Result<TokenLabeling> {
    let mut r = csv::Reader::from_path(path)?;
    let mut by_utt: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<usize> {
            rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| {
                Error::format("label CSV", format!("{}: row {} field {i} is not an index", path.display(), row + 2))
            })
        };
        let seg = Segment {
            start: num(1)?,
            end: num(2)?,
            token: num(3)?,
        };
        by_utt.entry(rec.get(0).unwrap_or("").to_string()).or_default().push(seg);
    }
    let utterances = by_utt
        .into_iter()
        .map(|(utterance_id, mut segments)| {
            segments.sort_by_key(|s| s.start);
            UtteranceLabels {
                utterance_id,
                segments,
            }
        })
        .collect();
    Ok(TokenLabeling { utterances })
}

pub fn write_matm<W: Write>(model: &TokenSetModel, out: W) -> std::io::Result<()> {
    let mut w = LeWriter::new(out);
    w.bytes(MAGIC)?;
    w.u32(MATM_VERSION as usize)?;
    w.u32(model.psi.m)?;
    w.u32(model.psi.n)?;
    w.u32(model.feature_dim)?;
    for (hmm, &p) in model.hmms.iter().zip(&model.token_lm) {
        w.f64(p)?;
        for (g, &a) in hmm.states.iter().zip(&hmm.self_loop) {
            w.f64(a)?;
            for &v in g.mean() {
                w.f64(v)?;
            }
            for &v in g.var() {
                w.f64(v)?;
            }
        }
    }
    w.f64(model.lm_weight)?;
    w.finish().map(|_| ())
}

pub fn read_matm<R: Read>(input: R) -> Result<TokenSetModel> {
    let mut r = LeReader::new(input, "MATM");
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != MATM_VERSION {
        return Err(Error::format("MATM", format!("unsupported version {version}")));
    }
    let m = r.usize("m")?;
    let n = r.usize("n")?;
    let dim = r.usize("D")?;
    let psi = HyperParams::new(m, n).map_err(|e| Error::format("MATM", e.to_string()))?;
    if dim == 0 || m * n * dim > 1 << 28 {
        return Err(Error::format("MATM", format!("implausible shape m={m} n={n} D={dim}")));
    }
    let mut hmms = Vec::with_capacity(n);
    let mut token_lm = Vec::with_capacity(n);
    for k in 0..n {
        token_lm.push(r.f64("token prior")?);
        let mut states = Vec::with_capacity(m);
        let mut self_loop = Vec::with_capacity(m);
        for _ in 0..m {
            self_loop.push(r.f64("self-loop")?);
            let mean = (0..dim).map(|_| r.f64("mean")).collect::<Result<Vec<_>>>()?;
            let var = (0..dim).map(|_| r.f64("variance")).collect::<Result<Vec<_>>>()?;
            if var.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::format("MATM", format!("token {k} has a non-positive variance")));
            }
            states.push(Gaussian::new(mean, var));
        }
        hmms.push(TokenHmm {
            token_id: k,
            states,
            self_loop,
        });
    }
    let lm_weight = r.f64("lm weight")?;
    r.expect_eof()?;
    let sum: f64 = token_lm.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::format("MATM", format!("token priors sum to {sum}")));
    }
    Ok(TokenSetModel {
        psi,
        hmms,
        token_lm,
        feature_dim: dim,
        lm_weight,
    })
}

impl TokenSetModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_matm(self, BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_matm(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TokenSetModel {
        let psi = HyperParams::new(2, 2).unwrap();
        let hmms = (0..2)
            .map(|k| TokenHmm {
                token_id: k,
                states: vec![
                    Gaussian::new(vec![k as f64, 0.25], vec![1.0, 0.5]),
                    Gaussian::new(vec![-1.0, 3.0], vec![0.1, 2.0]),
                ],
                self_loop: vec![0.3, 0.7],
            })
            .collect();
        TokenSetModel {
            psi,
            hmms,
            token_lm: vec![0.25, 0.75],
            feature_dim: 2,
            lm_weight: 1.0,
        }
    }

    #[test]
    fn matm_roundtrip_and_header() {
        let m = model();
        let mut buf = Vec::new();
        write_matm(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MATM");
        let head: Vec<u32> = (0..4)
            .map(|i| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()))
            .collect();
        assert_eq!(head, vec![1, 2, 2, 2]);
        assert_eq!(read_matm(&buf[..]).unwrap(), m);
        assert!(read_matm(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn labels_csv_roundtrip() {
        let l = TokenLabeling {
            utterances: vec![
                UtteranceLabels {
                    utterance_id: "a".into(),
                    segments: vec![
                        Segment { token: 1, start: 0, end: 4 },
                        Segment { token: 0, start: 4, end: 9 },
                    ],
                },
                UtteranceLabels {
                    utterance_id: "b".into(),
                    segments: vec![Segment { token: 3, start: 0, end: 2 }],
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        write_labels_csv(&l, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("utterance_id,start_frame,end_frame,token_id\na,0,4,1\n"));
        assert_eq!(read_labels_csv(&p).unwrap(), l);
    }
}
