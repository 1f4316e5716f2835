//! MATN model files (little-endian): `"MATN"`, version, layer dims (count
//! then values), head class counts (count then values), bottleneck index
//! and activation code as `u32`, then every parameter as `f32`: trunk
//! layers then heads, each `W` (`fan_in x fan_out`, row-major) then `b`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Dense, Mdnn};
use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

pub const MATN_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MATN";

pub fn write_matn<W: Write>(net: &Mdnn, out: W) -> std::io::Result<()> {
    let mut w = LeWriter::new(out);
    w.bytes(MAGIC)?;
    w.u32(MATN_VERSION as usize)?;
    w.u32(net.layer_dims.len())?;
    for &d in &net.layer_dims {
        w.u32(d)?;
    }
    w.u32(net.heads.len())?;
    for &n in &net.heads {
        w.u32(n)?;
    }
    w.u32(net.bottleneck_index)?;
    w.u32(net.activation.code() as usize)?;
    for p in net.params() {
        w.f32(p)?;
    }
    w.finish().map(|_| ())
}

pub fn read_matn<R: Read>(input: R) -> Result<Mdnn> {
    let mut r = LeReader::new(input, "MATN");
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != MATN_VERSION {
        return Err(Error::format("MATN", format!("unsupported version {version}")));
    }
    let mut list = |what: &str| -> Result<Vec<usize>> {
        let count = r.usize(what)?;
        if count > 1 << 16 {
            return Err(Error::format("MATN", format!("implausible {what} count {count}")));
        }
        (0..count).map(|_| r.usize(what)).collect()
    };
    let layer_dims = list("layer dims")?;
    let heads = list("heads")?;
    let bottleneck_index = r.usize("bottleneck index")?;
    let code = r.u32("activation")?;
    let activation =
        Activation::from_code(code).ok_or_else(|| Error::format("MATN", format!("unknown activation {code}")))?;
    if layer_dims.len() < 2 || layer_dims.contains(&0) || heads.is_empty() || heads.contains(&0) {
        return Err(Error::format("MATN", format!("bad shape: dims {layer_dims:?}, heads {heads:?}")));
    }
    if bottleneck_index == 0 || bottleneck_index >= layer_dims.len() {
        return Err(Error::format("MATN", format!("bottleneck index {bottleneck_index} outside trunk")));
    }
    let top = *layer_dims.last().expect("checked");
    let shapes: Vec<(usize, usize)> = layer_dims
        .windows(2)
        .map(|w| (w[0], w[1]))
        .chain(heads.iter().map(|&n| (top, n)))
        .collect();
    let total: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
    if total > 1 << 30 {
        return Err(Error::format("MATN", format!("implausible parameter count {total}")));
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for (fan_in, fan_out) in shapes {
        let mut d = Dense::zeros(fan_in, fan_out);
        for v in d.w.iter_mut().chain(d.b.iter_mut()) {
            let p = r.f32("parameters")? as f64;
            if !p.is_finite() {
                return Err(Error::format("MATN", "non-finite parameter"));
            }
            *v = p;
        }
        layers.push(d);
    }
    r.expect_eof()?;
    let head_layers = layers.split_off(layer_dims.len() - 1);
    Ok(Mdnn {
        layer_dims,
        bottleneck_index,
        heads,
        activation,
        trunk: layers,
        head_layers,
    })
}

impl Mdnn {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_matn(self, BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_matn(BufReader::new(file))
    }

    /// Rounds every parameter to `f32`, matching what a save/load cycle
    /// yields.
    pub fn to_f32_precision(&mut self) {
        self.for_each_param_mut(|p| *p = *p as f32 as f64);
    }
}
