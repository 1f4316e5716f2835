//! Little-endian helpers shared by the binary artifact formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct LeReader<R> {
    inner: R,
    format: &'static str,
}

impl<R: Read> LeReader<R> {
    pub fn new(inner: R, format: &'static str) -> Self {
        Self { inner, format }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::format(self.format, format!("truncated while reading {what}: {e}")))
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf, "magic")?;
        if &buf != expected {
            return Err(Error::format(self.format, format!("bad magic {buf:?}")));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        self.u32(what).map(|v| v as usize)
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf, what)?;
        Ok(f32::from_le_bytes(buf))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf, what)?;
        Ok(f64::from_le_bytes(buf))
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.usize(what)?;
        if len > 1 << 20 {
            return Err(Error::format(self.format, format!("{what} length {len} is implausible")));
        }
        let mut buf = vec![0u8; len];
        self.fill(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::format(self.format, format!("{what} is not utf-8")))
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.format, "trailing bytes after payload")),
            Err(e) => Err(Error::format(self.format, e.to_string())),
        }
    }
}

pub(crate) struct LeWriter<W> {
    inner: W,
}

impl<W: Write> LeWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u32(&mut self, v: usize) -> std::io::Result<()> {
        let v = u32::try_from(v).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "value exceeds u32")
        })?;
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f32(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&(v as f32).to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn string(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len())?;
        self.inner.write_all(s.as_bytes())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
