//! Little-endian section reader/writer shared by the dataset and checkpoint
//! formats. The reader tracks its byte offset so parse errors can point at
//! the failing section.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) struct SectionReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> SectionReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn bytes<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                Error::parse(section, self.offset, "unexpected end of file")
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    pub fn u64(&mut self, section: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>(section)?))
    }

    pub fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(section)?))
    }

    pub fn f64(&mut self, section: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>(section)?))
    }

    pub fn usize(&mut self, section: &'static str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64(section)?;
        usize::try_from(v).map_err(|_| Error::parse(section, at, format!("value {v} overflows usize")))
    }

    pub fn f64_vec(&mut self, len: usize, section: &'static str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            out.push(self.f64(section)?);
        }
        Ok(out)
    }

    /// Errors unless the stream is exhausted.
    pub fn expect_eof(&mut self, section: &'static str) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::parse(section, self.offset, "trailing bytes after last section")),
        }
    }
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64s<'a, W: Write>(w: &mut W, vals: impl IntoIterator<Item = &'a f64>) -> io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
