//! Little-endian binary record helpers shared by the file formats, plus
//! Netpbm image writers.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    pub fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 8);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    /// True when no bytes remain.
    pub fn at_end(&mut self) -> Result<bool> {
        let mut probe = [0u8; 1];
        Ok(self.inner.read(&mut probe)? == 0)
    }
}

pub fn read_exact_array<R: Read, const N: usize>(r: &mut BinReader<R>) -> Result<[u8; N]> {
    r.array()
}

/// Binary PPM (P6) from `[0,1]` RGB values.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidArgument("ppm buffer size mismatch".into()));
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P6\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = rgb
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Binary 16-bit PGM (P5) mapping `[lo, hi]` linearly onto `0..=65535`.
pub fn write_pgm16(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f64],
    lo: f64,
    hi: f64,
) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidArgument("pgm buffer size mismatch".into()));
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    let mut bytes = Vec::with_capacity(values.len() * 2);
    for v in values {
        let q = ((v.clamp(lo, hi) - lo) / (hi - lo) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Parsed Netpbm header plus raw payload, used to check exported files.
#[derive(Debug, Clone, PartialEq)]
pub struct Netpbm {
    pub kind: String,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub payload: Vec<u8>,
}

pub fn read_netpbm(path: &Path) -> Result<Netpbm> {
    let raw = std::fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        fields.push(String::from_utf8_lossy(&raw[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad netpbm field '{s}'")))
    };
    let kind = fields[0].clone();
    let width = parse(&fields[1])?;
    let height = parse(&fields[2])?;
    let maxval = parse(&fields[3])? as u32;
    let channels = match kind.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(Error::Format(format!("unsupported netpbm kind {other}"))),
    };
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let payload = raw.get(pos..).unwrap_or_default().to_vec();
    if payload.len() != width * height * channels * bytes_per {
        return Err(Error::Format("netpbm payload size mismatch".into()));
    }
    Ok(Netpbm {
        kind,
        width,
        height,
        maxval,
        payload,
    })
}
