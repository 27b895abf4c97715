//! Tensor file formats.
//!
//! Binary: the 4 magic bytes `DTEN`, a little-endian `u32` version (1), a
//! `u32` order `N`, `N` little-endian `u64` dimensions, then every value as a
//! little-endian `f64` in row-major order.
//!
//! Text (small fixtures): the first line lists the dimensions separated by
//! whitespace; the remaining whitespace-separated tokens are the values in
//! row-major order.

use super::DenseTensor;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DTEN";
pub const VERSION: u32 = 1;

pub fn write_binary<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing DTEN magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = read_u32(&mut r)? as usize;
    let mut shape = Vec::with_capacity(order);
    for _ in 0..order {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let len: usize = shape.iter().product();
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(shape, data)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_text<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    writeln!(w, "{}", dims.join(" "))?;
    let last = *t.shape().last().unwrap();
    for row in t.data().chunks(last) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", vals.join(" "))?;
    }
    Ok(())
}

pub fn parse_text(s: &str) -> Result<DenseTensor> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty tensor file".into()))?;
    let shape = header
        .split_whitespace()
        .map(|d| {
            d.parse::<usize>()
                .map_err(|e| Error::Format(format!("bad dimension {d:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = lines
        .flat_map(|l| l.split_whitespace())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| Error::Format(format!("bad value {v:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    DenseTensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

/// Loads a tensor, choosing the format from the magic bytes.
pub fn load(path: &Path) -> Result<DenseTensor> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        let s = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is neither DTEN nor text", path.display())))?;
        parse_text(&s)
    }
}

pub fn save_binary(t: &DenseTensor, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_binary(t, std::io::BufWriter::new(f))
}
