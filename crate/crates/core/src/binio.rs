//! Little-endian primitives shared by the binary artifact formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn get_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub(crate) fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], kind: &'static str) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::format(
            kind,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&b), String::from_utf8_lossy(magic)),
        ));
    }
    Ok(())
}

/// Reads a u32 count and rejects values larger than `limit`, so that a
/// corrupt header cannot trigger a huge allocation.
pub(crate) fn get_count(r: &mut impl Read, limit: usize, kind: &'static str, what: &str) -> Result<usize> {
    let n = get_u32(r)? as usize;
    if n > limit {
        return Err(Error::format(kind, format!("{what} = {n} exceeds limit {limit}")));
    }
    Ok(n)
}
