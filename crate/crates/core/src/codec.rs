//! Little-endian binary encoding shared by the graph and checkpoint files.

use std::io::{self, Read, Write};

use crate::tensor::Matrix;

/// Upper bound on any length prefix read from disk, to fail fast on garbage.
const MAX_LEN: u64 = 1 << 32;

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8]) -> io::Result<()> {
    w.write_all(magic)
}

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8]) -> io::Result<bool> {
    let mut buf = vec![0u8; magic.len()];
    r.read_exact(&mut buf)?;
    Ok(buf == magic)
}

pub(crate) fn write_u8<W: Write>(w: &mut W, v: u8) -> io::Result<()> {
    w.write_all(&[v])
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_len<R: Read>(r: &mut R) -> io::Result<usize> {
    let n = read_u64(r)?;
    if n > MAX_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("length prefix {n} is implausibly large"),
        ));
    }
    Ok(n as usize)
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let n = read_len(r)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Rows, cols, then row-major values.
pub(crate) fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> io::Result<()> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    let mut bytes = Vec::with_capacity(m.as_slice().len() * 8);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub(crate) fn read_matrix<R: Read>(r: &mut R) -> io::Result<Matrix> {
    let rows = read_len(r)?;
    let cols = read_len(r)?;
    let n = rows
        .checked_mul(cols)
        .filter(|n| (*n as u64) <= MAX_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "matrix too large"))?;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Matrix::from_vec(rows, cols, data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
