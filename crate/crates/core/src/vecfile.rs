//! `URAGVEC1` dense vector files.
//!
//! Layout: 8 magic bytes, `u32` LE dim, `u64` LE count, then `count * dim`
//! little-endian `f32` values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const VECTOR_MAGIC: &[u8; 8] = b"URAGVEC1";
pub const HEADER_LEN: u64 = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    pub dim: usize,
    pub count: usize,
    pub data: Vec<f32>,
}

impl VectorBlock {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn write_block<W: Write>(w: &mut W, dim: usize, data: &[f32]) -> std::io::Result<()> {
    assert!(dim > 0 && data.len().is_multiple_of(dim), "ragged vector block");
    let count = (data.len() / dim) as u64;
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one block from a stream. `origin` only labels errors.
pub fn read_block<R: Read>(r: &mut R, origin: &Path) -> Result<VectorBlock> {
    let mut header = [0u8; HEADER_LEN as usize];
    read_exact_or_truncated(r, &mut header, origin, HEADER_LEN, 0)?;
    if &header[..8] != VECTOR_MAGIC {
        return Err(Error::BadMagic {
            path: origin.to_path_buf(),
            expected: "URAGVEC1",
        });
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::invalid(format!("{}: zero dimension", origin.display())));
    }
    let body_len = (count as u64)
        .checked_mul(dim as u64 * 4)
        .ok_or_else(|| Error::invalid(format!("{}: header overflows", origin.display())))?;
    let mut bytes = vec![0u8; body_len as usize];
    read_exact_or_truncated(r, &mut bytes, origin, HEADER_LEN + body_len, HEADER_LEN)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VectorBlock { dim, count, data })
}

pub fn write_file(path: &Path, dim: usize, data: &[f32]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_block(&mut w, dim, data)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a whole file, rejecting trailing bytes after the declared rows.
pub fn read_file(path: &Path) -> Result<VectorBlock> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let block = read_block(&mut BufReader::new(file), path)?;
    let expected = HEADER_LEN + (block.count * block.dim * 4) as u64;
    if actual != expected {
        return Err(Error::invalid(format!(
            "{}: {} trailing bytes",
            path.display(),
            actual - expected
        )));
    }
    Ok(block)
}

fn read_exact_or_truncated<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    origin: &Path,
    expected_total: u64,
    offset: u64,
) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    path: origin.to_path_buf(),
                    expected: expected_total,
                    actual: offset + filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io(origin, e)),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_block(&mut buf, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(&buf[..8], b"URAGVEC1");
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..20], &2u64.to_le_bytes());
        assert_eq!(&buf[20..24], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 20 + 16);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        write_file(&path, 3, &[0.5; 6]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        let err = read_file(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_file(&path), Err(Error::BadMagic { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip(dim in 1usize..16, rows in 0usize..8, seed in any::<u32>()) {
            let data: Vec<f32> = (0..dim * rows).map(|i| (i as f32 + seed as f32).sin()).collect();
            let mut buf = Vec::new();
            write_block(&mut buf, dim, &data).unwrap();
            let block = read_block(&mut buf.as_slice(), Path::new("mem")).unwrap();
            prop_assert_eq!(block.dim, dim);
            prop_assert_eq!(block.count, rows);
            prop_assert_eq!(block.data, data);
        }
    }
}
