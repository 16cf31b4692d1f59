//! Binary tensor serialization.
//!
//! Single-tensor layout (`.gvt`):
//!
//! ```text
//! magic     4 bytes   "GVTD"
//! rank      u32       little-endian
//! dims      rank u64  little-endian
//! data      f32 LE    product(dims) values, row-major
//! ```
//!
//! A named-tensor table prefixes the same layout with a table header:
//! magic `"GVTT"`, a u32 entry count, then per entry a u32 name length, the
//! UTF-8 name, and a full single-tensor record. Entries round-trip in order,
//! so files written from the same state are byte-identical.
//!
//! Values are stored as f32 regardless of the in-memory precision; this is
//! the training precision, and checkpoints are training artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const TENSOR_MAGIC: &[u8; 4] = b"GVTD";
const TABLE_MAGIC: &[u8; 4] = b"GVTT";

/// Maximum rank / name length we are ever willing to read; guards against
/// treating a corrupt length prefix as an allocation request.
const SANE_LEN: u32 = 1 << 16;

struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counting<R> {
    fn new(inner: R) -> Self {
        Counting { inner, offset: 0 }
    }

    fn read_exact(&mut self, path: &Path, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::parse(path, at, format!("file truncated while reading {what}"))
                }
                _ => Error::io(path, e),
            })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, path: &Path, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(path, &mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self, path: &Path, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(path, &mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

fn write_tensor_record<S: Scalar, W: Write>(w: &mut W, t: &Tensor<S>) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for &v in t.data() {
        buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_tensor_record<S: Scalar, R: Read>(
    r: &mut Counting<R>,
    path: &Path,
) -> Result<Tensor<S>> {
    let magic_at = r.offset;
    let mut magic = [0u8; 4];
    r.read_exact(path, &mut magic, "tensor magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::parse(
            path,
            magic_at,
            format!("bad tensor magic {magic:?}, expected \"GVTD\""),
        ));
    }
    let rank_at = r.offset;
    let rank = r.read_u32(path, "rank")?;
    if rank > SANE_LEN {
        return Err(Error::parse(path, rank_at, format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel: u64 = 1;
    for _ in 0..rank {
        let at = r.offset;
        let d = r.read_u64(path, "dimension")?;
        numel = numel
            .checked_mul(d)
            .filter(|&n| n <= u32::MAX as u64)
            .ok_or_else(|| Error::parse(path, at, format!("implausible dimension {d}")))?;
        shape.push(d as usize);
    }
    let mut bytes = vec![0u8; numel as usize * 4];
    r.read_exact(path, &mut bytes, "tensor data")?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| S::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::from_vec(data, &shape)
}

/// Writes one tensor to `path`.
pub fn write_tensor<S: Scalar>(path: &Path, t: &Tensor<S>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one tensor to an arbitrary writer.
pub fn write_tensor_to<S: Scalar, W: Write>(w: &mut W, t: &Tensor<S>) -> std::io::Result<()> {
    write_tensor_record(w, t)
}

/// Reads one tensor from `path`.
pub fn read_tensor<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor_from(BufReader::new(file), path)
}

/// Reads one tensor from an arbitrary reader; `path` is for error messages.
pub fn read_tensor_from<S: Scalar, R: Read>(reader: R, path: &Path) -> Result<Tensor<S>> {
    let mut r = Counting::new(reader);
    read_tensor_record(&mut r, path)
}

/// Writes an ordered table of named tensors to `path`.
pub fn write_named_tensors<S: Scalar>(path: &Path, entries: &[(String, Tensor<S>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(TABLE_MAGIC).map_err(io)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        write_tensor_record(&mut w, t).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads an ordered table of named tensors from `path`.
pub fn read_named_tensors<S: Scalar>(path: &Path) -> Result<Vec<(String, Tensor<S>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Counting::new(BufReader::new(file));
    let mut magic = [0u8; 4];
    r.read_exact(path, &mut magic, "table magic")?;
    if &magic != TABLE_MAGIC {
        return Err(Error::parse(
            path,
            0,
            format!("bad table magic {magic:?}, expected \"GVTT\""),
        ));
    }
    let count = r.read_u32(path, "entry count")?;
    if count > SANE_LEN {
        return Err(Error::parse(path, 4, format!("implausible entry count {count}")));
    }
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.offset;
        let name_len = r.read_u32(path, "name length")?;
        if name_len > SANE_LEN {
            return Err(Error::parse(
                path,
                at,
                format!("implausible name length {name_len}"),
            ));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(path, &mut name, "name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::parse(path, at, "name is not valid UTF-8"))?;
        let tensor = read_tensor_record(&mut r, path)?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.gvt");
        let t = Tensor::<f32>::from_vec(vec![1.5, -2.25, 0.0, 3.0e-7, -1.0e8, 0.1], &[2, 3, 1])
            .unwrap();
        write_tensor(&path, &t).unwrap();
        let back: Tensor<f32> = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.data(), t.data());
        // Writing again produces identical bytes.
        let bytes1 = std::fs::read(&path).unwrap();
        write_tensor(&path, &back).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn header_layout_is_exactly_as_documented() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.gvt");
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap();
        write_tensor(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"GVTD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 24 + 8);
    }

    #[test]
    fn rank_zero_tensor_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gvt");
        write_tensor(&path, &Tensor::<f64>::scalar(7.5)).unwrap();
        let back: Tensor<f64> = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), &[] as &[usize]);
        assert_eq!(back.value(), 7.5);
    }

    #[test]
    fn bad_magic_and_truncation_are_parse_errors_with_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gvt");
        std::fs::write(&path, b"NOPE").unwrap();
        let err = read_tensor::<f32>(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("at byte 0"), "{err}");

        std::fs::write(&path, b"GVTD\x02\x00\x00\x00").unwrap();
        let err = read_tensor::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        // Correct header, short data section.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GVTD");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&4u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn corrupt_dimension_does_not_trigger_huge_allocation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.gvt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GVTD");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("implausible"), "{err}");
    }

    #[test]
    fn named_table_round_trips_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.gvt");
        let entries = vec![
            (
                "net.head.w".to_string(),
                Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap(),
            ),
            ("net.head.b".to_string(), Tensor::<f32>::scalar(-0.5)),
            (
                "net.tail.w".to_string(),
                Tensor::<f32>::from_vec(vec![9.0], &[1, 1, 1, 1]).unwrap(),
            ),
        ];
        write_named_tensors(&path, &entries).unwrap();
        let back: Vec<(String, Tensor<f32>)> = read_named_tensors(&path).unwrap();
        assert_eq!(back.len(), 3);
        for ((n1, t1), (n2, t2)) in entries.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            assert_eq!(t1.data(), t2.data());
        }
    }
}
