//! Frame and sequence file formats.
//!
//! Two interchange formats, both codec-free:
//!
//! * **Netpbm** `P5` (grayscale) / `P6` (color) frames, 8- or 16-bit,
//!   big-endian sample order for 16-bit per the Netpbm convention. One file
//!   per frame; the 16-bit variant is the lossless interchange format, the
//!   8-bit variant is for quick visual inspection.
//! * **GVSQ**, a one-file sequence container: magic `"GVSQ"`, four u32
//!   little-endian fields `T, C, H, W`, then `T·C·H·W` u16 little-endian
//!   samples in `[T, C, H, W]` order.
//!
//! Intensities are normalized to [0, 1] in memory and quantized to the
//! 16-bit grid on disk with round-half-up, so a write→read round trip moves
//! no value by more than half a quantization step (0.5/65535).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const GVSQ_MAGIC: &[u8; 4] = b"GVSQ";

/// Sample depth for Netpbm output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Round-half-up quantization of a [0, 1] intensity to `0..=maxval`.
#[inline]
fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

/// Writes one `[C, H, W]` frame as PGM (C = 1) or PPM (C = 3).
pub fn write_pnm<S: Scalar>(path: &Path, frame: &Tensor<S>, depth: BitDepth) -> Result<()> {
    let s = frame.shape();
    let (c, h, w) = match s {
        [c @ 1, h, w] | [c @ 3, h, w] => (*c, *h, *w),
        _ => {
            return Err(Error::shape(
                "write_pnm",
                "[1, H, W] or [3, H, W] frame",
                format!("{s:?}"),
            ))
        }
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let magic = if c == 1 { "P5" } else { "P6" };
    let maxval = depth.maxval();
    write!(out, "{magic}\n{w} {h}\n{maxval}\n").map_err(io)?;
    let plane = h * w;
    let mut bytes = Vec::with_capacity(c * plane * 2);
    // Netpbm rasters are pixel-interleaved; the tensor is planar.
    for idx in 0..plane {
        for ci in 0..c {
            let q = quantize(frame.data()[ci * plane + idx].to_f64(), maxval);
            match depth {
                BitDepth::Eight => bytes.push(q as u8),
                BitDepth::Sixteen => bytes.extend_from_slice(&(q as u16).to_be_bytes()),
            }
        }
    }
    out.write_all(&bytes).map_err(io)?;
    out.flush().map_err(io)
}

struct HeaderScanner {
    bytes: Vec<u8>,
    pos: usize,
}

impl HeaderScanner {
    /// Skips whitespace and `#` comments, then reads one ASCII token.
    fn token(&mut self, path: &Path, what: &str) -> Result<(String, u64)> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(
                path,
                start as u64,
                format!("expected {what}, found end of file"),
            ));
        }
        let tok = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        Ok((tok, start as u64))
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        let (tok, at) = self.token(path, what)?;
        tok.parse()
            .map_err(|_| Error::parse(path, at, format!("invalid {what} '{tok}'")))
    }
}

/// Reads a PGM/PPM frame into a `[C, H, W]` tensor of [0, 1] intensities.
/// Both 8-bit and 16-bit rasters are accepted.
pub fn read_pnm<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut scan = HeaderScanner { bytes, pos: 0 };
    let (magic, at) = scan.token(path, "magic")?;
    let c = match magic.as_str() {
        "P5" => 1usize,
        "P6" => 3usize,
        _ => {
            return Err(Error::parse(
                path,
                at,
                format!("bad magic '{magic}', expected P5 or P6"),
            ))
        }
    };
    let w = scan.number(path, "width")?;
    let h = scan.number(path, "height")?;
    let (maxval_at, maxval) = {
        let at = scan.pos as u64;
        (at, scan.number(path, "maxval")?)
    };
    if w == 0 || h == 0 {
        return Err(Error::parse(path, 3, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(
            path,
            maxval_at,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    // Exactly one whitespace byte separates header and raster.
    let raster_at = scan.pos + 1;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let need = c * h * w * sample_bytes;
    let raster = scan
        .bytes
        .get(raster_at..raster_at + need)
        .ok_or_else(|| {
            Error::parse(
                path,
                scan.bytes.len() as u64,
                format!("raster truncated: need {need} bytes after header"),
            )
        })?;
    let plane = h * w;
    let mut data = vec![S::ZERO; c * plane];
    let inv = 1.0 / maxval as f64;
    for idx in 0..plane {
        for ci in 0..c {
            let s = (idx * c + ci) * sample_bytes;
            let q = if wide {
                u16::from_be_bytes([raster[s], raster[s + 1]]) as u32
            } else {
                raster[s] as u32
            };
            data[ci * plane + idx] = S::from_f64(q as f64 * inv);
        }
    }
    Tensor::from_vec(data, &[c, h, w])
}

/// Writes a `[T, C, H, W]` sequence as one GVSQ container file.
pub fn write_gvsq<S: Scalar>(path: &Path, seq: &Tensor<S>) -> Result<()> {
    let s = seq.shape();
    if s.len() != 4 || (s[1] != 1 && s[1] != 3) {
        return Err(Error::shape(
            "write_gvsq",
            "[T, C, H, W] sequence with C in {1, 3}",
            format!("{s:?}"),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(GVSQ_MAGIC).map_err(io)?;
    for &d in s {
        out.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
    }
    let mut bytes = Vec::with_capacity(seq.numel() * 2);
    for &v in seq.data() {
        bytes.extend_from_slice(&(quantize(v.to_f64(), 65535) as u16).to_le_bytes());
    }
    out.write_all(&bytes).map_err(io)?;
    out.flush().map_err(io)
}

/// Reads a GVSQ container into a `[T, C, H, W]` tensor.
pub fn read_gvsq<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 {
        return Err(Error::parse(path, 0, "file too short for a GVSQ header"));
    }
    if &bytes[0..4] != GVSQ_MAGIC {
        return Err(Error::parse(
            path,
            0,
            format!("bad magic {:?}, expected \"GVSQ\"", &bytes[0..4]),
        ));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let dims = [field(0), field(1), field(2), field(3)];
    let numel = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&n| n > 0 && n <= (1 << 31))
        .ok_or_else(|| Error::parse(path, 4, format!("implausible dimensions {dims:?}")))?
        as usize;
    let raster = &bytes[20..];
    if raster.len() != numel * 2 {
        return Err(Error::parse(
            path,
            20,
            format!(
                "raster size {} does not match header ({} samples)",
                raster.len(),
                numel
            ),
        ));
    }
    let data = raster
        .chunks_exact(2)
        .map(|p| S::from_f64(u16::from_le_bytes([p[0], p[1]]) as f64 / 65535.0))
        .collect();
    Tensor::from_vec(data, &[dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize])
}

/// Reads a frame sequence from a GVSQ file, a single PGM/PPM frame, or a
/// directory of PGM/PPM frames (sorted by file name). Always returns
/// `[T, C, H, W]`.
pub fn read_frames<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    if path.is_dir() {
        let mut frames: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pgm") | Some("ppm")
                )
            })
            .collect();
        if frames.is_empty() {
            return Err(Error::config(format!(
                "directory {} contains no .pgm/.ppm frames",
                path.display()
            )));
        }
        frames.sort();
        let mut stacked: Vec<S> = Vec::new();
        let mut shape: Option<Vec<usize>> = None;
        for f in &frames {
            let frame: Tensor<S> = read_pnm(f)?;
            match &shape {
                None => shape = Some(frame.shape().to_vec()),
                Some(s) if s == frame.shape() => {}
                Some(s) => {
                    return Err(Error::shape(
                        "read_frames",
                        format!("{s:?} like the first frame"),
                        format!("{:?} in {}", frame.shape(), f.display()),
                    ))
                }
            }
            stacked.extend_from_slice(frame.data());
        }
        let s = shape.unwrap();
        return Tensor::from_vec(stacked, &[frames.len(), s[0], s[1], s[2]]);
    }
    // Sniff the magic: container or single frame.
    let mut head = [0u8; 2];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut head).map(|_| ()))
        .map_err(|e| Error::io(path, e))?;
    if &head == b"GV" {
        read_gvsq(path)
    } else {
        let frame: Tensor<S> = read_pnm(path)?;
        let s = frame.shape().to_vec();
        Tensor::from_vec(frame.data().to_vec(), &[1, s[0], s[1], s[2]])
    }
}

/// Writes a `[T, C, H, W]` sequence: to a single GVSQ container when the
/// path ends in `.gvsq`, otherwise as numbered 16-bit PGM/PPM frames inside
/// the path treated as a directory.
pub fn write_frames<S: Scalar>(path: &Path, seq: &Tensor<S>) -> Result<()> {
    if path.extension().and_then(|e| e.to_str()) == Some("gvsq") {
        return write_gvsq(path, seq);
    }
    let s = seq.shape();
    if s.len() != 4 {
        return Err(Error::shape(
            "write_frames",
            "[T, C, H, W] sequence",
            format!("{s:?}"),
        ));
    }
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
    let ext = if c == 1 { "pgm" } else { "ppm" };
    let plane = c * h * w;
    for ti in 0..t {
        let frame = Tensor::from_vec(
            seq.data()[ti * plane..(ti + 1) * plane].to_vec(),
            &[c, h, w],
        )?;
        write_pnm(
            &path.join(format!("frame_{ti:04}.{ext}")),
            &frame,
            BitDepth::Sixteen,
        )?;
    }
    Ok(())
}
