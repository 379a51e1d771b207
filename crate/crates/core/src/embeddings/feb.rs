//! FEB1: little-endian frame-embedding container.
//!
//! ```text
//! "FEB1" | version u32 = 1 | model_id_len u32 | model_id bytes
//!        | dim u32 | frame_count u32 | hop_us u32 | offset_us u32
//!        | frame_count * dim f32, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{EmbeddingError, FrameEmbedding};

const MAGIC: &[u8; 4] = b"FEB1";
const VERSION: u32 = 1;
const MAX_MODEL_ID: u32 = 4096;

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32, EmbeddingError> {
    let end = *pos + 4;
    let b = bytes.get(*pos..end).ok_or_else(|| EmbeddingError::InvalidHeader("header ends early".into()))?;
    *pos = end;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn read_feb_from(mut r: impl Read) -> Result<FrameEmbedding, EmbeddingError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let mut pos = 4;
    let version = read_u32(&bytes, &mut pos)?;
    if version != VERSION {
        return Err(EmbeddingError::VersionMismatch(version));
    }
    let id_len = read_u32(&bytes, &mut pos)?;
    if id_len > MAX_MODEL_ID {
        return Err(EmbeddingError::InvalidHeader(format!("model id length {id_len}")));
    }
    let id_bytes = bytes
        .get(pos..pos + id_len as usize)
        .ok_or_else(|| EmbeddingError::InvalidHeader("header ends early".into()))?;
    let model_id = String::from_utf8(id_bytes.to_vec())
        .map_err(|_| EmbeddingError::InvalidHeader("model id is not UTF-8".into()))?;
    pos += id_len as usize;
    let dim = read_u32(&bytes, &mut pos)? as usize;
    let frames = read_u32(&bytes, &mut pos)? as usize;
    let hop_us = read_u32(&bytes, &mut pos)?;
    let offset_us = read_u32(&bytes, &mut pos)?;
    if dim == 0 {
        return Err(EmbeddingError::InvalidHeader("dim must be positive".into()));
    }
    if hop_us == 0 {
        return Err(EmbeddingError::InvalidHeader("hop must be positive".into()));
    }
    let expected = frames as u64 * dim as u64 * 4;
    let found = (bytes.len() - pos) as u64;
    if expected != found {
        return Err(EmbeddingError::TruncatedData { expected, found });
    }
    let mut data = Vec::with_capacity(frames * dim);
    for (i, b) in bytes[pos..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if !v.is_finite() {
            return Err(EmbeddingError::NonFiniteValue { row: i / dim, col: i % dim });
        }
        data.push(v);
    }
    let matrix = Array2::from_shape_vec((frames, dim), data).expect("length checked above");
    Ok(FrameEmbedding { model_id, hop: f64::from(hop_us) / 1e6, offset: f64::from(offset_us) / 1e6, matrix })
}

pub fn read_feb(path: impl AsRef<Path>) -> Result<FrameEmbedding, EmbeddingError> {
    read_feb_from(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_feb_to(mut w: impl Write, fe: &FrameEmbedding) -> Result<(), EmbeddingError> {
    if fe.dim() == 0 {
        return Err(EmbeddingError::InvalidHeader("dim must be positive".into()));
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| EmbeddingError::InvalidHeader(format!("{what} exceeds u32")))
    };
    let us = |s: f64| (s * 1e6).round() as u32;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&to_u32(fe.model_id.len(), "model id length")?.to_le_bytes())?;
    w.write_all(fe.model_id.as_bytes())?;
    w.write_all(&to_u32(fe.dim(), "dim")?.to_le_bytes())?;
    w.write_all(&to_u32(fe.frames(), "frame count")?.to_le_bytes())?;
    w.write_all(&us(fe.hop).to_le_bytes())?;
    w.write_all(&us(fe.offset).to_le_bytes())?;
    let mut payload = Vec::with_capacity(fe.frames() * fe.dim() * 4);
    for v in fe.matrix.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

/// Writes through a temporary file and renames into place.
pub fn write_feb(path: impl AsRef<Path>, fe: &FrameEmbedding) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("feb.tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_feb_to(&mut f, fe)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
