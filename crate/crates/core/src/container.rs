//! Versioned binary container used by model and dataset files.
//!
//! ```text
//! magic       4 bytes
//! version     u32 LE
//! header_len  u64 LE
//! header      header_len bytes, UTF-8 JSON
//! payload_len u64 LE
//! payload     payload_len bytes
//! checksum    u64 LE, CRC-64/XZ over every preceding byte
//! ```
//! The checksum is verified before anything else is interpreted, so any corrupted
//! byte (framing included) surfaces as a checksum error.

use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use thiserror::Error;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const FRAMING: usize = 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("file is {len} bytes, shorter than the {min}-byte minimum: truncated")]
    Truncated { len: usize, min: usize },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}{hint}")]
    Checksum {
        stored: u64,
        computed: u64,
        hint: String,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("format version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("header is not valid JSON: {0}")]
    Header(#[from] serde_json::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn checksum(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

pub fn encode(magic: [u8; 4], version: u32, header: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAMING + header.len() + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

fn u64_at(bytes: &[u8], at: usize) -> Option<u64> {
    bytes.get(at..at + 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
}

/// Declared total length, if the framing fields are readable.
fn declared_len(bytes: &[u8]) -> Option<usize> {
    let header_len = usize::try_from(u64_at(bytes, 8)?).ok()?;
    let payload_len = usize::try_from(u64_at(bytes, 16usize.checked_add(header_len)?)?).ok()?;
    FRAMING.checked_add(header_len)?.checked_add(payload_len)
}

/// Returns `(header, payload)` after verifying checksum, magic and version.
pub fn decode(bytes: &[u8], magic: [u8; 4], version: u32) -> Result<(String, &[u8]), ContainerError> {
    if bytes.len() < FRAMING {
        return Err(ContainerError::Truncated {
            len: bytes.len(),
            min: FRAMING,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = checksum(body);
    if stored != computed {
        let header_end = u64_at(bytes, 8).and_then(|h| usize::try_from(h).ok()?.checked_add(24));
        let hint = match (declared_len(bytes), header_end) {
            (Some(d), _) if d > bytes.len() => format!(" (file is {} bytes but declares {d}: truncated?)", bytes.len()),
            (None, Some(e)) if e > bytes.len() => {
                format!(" (file is {} bytes but its header alone needs {e}: truncated?)", bytes.len())
            }
            _ => String::new(),
        };
        return Err(ContainerError::Checksum { stored, computed, hint });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != magic {
        return Err(ContainerError::BadMagic { found, expected: magic });
    }
    let found_version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found_version != version {
        return Err(ContainerError::VersionMismatch {
            found: found_version,
            supported: version,
        });
    }
    if declared_len(bytes) != Some(bytes.len()) {
        return Err(ContainerError::Malformed("section lengths do not add up".into()));
    }
    let header_len = u64_at(bytes, 8).expect("checked") as usize;
    let header = std::str::from_utf8(&bytes[16..16 + header_len])
        .map_err(|e| ContainerError::Malformed(format!("header is not UTF-8: {e}")))?
        .to_string();
    let payload_start = 16 + header_len + 8;
    Ok((header, &body[payload_start..]))
}

/// Writes through a temporary sibling file and renames it into place, so a failed
/// write never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, ContainerError> {
    std::fs::read(path).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Little-endian `f64` array.
pub fn f64s_to_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

pub fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>, ContainerError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(ContainerError::Malformed(format!(
            "{} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
