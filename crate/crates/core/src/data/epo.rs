//! The `EPO1` binary epoch container.
//!
//! Layout, little-endian throughout:
//!
//! | offset            | size        | content                                   |
//! |-------------------|-------------|-------------------------------------------|
//! | 0                 | 4           | magic `b"EPO1"`                           |
//! | 4                 | 4           | `u32` epoch count `n`                     |
//! | 8                 | 4           | `u32` channel count `C`                   |
//! | 12                | 4           | `u32` samples per channel `T`             |
//! | 16                | 4·n·C·T     | binary32 values, `[epoch][channel][time]` |
//! | 16 + 4·n·C·T      | 4·n         | `i32` labels, `-1` = unlabeled            |
//!
//! Total length is `16 + 4·n·C·T + 4·n` bytes. Values are stored as binary32, so an
//! epoch whose values are not binary32-representable is rounded on write; generators
//! in this crate only emit representable values, which makes their sets round-trip
//! bit-exactly.

use std::fs;
use std::path::Path;

use crate::data::tensor::{EpochTensor, LabeledSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPO1";
const HEADER_LEN: u64 = 16;

/// Byte length of an `EPO1` file holding `n` epochs of shape `channels x samples`.
pub fn encoded_len(n: usize, channels: usize, samples: usize) -> u64 {
    HEADER_LEN + 4 * (n as u64) * (channels as u64) * (samples as u64) + 4 * n as u64
}

/// Serializes epochs with optional labels (`None` is written as `-1`).
pub fn encode(epochs: &[EpochTensor], labels: &[Option<usize>]) -> Result<Vec<u8>> {
    if epochs.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} epochs but {} labels",
            epochs.len(),
            labels.len()
        )));
    }
    let (channels, samples) = epochs.first().map(EpochTensor::shape).unwrap_or((0, 0));
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(encoded_len(epochs.len(), channels, samples) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(epochs.len(), "epoch count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(channels, "channel count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(samples, "sample count")?.to_le_bytes());
    for e in epochs {
        e.check_shape(channels, samples)?;
        for &v in e.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for l in labels {
        let raw: i32 = match l {
            None => -1,
            Some(l) => i32::try_from(*l)
                .map_err(|_| Error::InvalidConfig(format!("label {l} exceeds i32")))?,
        };
        out.extend_from_slice(&raw.to_le_bytes());
    }
    Ok(out)
}

/// Parses an `EPO1` byte buffer into epochs and optional labels.
pub fn decode(bytes: &[u8]) -> Result<(Vec<EpochTensor>, Vec<Option<usize>>)> {
    let malformed = |offset: u64, reason: String| Error::MalformedFile { offset, reason };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(malformed(0, "bad magic, expected \"EPO1\"".into()));
    }
    if bytes.len() < HEADER_LEN as usize {
        return Err(malformed(
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let n = read_u32(4) as u64;
    let channels = read_u32(8) as u64;
    let samples = read_u32(12) as u64;

    let expected = n
        .checked_mul(channels)
        .and_then(|v| v.checked_mul(samples))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(4 * n))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| malformed(4, format!("shape {n}x{channels}x{samples} overflows")))?;
    if n > 0 && channels * samples == 0 {
        return Err(malformed(8, "zero-sized epochs in a non-empty file".into()));
    }
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(malformed(
            actual,
            format!("truncated payload: expected {expected} bytes, found {actual}"),
        ));
    }
    if actual > expected {
        return Err(malformed(
            expected,
            format!("{} trailing bytes", actual - expected),
        ));
    }

    let (n, channels, samples) = (n as usize, channels as usize, samples as usize);
    let per_epoch = channels * samples;
    let mut offset = HEADER_LEN as usize;
    let mut epochs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = Vec::with_capacity(per_epoch);
        for _ in 0..per_epoch {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(malformed(offset as u64, format!("non-finite value {v}")));
            }
            values.push(v as f64);
            offset += 4;
        }
        epochs.push(EpochTensor::new(channels, samples, values)?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        labels.push(match raw {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(malformed(offset as u64, format!("invalid label {l}"))),
        });
        offset += 4;
    }
    Ok((epochs, labels))
}

pub fn write_epochs(path: impl AsRef<Path>, set: &LabeledSet) -> Result<()> {
    let labels: Vec<Option<usize>> = set.labels().iter().copied().map(Some).collect();
    write_raw(path, set.epochs(), &labels)
}

/// Writes epochs with every label set to `-1`.
pub fn write_unlabeled(path: impl AsRef<Path>, epochs: &[EpochTensor]) -> Result<()> {
    write_raw(path, epochs, &vec![None; epochs.len()])
}

pub fn write_raw(
    path: impl AsRef<Path>,
    epochs: &[EpochTensor],
    labels: &[Option<usize>],
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(epochs, labels)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<(Vec<EpochTensor>, Vec<Option<usize>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Reads a fully labeled set; unlabeled entries are an error.
pub fn read_epochs(path: impl AsRef<Path>) -> Result<LabeledSet> {
    let (epochs, labels) = read_raw(path)?;
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| Error::MalformedFile {
                offset: HEADER_LEN + 4 * (epochs.len() * epochs[0].len() + i) as u64,
                reason: format!("epoch {i} is unlabeled"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSet::new(epochs, labels)
}
