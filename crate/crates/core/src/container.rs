// SPDX-License-Identifier: MIT OR Apache-2.0

//! Framed binary container shared by every artifact the toolkit writes.
//!
//! Layout: 4-byte magic, 1-byte format version (0x01), 4-byte little-endian
//! header length, UTF-8 JSON header, then a raw payload of little-endian
//! `f32` values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u8 = 0x01;

pub const MAGIC_REPRS: [u8; 4] = *b"RSPB";
pub const MAGIC_REPORT: [u8; 4] = *b"RSPR";
pub const MAGIC_CHECKPOINT: [u8; 4] = *b"RSPC";
pub const MAGIC_TRACE: [u8; 4] = *b"RSPT";
pub const MAGIC_HIERARCHY: [u8; 4] = *b"RSPH";
pub const MAGIC_PROJECTOR: [u8; 4] = *b"RSPN";
/// Per-rank sweep results cached for resumption.
pub const MAGIC_RANK_CACHE: [u8; 4] = *b"RSPK";

const PREAMBLE: usize = 4 + 1 + 4;

/// Serialize `header` and `payload` into a framed byte buffer.
pub fn encode<H: Serialize>(magic: [u8; 4], header: &H, payload: &[f32]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| Error::MalformedHeader("header longer than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + payload.len() * 4);
    out.extend_from_slice(&magic);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write<H: Serialize>(
    path: &Path,
    magic: [u8; 4],
    header: &H,
    payload: &[f32],
) -> Result<()> {
    let bytes = encode(magic, header, payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A decoded container: typed header plus raw payload bytes.
pub struct Framed<H> {
    pub header: H,
    pub payload: Vec<u8>,
}

pub fn decode<H: DeserializeOwned>(
    bytes: &[u8],
    magic: [u8; 4],
    origin: &Path,
) -> Result<Framed<H>> {
    if bytes.len() < 4 || bytes[..4] != magic {
        let found = bytes.get(..4.min(bytes.len())).unwrap_or(&[]);
        return Err(Error::BadMagic {
            path: origin.to_path_buf(),
            expected: String::from_utf8_lossy(&magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(Error::MalformedHeader("file shorter than preamble".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::SchemaVersion {
            expected: u32::from(FORMAT_VERSION),
            found: u32::from(bytes[4]),
        });
    }
    let header_len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let rest = &bytes[PREAMBLE..];
    if rest.len() < header_len {
        return Err(Error::MalformedHeader(format!(
            "header length {header_len} exceeds remaining {} bytes",
            rest.len()
        )));
    }
    let text = std::str::from_utf8(&rest[..header_len])
        .map_err(|e| Error::MalformedHeader(format!("header is not UTF-8: {e}")))?;
    let header = serde_json::from_str(text)
        .map_err(|e| Error::MalformedHeader(format!("header JSON: {e}")))?;
    Ok(Framed {
        header,
        payload: rest[header_len..].to_vec(),
    })
}

pub fn read<H: DeserializeOwned>(path: &Path, magic: [u8; 4]) -> Result<Framed<H>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, magic, path)
}

/// Interpret `payload` as exactly `count` little-endian `f32` values.
pub fn floats(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    let expected = count * 4;
    if payload.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Reject NaN and infinities, reporting the first offending index.
pub fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct H {
        a: u32,
    }

    #[test]
    fn encode_decode() {
        let bytes = encode(*b"TEST", &H { a: 7 }, &[1.5, -2.0]).unwrap();
        let framed: Framed<H> = decode(&bytes, *b"TEST", Path::new("mem")).unwrap();
        assert_eq!(framed.header, H { a: 7 });
        assert_eq!(floats(&framed.payload, 2).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = encode(*b"TEST", &H { a: 1 }, &[]).unwrap();
        assert!(matches!(
            decode::<H>(&bytes, *b"XXXX", Path::new("mem")),
            Err(Error::BadMagic { .. })
        ));
        bytes[4] = 9;
        assert!(matches!(
            decode::<H>(&bytes, *b"TEST", Path::new("mem")),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn payload_length_checked() {
        assert!(matches!(
            floats(&[0u8; 20], 6),
            Err(Error::PayloadLength {
                expected: 24,
                found: 20
            })
        ));
    }
}
