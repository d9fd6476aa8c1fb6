//! Binary artifact container shared by every file format in the crate.
//!
//! Layout: 4-byte magic, little-endian `u32` header length, UTF-8 JSON header
//! of that length, then a little-endian `f32` payload running to end of file.
//! Every header carries `magic` and `schema_version`; readers reject a
//! mismatch instead of reinterpreting the payload.

use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("schema version mismatch: file has {found}, reader supports {expected}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("truncated container: {0}")]
    Truncated(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(serde::Deserialize)]
struct Envelope {
    magic: String,
    schema_version: u32,
}

pub fn encode<H: Serialize>(magic: &[u8; 4], header: &H, payload: &[f32]) -> Result<Vec<u8>, ContainerError> {
    let mut value = serde_json::to_value(header).map_err(|e| ContainerError::Header(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ContainerError::Header("header must serialize to a JSON object".into()))?;
    obj.insert("magic".into(), String::from_utf8_lossy(magic).into_owned().into());
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    let json = serde_json::to_vec(&value).map_err(|e| ContainerError::Header(e.to_string()))?;

    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(magic: &[u8; 4], bytes: &[u8]) -> Result<(H, Vec<f32>), ContainerError> {
    if bytes.len() < 8 {
        return Err(ContainerError::Truncated("shorter than magic + header length".into()));
    }
    if &bytes[..4] != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json_end = 8 + len;
    if bytes.len() < json_end {
        return Err(ContainerError::Truncated("header runs past end of file".into()));
    }
    let json = &bytes[8..json_end];
    let env: Envelope = serde_json::from_slice(json).map_err(|e| ContainerError::Header(e.to_string()))?;
    if env.magic.as_bytes() != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: env.magic,
        });
    }
    if env.schema_version != SCHEMA_VERSION {
        return Err(ContainerError::SchemaVersion { expected: SCHEMA_VERSION, found: env.schema_version });
    }
    let header: H = serde_json::from_slice(json).map_err(|e| ContainerError::Header(e.to_string()))?;
    let rest = &bytes[json_end..];
    if rest.len() % 4 != 0 {
        return Err(ContainerError::Truncated("payload is not a whole number of f32 values".into()));
    }
    let payload = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, payload))
}

pub fn write_file<H: Serialize>(path: &Path, magic: &[u8; 4], header: &H, payload: &[f32]) -> Result<(), ContainerError> {
    let bytes = encode(magic, header, payload)?;
    let io = |source| ContainerError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

pub fn read_file<H: DeserializeOwned>(path: &Path, magic: &[u8; 4]) -> Result<(H, Vec<f32>), ContainerError> {
    let io = |source| ContainerError::Io { path: path.display().to_string(), source };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    decode(magic, &bytes)
}

/// Serialize a payload count check into a readable error.
pub fn expect_len(what: &str, got: usize, want: usize) -> Result<(), ContainerError> {
    if got != want {
        return Err(ContainerError::Truncated(format!("{what}: payload has {got} values, header implies {want}")));
    }
    Ok(())
}
