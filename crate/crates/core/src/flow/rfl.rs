use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowError, FlowField};
use crate::container;

pub const RFL_MAGIC: &[u8; 4] = b"RFL1";

#[derive(Serialize, Deserialize)]
struct Header {
    width: usize,
    height: usize,
    count: usize,
}

/// Encodes a sequence of equally sized fields; each field is stored as
/// interleaved `(u, v)` pairs in row-major order.
pub fn encode_flows(flows: &[FlowField]) -> Result<Vec<u8>, FlowError> {
    let (w, h) = flows.first().map(|f| (f.width, f.height)).unwrap_or((0, 0));
    let mut payload = Vec::with_capacity(flows.len() * w * h * 2);
    for f in flows {
        if (f.width, f.height) != (w, h) {
            return Err(FlowError::SizeMismatch { a: (w, h), b: (f.width, f.height) });
        }
        for (u, v) in f.u.iter().zip(&f.v) {
            payload.push(*u);
            payload.push(*v);
        }
    }
    Ok(container::encode(RFL_MAGIC, &Header { width: w, height: h, count: flows.len() }, &payload)?)
}

pub fn decode_flows(bytes: &[u8]) -> Result<Vec<FlowField>, FlowError> {
    let (hd, payload): (Header, Vec<f32>) = container::decode(RFL_MAGIC, bytes)?;
    let per = hd.width * hd.height * 2;
    container::expect_len("flow shard", payload.len(), per * hd.count)?;
    Ok(payload
        .chunks_exact(per.max(1))
        .take(hd.count)
        .map(|c| FlowField {
            width: hd.width,
            height: hd.height,
            u: c.iter().step_by(2).copied().collect(),
            v: c.iter().skip(1).step_by(2).copied().collect(),
        })
        .collect())
}

pub fn write_flows(path: &Path, flows: &[FlowField]) -> Result<(), FlowError> {
    let bytes = encode_flows(flows)?;
    std::fs::write(path, bytes).map_err(|source| container::ContainerError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_flows(path: &Path) -> Result<Vec<FlowField>, FlowError> {
    let bytes = std::fs::read(path).map_err(|source| container::ContainerError::Io { path: path.display().to_string(), source })?;
    decode_flows(&bytes)
}
