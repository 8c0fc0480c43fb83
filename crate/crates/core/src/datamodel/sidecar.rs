//! Binary feature sidecar.
//!
//! Layout: an 8-byte little-endian header length, a UTF-8 JSON index of that
//! many bytes, then the payload. Each index entry locates one video's
//! `n_frames x dim` little-endian `f32` block by byte offset into the payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Fps, VideoRecord};
use crate::error::{Error, Result};

pub const FEATURE_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "vidchain-features";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    videos: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    video_id: String,
    n_frames: usize,
    fps: Fps,
    dim: usize,
    offset: u64,
}

pub(crate) fn encode_framed(header: &impl Serialize, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    Ok(out)
}

pub(crate) fn decode_framed(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Format("truncated header length".into()))?;
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| Error::Format("header length overflow".into()))?;
    let header = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    Ok((header, &bytes[8 + header_len..]))
}

pub(crate) fn f32s_to_le(values: impl IntoIterator<Item = f32>, out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn le_to_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes videos in the given order.
pub fn write_features<'a>(
    path: &Path,
    videos: impl IntoIterator<Item = &'a VideoRecord>,
) -> Result<()> {
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for v in videos {
        entries.push(Entry {
            video_id: v.video_id.clone(),
            n_frames: v.n_frames(),
            fps: v.fps,
            dim: v.features.dim(),
            offset: payload.len() as u64,
        });
        f32s_to_le(v.features.raw().iter().copied(), &mut payload);
    }
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FEATURE_FORMAT_VERSION,
        videos: entries,
    };
    let bytes = encode_framed(&header, &payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<BTreeMap<String, VideoRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, payload) = decode_framed(&bytes)?;
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("{}: bad index header: {e}", path.display())))?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!(
            "{}: unexpected format tag {:?}",
            path.display(),
            header.format
        )));
    }
    if header.version != FEATURE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported feature format version {}",
            path.display(),
            header.version
        )));
    }
    let mut videos = BTreeMap::new();
    for e in header.videos {
        let start = usize::try_from(e.offset)
            .map_err(|_| Error::Format(format!("offset overflow for {}", e.video_id)))?;
        let len = e.n_frames * e.dim * 4;
        let block = payload.get(start..start + len).ok_or_else(|| {
            Error::Format(format!("payload for {} exceeds file size", e.video_id))
        })?;
        let record = VideoRecord::new(e.video_id.clone(), e.fps, e.dim, le_to_f32s(block))?;
        if videos.insert(e.video_id.clone(), record).is_some() {
            return Err(Error::Format(format!("duplicate video id {}", e.video_id)));
        }
    }
    Ok(videos)
}
