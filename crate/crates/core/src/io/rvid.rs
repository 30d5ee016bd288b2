//! RVID: a raw little-endian float container.
//!
//! ```text
//! "RVID" | version u32 = 1 | X u32 | H u32 | W u32 | X·H·W·3 × f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::video::VideoTensor;

pub const RVID_MAGIC: &[u8; 4] = b"RVID";
pub const RVID_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_rvid(video: &VideoTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + video.len() * 4);
    out.extend_from_slice(RVID_MAGIC);
    for v in [
        RVID_VERSION,
        video.frames() as u32,
        video.height() as u32,
        video.width() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in video.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_rvid(bytes: &[u8]) -> Result<VideoTensor> {
    if bytes.len() < 4 || &bytes[..4] != RVID_MAGIC {
        return Err(Error::Format("missing RVID magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != RVID_VERSION {
        return Err(Error::Format(format!("unsupported RVID version {version}")));
    }
    let (x, h, w) = (word(1) as u64, word(2) as u64, word(3) as u64);
    let payload = x
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(3 * 4))
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or_else(|| Error::Format(format!("shape {x}x{h}x{w} overflows")))?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual != payload {
        return Err(Error::Truncated {
            expected: payload,
            actual,
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VideoTensor::new(x as usize, h as usize, w as usize, data)
}

pub fn read_rvid(path: impl AsRef<Path>) -> Result<VideoTensor> {
    decode_rvid(&fs::read(path)?)
}

pub fn write_rvid(video: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_rvid(video))?;
    Ok(())
}
