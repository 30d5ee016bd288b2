//! Read-only YUV4MPEG2 ingestion (8-bit 4:2:0 and 4:4:4).
//!
//! Chroma is upsampled nearest-neighbour and converted with full-range BT.601.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::video::VideoTensor;

const MAGIC: &[u8] = b"YUV4MPEG2";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Subsampling {
    C420,
    C444,
}

impl Subsampling {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Self::C420),
            "444" => Ok(Self::C444),
            other => Err(Error::UnsupportedColorspace(other.to_string())),
        }
    }

    fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Self::C420 => (width.div_ceil(2), height.div_ceil(2)),
            Self::C444 => (width, height),
        }
    }
}

pub fn read_y4m(path: impl AsRef<Path>) -> Result<VideoTensor> {
    decode_y4m(&fs::read(path)?)
}

pub fn decode_y4m(bytes: &[u8]) -> Result<VideoTensor> {
    if !bytes.starts_with(MAGIC) {
        return Err(Error::Format("missing YUV4MPEG2 magic".into()));
    }
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated stream header".into()))?;
    let header = std::str::from_utf8(&bytes[MAGIC.len()..header_end])
        .map_err(|_| Error::Format("stream header is not ASCII".into()))?;

    let mut width = None;
    let mut height = None;
    let mut sampling = Subsampling::C420;
    for token in header.split_ascii_whitespace() {
        let mut chars = token.chars();
        let key = chars.next();
        let value = chars.as_str();
        match key {
            Some('W') => width = value.parse::<usize>().ok(),
            Some('H') => height = value.parse::<usize>().ok(),
            Some('C') => sampling = Subsampling::parse(value)?,
            _ => {}
        }
    }
    let (width, height) = match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::Format("missing or invalid W/H in header".into())),
    };
    let (cw, ch) = sampling.chroma_dims(width, height);
    let luma_len = width * height;
    let chroma_len = cw * ch;
    let frame_bytes = luma_len + 2 * chroma_len;

    let mut data = Vec::new();
    let mut frames = 0usize;
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if !rest.starts_with(b"FRAME") {
            return Err(Error::Format(format!("malformed FRAME header at byte {pos}")));
        }
        let line_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated FRAME header".into()))?;
        let params = &rest[5..line_end];
        if !params.is_empty() && params[0] != b' ' {
            return Err(Error::Format(format!("malformed FRAME header at byte {pos}")));
        }
        pos += line_end + 1;
        if bytes.len() - pos < frame_bytes {
            return Err(Error::Truncated {
                expected: frame_bytes as u64,
                actual: (bytes.len() - pos) as u64,
            });
        }
        let y = &bytes[pos..pos + luma_len];
        let cb = &bytes[pos + luma_len..pos + luma_len + chroma_len];
        let cr = &bytes[pos + luma_len + chroma_len..pos + frame_bytes];
        for row in 0..height {
            for col in 0..width {
                let ci = match sampling {
                    Subsampling::C420 => (row / 2) * cw + col / 2,
                    Subsampling::C444 => row * cw + col,
                };
                let rgb = ycbcr_to_rgb(y[row * width + col], cb[ci], cr[ci]);
                data.extend_from_slice(&rgb);
            }
        }
        pos += frame_bytes;
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::Format("stream contains no frames".into()));
    }
    VideoTensor::new(frames, height, width, data)
}

/// Full-range BT.601 YCbCr → RGB in `[0, 1]`.
pub(crate) fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [f32; 3] {
    let y = y as f64;
    let cb = cb as f64 - 128.0;
    let cr = cr as f64 - 128.0;
    let r = y + 1.402 * cr;
    let g = y - 0.344_136 * cb - 0.714_136 * cr;
    let b = y + 1.772 * cb;
    [r, g, b].map(|v| (v / 255.0).clamp(0.0, 1.0) as f32)
}
