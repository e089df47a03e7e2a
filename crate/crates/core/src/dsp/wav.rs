//! Minimal RIFF/WAVE PCM16 reader and writer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// Samples in one second of audio.
pub const CLIP_SAMPLES: usize = SAMPLE_RATE as usize;

/// One second of mono 16 kHz audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
}

impl AudioClip {
    /// Zero-pads at the end or truncates to exactly one second.
    pub fn from_samples(mut samples: Vec<f32>) -> Self {
        samples.resize(CLIP_SAMPLES, 0.0);
        Self { samples }
    }

    pub fn silence() -> Self {
        Self::from_samples(Vec::new())
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }
}

fn unsupported(path: &Path, field: impl Into<String>) -> Error {
    Error::UnsupportedWav {
        path: path.to_path_buf(),
        field: field.into(),
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a PCM16 mono 16 kHz file to samples scaled by `1/32768`, any length.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_wav(&bytes, path)
}

pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(unsupported(path, "missing RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(unsupported(path, "RIFF form type is not WAVE"));
    }
    let mut pos = 12;
    let mut format_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| unsupported(path, "truncated fmt chunk"))?;
                if end - body < 16 {
                    return Err(unsupported(path, "fmt chunk shorter than 16 bytes"));
                }
                let format = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let rate = le_u32(bytes, body + 4);
                let bits = le_u16(bytes, body + 14);
                if format != 1 {
                    return Err(unsupported(path, format!("audio_format = {format} (expected 1, PCM)")));
                }
                if channels != 1 {
                    return Err(Error::UnsupportedChannels {
                        path: path.to_path_buf(),
                        channels,
                    });
                }
                if rate != SAMPLE_RATE {
                    return Err(unsupported(path, format!("sample_rate = {rate} (expected {SAMPLE_RATE})")));
                }
                if bits != 16 {
                    return Err(unsupported(path, format!("bits_per_sample = {bits} (expected 16)")));
                }
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(unsupported(path, "data chunk before fmt chunk"));
                }
                // Tolerate a data size running past the file end by reading what is there.
                let end = end.unwrap_or(bytes.len());
                return Ok(bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                    .collect());
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(unsupported(path, if format_seen { "no data chunk" } else { "no fmt chunk" }))
}

/// Reads a clip and pads or truncates it to one second.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    Ok(AudioClip::from_samples(read_wav(path)?))
}

/// Encodes samples as PCM16 mono 16 kHz, clamping to `[-1, 1)`.
pub fn encode_wav(samples: &[f32]) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    fs::write(path, encode_wav(samples)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
