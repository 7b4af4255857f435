//! Minimal RIFF/WAVE reader: 16-bit PCM little-endian, mono or stereo
//! (stereo is averaged down to mono).

use anyhow::{bail, Context, Result};
use std::path::Path;

pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn u16_at(data: &[u8], at: usize) -> Result<u16> {
    Ok(u16::from_le_bytes(
        data.get(at..at + 2).context("truncated WAV")?.try_into()?,
    ))
}

fn u32_at(data: &[u8], at: usize) -> Result<u32> {
    Ok(u32::from_le_bytes(
        data.get(at..at + 4).context("truncated WAV")?.try_into()?,
    ))
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if data.len() < 12 || &data[0..4] != b"RIFF" || &data[8..12] != b"WAVE" {
        bail!("{} is not a RIFF/WAVE file", path.display());
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut payload: Option<&[u8]> = None;
    while pos + 8 <= data.len() {
        let id = &data[pos..pos + 4];
        let size = u32_at(&data, pos + 4)? as usize;
        let body = data
            .get(pos + 8..pos + 8 + size)
            .context("truncated WAV chunk")?;
        match id {
            b"fmt " => {
                if size < 16 {
                    bail!("malformed fmt chunk");
                }
                format = Some((
                    u16_at(body, 0)?,
                    u16_at(body, 2)?,
                    u32_at(body, 4)?,
                    u16_at(body, 14)?,
                ));
            }
            b"data" => payload = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let (tag, channels, rate, bits) = format.context("WAV has no fmt chunk")?;
    if tag != 1 {
        bail!("unsupported WAV encoding: format tag {tag} (only PCM = 1 is supported)");
    }
    if bits != 16 {
        bail!("unsupported WAV encoding: {bits}-bit samples (only 16-bit PCM is supported)");
    }
    if channels == 0 || channels > 2 {
        bail!("unsupported channel count {channels} (mono or stereo only)");
    }
    let body = payload.context("WAV has no data chunk")?;
    let frame_bytes = 2 * channels as usize;
    let frames = body.len() / frame_bytes;
    let mut samples = Vec::with_capacity(frames);
    for i in 0..frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let at = i * frame_bytes + 2 * c;
            let v = i16::from_le_bytes([body[at], body[at + 1]]);
            acc += v as f64 / 32768.0;
        }
        samples.push(acc / channels as f64);
    }
    Ok(Audio {
        samples,
        sample_rate: rate,
    })
}
