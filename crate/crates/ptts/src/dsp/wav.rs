//! RIFF/WAVE PCM16 mono I/O at 16 kHz. Other rates, channel counts, or
//! sample formats are rejected rather than converted.

use std::fs;
use std::path::Path;

use super::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

/// Read a 16-bit PCM mono WAV file at 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let data = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));

    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(data("not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut samples: Option<Vec<f32>> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(data("truncated chunk"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(data("fmt chunk too small"));
                }
                let f = u16::from_le_bytes(bytes[body..body + 2].try_into().unwrap());
                let ch = u16::from_le_bytes(bytes[body + 2..body + 4].try_into().unwrap());
                let rate = u32::from_le_bytes(bytes[body + 4..body + 8].try_into().unwrap());
                let bits = u16::from_le_bytes(bytes[body + 14..body + 16].try_into().unwrap());
                fmt = Some((f, ch, rate, bits));
            }
            b"data" => {
                let (f, ch, rate, bits) =
                    fmt.ok_or_else(|| data("data chunk before fmt chunk"))?;
                if f != 1 || bits != 16 {
                    return Err(data(&format!(
                        "unsupported encoding (format {f}, {bits}-bit); only PCM16 is accepted"
                    )));
                }
                if ch != 1 {
                    return Err(data(&format!("{ch} channels; only mono is accepted")));
                }
                if rate != SAMPLE_RATE {
                    return Err(data(&format!(
                        "sample rate {rate} Hz; only {SAMPLE_RATE} Hz is accepted"
                    )));
                }
                let n = size / 2;
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let v =
                        i16::from_le_bytes(bytes[body + 2 * i..body + 2 * i + 2].try_into().unwrap());
                    out.push(v as f32 / 32768.0);
                }
                samples = Some(out);
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body + size + (size & 1);
    }

    let samples = samples.ok_or_else(|| data("missing data chunk"))?;
    Waveform::new(samples, SAMPLE_RATE)
}

/// Write a waveform as 16-bit PCM mono at 16 kHz, clamping samples to
/// [-1, 1] before quantization.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let n = w.samples.len();
    let data_size = (n * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + n * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_size).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    bytes.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_size.to_le_bytes());
    for &s in &w.samples {
        let clamped = s.clamp(-1.0, 1.0);
        let q = (clamped * 32767.0).round() as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f32> = (0..1000)
            .map(|i| ((i as f32 * 0.05).sin() * 0.5 * 32767.0).round() / 32767.0)
            .collect();
        let w = Waveform::new(samples.clone(), SAMPLE_RATE).unwrap();
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.sample_rate, SAMPLE_RATE);
        assert_eq!(r.len(), 1000);
        for (a, b) in r.samples.iter().zip(&samples) {
            // one quantization step of slack; inputs were pre-quantized
            assert!((a - b).abs() < 1.0 / 32000.0, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        // hand-build a 22050 Hz header
        let mut w = Waveform::new(vec![0.0; 10], SAMPLE_RATE).unwrap();
        w.sample_rate = SAMPLE_RATE; // keep constructor happy
        write_wav(&path, &w).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[24..28].copy_from_slice(&22050u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("22050"), "{err}");
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let w = Waveform::new(vec![0.0; 10], SAMPLE_RATE).unwrap();
        write_wav(&path, &w).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[22..24].copy_from_slice(&2u16.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(read_wav(&path).is_err());
    }
}
