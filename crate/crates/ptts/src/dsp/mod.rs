//! Deterministic DSP front-end.
//!
//! Everything here is a pure function over immutable inputs: waveform I/O,
//! mel-spectrogram analysis, f0 and band-aperiodicity extraction, and
//! excitation-signal synthesis. All analysis runs at a fixed 16 kHz sample
//! rate with 25 ms frames hopped every 5 ms.

mod aperiodicity;
pub mod cache;
mod excitation;
mod mel;
mod pitch;
pub mod wav;

pub use aperiodicity::estimate_bap;
pub use excitation::generate_excitation;
pub use mel::{compute_mel_spectrogram, hann_window, mel_filterbank, MEL_FLOOR};
pub use pitch::{extract_f0, F0_MAX_HZ, F0_MIN_HZ, F0_UNVOICED_HZ};

use crate::{Error, Result};

/// Fixed sample rate of every waveform in the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono waveform at 16 kHz with amplitudes in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Wrap samples, validating the fixed sample rate and finiteness.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Data(format!(
                "unsupported sample rate {sample_rate} Hz (expected {SAMPLE_RATE})"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("waveform contains non-finite samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration of the waveform in seconds.
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frame geometry shared by every analysis stage.
///
/// 25 ms frames every 5 ms at 16 kHz give 400-sample frames hopped by
/// 80 samples, i.e. 200 frames per second; spectra use a 2048-point DFT and
/// an 80-band mel filterbank over 0..8 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub frame_length_ms: u32,
    pub frameshift_ms: u32,
    pub dft_size: usize,
    pub mel_bins: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            frame_length_ms: 25,
            frameshift_ms: 5,
            dft_size: 2048,
            mel_bins: 80,
        }
    }
}

impl FrameSpec {
    /// Samples per analysis frame (400).
    pub fn frame_length_samples(&self) -> usize {
        (SAMPLE_RATE as usize * self.frame_length_ms as usize) / 1000
    }

    /// Samples per hop (80).
    pub fn shift_samples(&self) -> usize {
        (SAMPLE_RATE as usize * self.frameshift_ms as usize) / 1000
    }

    /// Number of analysis frames for a waveform of `n` samples.
    pub fn frame_count(&self, n: usize) -> Result<usize> {
        let flen = self.frame_length_samples();
        if n < flen {
            return Err(Error::Data(format!(
                "waveform too short: {n} samples, need at least {flen} for one frame"
            )));
        }
        Ok((n - flen) / self.shift_samples() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length_ms != 25
            || self.frameshift_ms != 5
            || self.dft_size != 2048
            || self.mel_bins != 80
        {
            return Err(Error::Config(format!("unsupported frame spec {self:?}")));
        }
        Ok(())
    }
}

/// Per-frame acoustic targets: f0 (Hz, 1 Hz marks unvoiced), band
/// aperiodicity in [0, 1], voicing flags, and the 80-band mel spectrogram.
#[derive(Debug, Clone)]
pub struct AcousticTrack {
    pub f0: Vec<f32>,
    pub bap: Vec<f32>,
    pub voiced: Vec<bool>,
    /// Row-major K x 80, every entry >= `MEL_FLOOR`.
    pub mel: ndarray::Array2<f32>,
}

impl AcousticTrack {
    pub fn n_frames(&self) -> usize {
        self.f0.len()
    }

    /// Check the cross-array length invariant.
    pub fn validate(&self) -> Result<()> {
        let k = self.f0.len();
        if self.bap.len() != k || self.voiced.len() != k || self.mel.nrows() != k {
            return Err(Error::Shape(format!(
                "acoustic track arrays disagree: f0 {k}, bap {}, voiced {}, mel {}",
                self.bap.len(),
                self.voiced.len(),
                self.mel.nrows()
            )));
        }
        for (i, (&f, &v)) in self.f0.iter().zip(&self.voiced).enumerate() {
            if v && !(F0_MIN_HZ..=F0_MAX_HZ).contains(&f) {
                return Err(Error::Data(format!(
                    "voiced frame {i} carries out-of-range f0 {f} Hz"
                )));
            }
            if !v && f != F0_UNVOICED_HZ {
                return Err(Error::Data(format!(
                    "unvoiced frame {i} carries f0 {f} Hz instead of the 1 Hz sentinel"
                )));
            }
        }
        Ok(())
    }
}

/// Sample-rate excitation driving the vocoder: sawtooth pulses on voiced
/// spans plus per-frame Gaussian noise.
#[derive(Debug, Clone)]
pub struct ExcitationSignal {
    pub samples: Vec<f32>,
}

impl ExcitationSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Extract the full acoustic track (mel, f0, voicing, BAP) from a waveform.
pub fn analyze(w: &Waveform, spec: &FrameSpec) -> Result<AcousticTrack> {
    let mel = compute_mel_spectrogram(w, spec)?;
    let (f0, voiced) = extract_f0(w, spec)?;
    let bap = estimate_bap(w, &f0, &voiced, spec)?;
    let track = AcousticTrack {
        f0,
        bap,
        voiced,
        mel,
    };
    track.validate()?;
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_one_second() {
        let spec = FrameSpec::default();
        assert_eq!(spec.frame_count(16_000).unwrap(), 196);
    }

    #[test]
    fn frame_count_too_short() {
        let spec = FrameSpec::default();
        let err = spec.frame_count(399).unwrap_err();
        assert!(err.to_string().contains("too short"));
    }

    #[test]
    fn rejects_foreign_sample_rate() {
        let err = Waveform::new(vec![0.0; 100], 22_050).unwrap_err();
        assert!(err.to_string().contains("22050"));
    }

    #[test]
    fn analyze_consistent_frame_counts() {
        let w = crate::toy::harmonic_tone(120.0, 0.3, 0.4, 8);
        let spec = FrameSpec::default();
        let track = analyze(&w, &spec).unwrap();
        let k = spec.frame_count(w.len()).unwrap();
        assert_eq!(track.n_frames(), k);
        assert_eq!(track.bap.len(), k);
        assert_eq!(track.voiced.len(), k);
        assert_eq!(track.mel.nrows(), k);
        assert_eq!(track.mel.ncols(), 80);
    }
}
