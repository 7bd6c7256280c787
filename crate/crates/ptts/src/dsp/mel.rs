//! Mel-spectrogram analysis: periodic Hann window, zero-padded 2048-point
//! DFT magnitude spectrum, and an 80-band triangular filterbank over
//! 0..8 kHz. Values are floored at `MEL_FLOOR` so the logarithm is always
//! finite; analysis runs in f64 and is cast to f32 at the end.

use std::sync::OnceLock;

use ndarray::Array2;

use super::{FrameSpec, Waveform};
use crate::Result;

/// Linear-domain floor applied to every mel value.
pub const MEL_FLOOR: f32 = 1e-5;

/// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / N)).
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank as an (n_mels x n_bins) matrix. Filter edges
/// are mel-spaced between 0 Hz and `fmax`; triangles are linear in Hz with
/// unit peaks and apply to magnitude spectra.
pub fn mel_filterbank(n_mels: usize, dft_size: usize, sample_rate: f64, fmax: f64) -> Array2<f64> {
    let n_bins = dft_size / 2 + 1;
    let mel_max = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * sample_rate / dft_size as f64;
            let w = if f >= lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

/// Windowed DFT basis for the fixed 400-sample frame zero-padded to 2048
/// points: (frame_len x n_bins) cosine and sine matrices with the Hann
/// window folded in.
fn dft_basis() -> &'static (Array2<f64>, Array2<f64>) {
    static BASIS: OnceLock<(Array2<f64>, Array2<f64>)> = OnceLock::new();
    BASIS.get_or_init(|| {
        let spec = FrameSpec::default();
        let flen = spec.frame_length_samples();
        let n_bins = spec.dft_size / 2 + 1;
        let win = hann_window(flen);
        let mut cos_m = Array2::zeros((flen, n_bins));
        let mut sin_m = Array2::zeros((flen, n_bins));
        for n in 0..flen {
            for b in 0..n_bins {
                let phase = 2.0 * std::f64::consts::PI * b as f64 * n as f64 / spec.dft_size as f64;
                cos_m[[n, b]] = win[n] * phase.cos();
                sin_m[[n, b]] = win[n] * phase.sin();
            }
        }
        (cos_m, sin_m)
    })
}

fn filterbank_default() -> &'static Array2<f64> {
    static FB: OnceLock<Array2<f64>> = OnceLock::new();
    FB.get_or_init(|| {
        let spec = FrameSpec::default();
        mel_filterbank(spec.mel_bins, spec.dft_size, 16_000.0, 8_000.0)
    })
}

/// Magnitude spectra (K x n_bins) of all frames of `w`, f64.
pub(crate) fn magnitude_spectrogram(w: &Waveform, spec: &FrameSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let k = spec.frame_count(w.len())?;
    let flen = spec.frame_length_samples();
    let shift = spec.shift_samples();
    let mut frames = Array2::zeros((k, flen));
    for t in 0..k {
        for n in 0..flen {
            frames[[t, n]] = w.samples[t * shift + n] as f64;
        }
    }
    let (cos_m, sin_m) = dft_basis();
    let re = frames.dot(cos_m);
    let im = frames.dot(sin_m);
    let mut mag = re;
    mag.zip_mut_with(&im, |r, &i| *r = (*r * *r + i * i).sqrt());
    Ok(mag)
}

/// 80-band mel spectrogram of every frame of `w`, floored at `MEL_FLOOR`.
pub fn compute_mel_spectrogram(w: &Waveform, spec: &FrameSpec) -> Result<Array2<f32>> {
    let mag = magnitude_spectrogram(w, spec)?;
    let fb = filterbank_default();
    let mel = mag.dot(&fb.t());
    Ok(mel.mapv(|v| (v as f32).max(MEL_FLOOR)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;

    fn sine(freq: f64, amp: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let samples = (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect();
        Waveform::new(samples, SAMPLE_RATE).unwrap()
    }

    /// Independent oracle: naive per-bin DFT plus explicit triangle weights.
    fn mel_oracle(w: &Waveform, spec: &FrameSpec) -> Array2<f64> {
        let flen = spec.frame_length_samples();
        let shift = spec.shift_samples();
        let k = (w.len() - flen) / shift + 1;
        let n_bins = spec.dft_size / 2 + 1;
        let win: Vec<f64> = (0..flen)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / flen as f64).cos()))
            .collect();
        let fb = mel_filterbank(spec.mel_bins, spec.dft_size, 16_000.0, 8_000.0);
        let mut out = Array2::zeros((k, spec.mel_bins));
        for t in 0..k {
            let mut mags = vec![0.0f64; n_bins];
            for (b, m) in mags.iter_mut().enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for n in 0..flen {
                    let x = w.samples[t * shift + n] as f64 * win[n];
                    let ph = 2.0 * std::f64::consts::PI * b as f64 * n as f64
                        / spec.dft_size as f64;
                    re += x * ph.cos();
                    im += x * ph.sin();
                }
                *m = (re * re + im * im).sqrt();
            }
            for mb in 0..spec.mel_bins {
                let mut acc = 0.0;
                for (b, &m) in mags.iter().enumerate() {
                    acc += fb[[mb, b]] * m;
                }
                out[[t, mb]] = acc.max(MEL_FLOOR as f64);
            }
        }
        out
    }

    #[test]
    fn one_second_gives_196_frames_of_80() {
        let w = sine(440.0, 0.5, 1.0);
        let mel = compute_mel_spectrogram(&w, &FrameSpec::default()).unwrap();
        assert_eq!(mel.dim(), (196, 80));
    }

    #[test]
    fn zero_waveform_is_all_floor() {
        let w = Waveform::new(vec![0.0; 8000], SAMPLE_RATE).unwrap();
        let mel = compute_mel_spectrogram(&w, &FrameSpec::default()).unwrap();
        assert!(mel.iter().all(|&v| v == MEL_FLOOR));
    }

    #[test]
    fn too_short_waveform_errors() {
        let w = Waveform::new(vec![0.1; 399], SAMPLE_RATE).unwrap();
        let err = compute_mel_spectrogram(&w, &FrameSpec::default()).unwrap_err();
        assert!(err.to_string().contains("too short"));
    }

    #[test]
    fn pure_sine_peak_bin_is_stable() {
        let w = sine(1000.0, 0.5, 0.5);
        let mel = compute_mel_spectrogram(&w, &FrameSpec::default()).unwrap();
        let argmax = |row: ndarray::ArrayView1<f32>| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let first = argmax(mel.row(0));
        for t in 0..mel.nrows() {
            assert_eq!(argmax(mel.row(t)), first, "frame {t}");
        }
    }

    #[test]
    fn matches_naive_oracle_on_random_signals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let spec = FrameSpec::default();
        for _ in 0..10 {
            let n = 400 + rng.gen_range(0..400);
            let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let w = Waveform::new(samples, SAMPLE_RATE).unwrap();
            let got = compute_mel_spectrogram(&w, &spec).unwrap();
            let want = mel_oracle(&w, &spec);
            assert_eq!(got.nrows(), want.nrows());
            for (g, e) in got.iter().zip(want.iter()) {
                let rel = ((*g as f64) - e).abs() / e.abs().max(1e-12);
                assert!(rel < 1e-6, "mel mismatch: got {g}, want {e}, rel {rel}");
            }
        }
    }
}
