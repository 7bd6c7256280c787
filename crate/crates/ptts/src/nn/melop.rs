//! Differentiable log-mel spectrogram for the cepstral-domain vocoder loss.
//!
//! Mirrors the analysis front-end (400-sample periodic Hann frames every 80
//! samples, 2048-point DFT magnitude, 80 triangular mel bands, 1e-5 floor,
//! then log) as a tape operation over a (T x 1) waveform node. The floor
//! cuts the gradient for bins at or below it, which also guards the
//! magnitude derivative at zero.

use std::sync::Arc;

use ndarray::Array2;

use super::graph::{Graph, NodeId};
use super::Real;
use crate::dsp;
use crate::{Error, Result};

/// Precomputed windowed-DFT and filterbank matrices in the graph scalar
/// type. Build once and share across steps.
pub struct MelBasis<F: Real> {
    /// (frame_len x n_bins) cosine basis with the Hann window folded in.
    cos_m: Array2<F>,
    /// (frame_len x n_bins) sine basis with the Hann window folded in.
    sin_m: Array2<F>,
    /// (n_bins x n_mels) filterbank, transposed for right-multiplication.
    fb_t: Array2<F>,
    frame_len: usize,
    shift: usize,
    floor: F,
}

impl<F: Real> MelBasis<F> {
    pub fn new() -> Arc<Self> {
        let spec = dsp::FrameSpec::default();
        let frame_len = spec.frame_length_samples();
        let n_bins = spec.dft_size / 2 + 1;
        let win = dsp::hann_window(frame_len);
        let mut cos_m = Array2::zeros((frame_len, n_bins));
        let mut sin_m = Array2::zeros((frame_len, n_bins));
        for n in 0..frame_len {
            for b in 0..n_bins {
                let phase =
                    2.0 * std::f64::consts::PI * b as f64 * n as f64 / spec.dft_size as f64;
                cos_m[[n, b]] = F::from_f64(win[n] * phase.cos());
                sin_m[[n, b]] = F::from_f64(win[n] * phase.sin());
            }
        }
        let fb = dsp::mel_filterbank(spec.mel_bins, spec.dft_size, 16_000.0, 8_000.0);
        let fb_t = Array2::from_shape_fn((n_bins, spec.mel_bins), |(b, m)| F::from_f64(fb[[m, b]]));
        Arc::new(MelBasis {
            cos_m,
            sin_m,
            fb_t,
            frame_len,
            shift: spec.shift_samples(),
            floor: F::from_f64(dsp::MEL_FLOOR as f64),
        })
    }

    /// Frames for `n` samples, matching the analysis front-end.
    pub fn frame_count(&self, n: usize) -> Result<usize> {
        if n < self.frame_len {
            return Err(Error::Data(format!(
                "waveform too short for log-mel: {n} samples"
            )));
        }
        Ok((n - self.frame_len) / self.shift + 1)
    }
}

pub(super) fn log_mel_op<F: Real>(
    g: &mut Graph<F>,
    x: NodeId,
    basis: &Arc<MelBasis<F>>,
) -> Result<NodeId> {
    let vx = g.value_arc(x);
    if vx.ncols() != 1 {
        return Err(Error::Shape(format!(
            "log_mel expects a (T x 1) waveform column, got {:?}",
            vx.dim()
        )));
    }
    let n = vx.nrows();
    let k = basis.frame_count(n)?;
    let (frame_len, shift) = (basis.frame_len, basis.shift);

    let mut frames: Array2<F> = Array2::zeros((k, frame_len));
    for t in 0..k {
        for i in 0..frame_len {
            frames[[t, i]] = vx[[t * shift + i, 0]];
        }
    }
    let re = frames.dot(&basis.cos_m);
    let im = frames.dot(&basis.sin_m);
    let mut mag = re.clone();
    mag.zip_mut_with(&im, |r, &i| *r = (*r * *r + i * i).sqrt());
    let mel = mag.dot(&basis.fb_t);
    let floor = basis.floor;
    let out = mel.mapv(|v| v.max(floor).ln());

    let wants = g.wants_any(&[x]);
    let basis = Arc::clone(basis);
    let backward = move |grad: &Array2<F>, emit: &mut dyn FnMut(NodeId, Array2<F>)| {
        // d log(max(mel, floor)) = [mel > floor] / mel
        let mut dmel = grad.clone();
        dmel.zip_mut_with(&mel, |d, &v| {
            *d = if v > floor { *d / v } else { F::zero() };
        });
        let dmag_raw = dmel.dot(&basis.fb_t.t());
        // d|X| needs |X| > 0; zero bins get zero gradient
        let mut dre = dmag_raw.clone();
        dre.zip_mut_with(&mag, |d, &m| {
            if m <= F::zero() {
                *d = F::zero()
            } else {
                *d = *d / m
            }
        });
        let mut dim_ = dre.clone();
        dre.zip_mut_with(&re, |d, &r| *d = *d * r);
        dim_.zip_mut_with(&im, |d, &i| *d = *d * i);
        let dframes = dre.dot(&basis.cos_m.t()) + dim_.dot(&basis.sin_m.t());
        let mut dx = Array2::zeros((n, 1));
        for t in 0..k {
            for i in 0..frame_len {
                dx[[t * shift + i, 0]] = dx[[t * shift + i, 0]] + dframes[[t, i]];
            }
        }
        emit(x, dx);
    };

    Ok(g.push_op(
        out,
        wants,
        Some(Box::new(move |grad, emit| backward(grad, emit))),
    ))
}
