//! f0 and voicing extraction by normalized autocorrelation.
//!
//! Each frame is analyzed over a 40 ms window centered on the frame. The
//! window is mean-subtracted and the normalized autocorrelation
//! r(tau) = sum(x_t x_{t+tau}) / sqrt(sum(x_t^2) sum(x_{t+tau}^2)) is scanned
//! over lags covering 50..500 Hz. A frame is voiced when the best peak
//! reaches `VOICING_PEAK_THRESHOLD`; the period is the smallest local
//! maximum whose height is close to the best peak, which suppresses octave
//! errors, refined by parabolic interpolation. Voicing flags get a 3-frame
//! median smoothing pass. Unvoiced frames carry the 1 Hz sentinel so that
//! log f0 stays non-negative.

use super::{FrameSpec, Waveform, SAMPLE_RATE};
use crate::Result;

/// Sentinel f0 for unvoiced/silent frames.
pub const F0_UNVOICED_HZ: f32 = 1.0;
/// Lower edge of the voiced search range.
pub const F0_MIN_HZ: f32 = 50.0;
/// Upper edge of the voiced search range.
pub const F0_MAX_HZ: f32 = 500.0;

/// Normalized-autocorrelation peak required to call a frame voiced.
const VOICING_PEAK_THRESHOLD: f64 = 0.45;
/// A candidate local maximum must reach this fraction of the global peak to
/// be preferred as the (smaller-lag) fundamental period.
const PEAK_TOLERANCE: f64 = 0.85;
/// Analysis window length in milliseconds.
const WINDOW_MS: usize = 40;

/// Per-frame f0 (Hz) and voicing flags for every analysis frame of `w`.
pub fn extract_f0(w: &Waveform, spec: &FrameSpec) -> Result<(Vec<f32>, Vec<bool>)> {
    spec.validate()?;
    let k = spec.frame_count(w.len())?;
    let shift = spec.shift_samples();
    let flen = spec.frame_length_samples();
    let half_win = WINDOW_MS * SAMPLE_RATE as usize / 1000 / 2;

    let min_lag = (SAMPLE_RATE as f64 / F0_MAX_HZ as f64).floor() as usize; // 32
    let max_lag = (SAMPLE_RATE as f64 / F0_MIN_HZ as f64).ceil() as usize; // 320

    let mut f0 = vec![F0_UNVOICED_HZ; k];
    let mut voiced = vec![false; k];

    for t in 0..k {
        let center = t * shift + flen / 2;
        let lo = center.saturating_sub(half_win);
        let hi = (center + half_win).min(w.len());
        let window: Vec<f64> = w.samples[lo..hi].iter().map(|&s| s as f64).collect();
        if window.len() < 2 * min_lag {
            continue;
        }
        if let Some(hz) = pitch_of_window(&window, min_lag, max_lag.min(window.len() / 2)) {
            f0[t] = hz as f32;
            voiced[t] = true;
        }
    }

    median_smooth_voicing(&mut voiced, &mut f0);
    Ok((f0, voiced))
}

fn pitch_of_window(window: &[f64], min_lag: usize, max_lag: usize) -> Option<f64> {
    if max_lag <= min_lag {
        return None;
    }
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let x: Vec<f64> = window.iter().map(|v| v - mean).collect();
    let n = x.len();

    // prefix sums of x^2 so per-lag energies are O(1)
    let mut energy = vec![0.0f64; n + 1];
    for i in 0..n {
        energy[i + 1] = energy[i] + x[i] * x[i];
    }

    let mut nacf = vec![0.0f64; max_lag + 1];
    for (lag, r) in nacf.iter_mut().enumerate().take(max_lag + 1).skip(min_lag) {
        let m = n - lag;
        let mut num = 0.0;
        for i in 0..m {
            num += x[i] * x[i + lag];
        }
        let e0 = energy[m];
        let e1 = energy[lag + m] - energy[lag];
        let denom = (e0 * e1).sqrt();
        *r = if denom > 1e-12 { num / denom } else { 0.0 };
    }

    let best = nacf[min_lag..=max_lag]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if best < VOICING_PEAK_THRESHOLD {
        return None;
    }

    // Smallest strong local maximum wins, so multiples of the true period
    // (equally high peaks at 2P, 3P, ...) do not halve the estimate.
    let floor = VOICING_PEAK_THRESHOLD.max(PEAK_TOLERANCE * best);
    let mut chosen = None;
    for lag in min_lag..=max_lag {
        let r = nacf[lag];
        let left = if lag > min_lag { nacf[lag - 1] } else { f64::MIN };
        let right = if lag < max_lag { nacf[lag + 1] } else { f64::MIN };
        if r >= floor && r >= left && r >= right {
            chosen = Some(lag);
            break;
        }
    }
    let lag = chosen?;

    // Parabolic refinement around the integer peak.
    let refined = if lag > min_lag && lag < max_lag {
        let (a, b, c) = (nacf[lag - 1], nacf[lag], nacf[lag + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            lag as f64 + 0.5 * (a - c) / denom
        } else {
            lag as f64
        }
    } else {
        lag as f64
    };

    let hz = SAMPLE_RATE as f64 / refined;
    Some(hz.clamp(F0_MIN_HZ as f64, F0_MAX_HZ as f64))
}

/// 3-frame median (majority) vote over voicing, dropping f0 values for
/// frames that flip to unvoiced and borrowing a neighbor's f0 for frames
/// that flip to voiced.
fn median_smooth_voicing(voiced: &mut [bool], f0: &mut [f32]) {
    let k = voiced.len();
    if k < 3 {
        return;
    }
    let orig = voiced.to_vec();
    let orig_f0 = f0.to_vec();
    for t in 1..k - 1 {
        let votes = orig[t - 1] as u8 + orig[t] as u8 + orig[t + 1] as u8;
        let v = votes >= 2;
        if v != orig[t] {
            if v {
                f0[t] = if orig[t - 1] { orig_f0[t - 1] } else { orig_f0[t + 1] };
            } else {
                f0[t] = F0_UNVOICED_HZ;
            }
            voiced[t] = v;
        }
    }
}
