//! Excitation-signal synthesis.
//!
//! Voiced frames contribute a sawtooth pulse train: each pulse is a linear
//! ramp from -1 to +1 over round(sample_rate / f0) samples, and pulses run
//! across frame boundaries so the phase is continuous within a voiced span.
//! Every frame additionally receives Gaussian noise whose standard deviation
//! is that frame's BAP value; unvoiced frames (f0 at the 1 Hz sentinel)
//! contribute noise only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ExcitationSignal, FrameSpec, F0_UNVOICED_HZ, SAMPLE_RATE};
use crate::{Error, Result};

/// Build the excitation for per-frame `f0` and `bap`, `spec.shift_samples()`
/// samples per frame. Reproducible for a given `seed`.
pub fn generate_excitation(
    f0: &[f32],
    bap: &[f32],
    spec: &FrameSpec,
    seed: u64,
) -> Result<ExcitationSignal> {
    spec.validate()?;
    if f0.len() != bap.len() {
        return Err(Error::Shape(format!(
            "f0 has {} frames but bap has {}",
            f0.len(),
            bap.len()
        )));
    }
    for (t, &hz) in f0.iter().enumerate() {
        if !(hz.is_finite() && hz >= 1.0) {
            return Err(Error::Data(format!(
                "frame {t}: f0 {hz} Hz is below the 1 Hz sentinel"
            )));
        }
    }
    for (t, &b) in bap.iter().enumerate() {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Data(format!("frame {t}: bap {b} outside [0, 1]")));
        }
    }

    let shift = spec.shift_samples();
    let k = f0.len();
    let mut samples = vec![0.0f32; k * shift];

    // Sawtooth pulse train over voiced spans. `pulse_pos`/`pulse_len`
    // persist across frames; leaving a voiced span resets them.
    let mut pulse_pos: usize = 0;
    let mut pulse_len: usize = 0;
    for t in 0..k {
        let hz = f0[t];
        let voiced = hz > F0_UNVOICED_HZ;
        if !voiced {
            pulse_pos = 0;
            pulse_len = 0;
            continue;
        }
        for i in 0..shift {
            if pulse_len == 0 {
                pulse_len = (SAMPLE_RATE as f64 / hz as f64).round().max(1.0) as usize;
                pulse_pos = 0;
            }
            samples[t * shift + i] = (2.0 * pulse_pos as f64 / pulse_len as f64 - 1.0) as f32;
            pulse_pos += 1;
            if pulse_pos >= pulse_len {
                pulse_pos = 0;
                pulse_len = 0; // next pulse picks up the then-current f0
            }
        }
    }

    // Per-frame Gaussian noise with std = bap, drawn in frame order.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..k {
        let std = bap[t];
        for i in 0..shift {
            let z: f64 = StandardNormal.sample(&mut rng);
            samples[t * shift + i] += (std as f64 * z) as f32;
        }
    }

    Ok(ExcitationSignal { samples })
}
