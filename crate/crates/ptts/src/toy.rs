//! Synthetic corpus generation for demos and tests.
//!
//! Builds small, fully deterministic corpora in the standard layout
//! (`wav/<id>.wav`, `lab/<id>.lab`, `txt/<id>.txt`). Each phoneme symbol
//! has a fixed acoustic recipe (harmonic stack, noise, or silence) and a
//! context-dependent duration, so durations, f0 contours, and spectra are
//! all learnable functions of the phoneme sequence.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{wav, Waveform, SAMPLE_RATE};
use crate::{Error, Result};

/// How a toy phoneme sounds.
#[derive(Debug, Clone, Copy)]
enum Recipe {
    Silence,
    /// Harmonic stack: base f0 in Hz, amplitude, spectral tilt (harmonic h
    /// is scaled by 1 / h^tilt).
    Voiced { f0: f64, amp: f64, tilt: f64 },
    /// Quiet white noise.
    Noise { amp: f64 },
}

/// Symbol palette: name, recipe, base duration in ms.
#[rustfmt::skip]
const PALETTE: &[(&str, Recipe, u32)] = &[
    ("sil", Recipe::Silence, 100),
    ("a", Recipe::Voiced { f0: 115.0, amp: 0.38, tilt: 1.0 }, 150),
    ("i", Recipe::Voiced { f0: 160.0, amp: 0.32, tilt: 1.6 }, 120),
    ("u", Recipe::Voiced { f0: 135.0, amp: 0.34, tilt: 2.2 }, 130),
    ("e", Recipe::Voiced { f0: 185.0, amp: 0.33, tilt: 1.3 }, 140),
    ("o", Recipe::Voiced { f0: 100.0, amp: 0.36, tilt: 1.8 }, 160),
    ("n", Recipe::Voiced { f0: 105.0, amp: 0.22, tilt: 2.8 }, 90),
    ("s", Recipe::Noise { amp: 0.05 }, 110),
];

fn palette_index(symbol: &str) -> usize {
    PALETTE
        .iter()
        .position(|(s, _, _)| *s == symbol)
        .expect("toy symbol")
}

/// Context-dependent duration: base plus a deterministic tweak from the
/// neighboring symbols, always a multiple of 5 ms.
fn duration_ms(symbols: &[&str], idx: usize) -> u32 {
    let (_, _, base) = PALETTE[palette_index(symbols[idx])];
    let left = if idx > 0 {
        palette_index(symbols[idx - 1])
    } else {
        0
    };
    let right = if idx + 1 < symbols.len() {
        palette_index(symbols[idx + 1])
    } else {
        0
    };
    base + 5 * ((left + 2 * right) % 4) as u32
}

/// One generated utterance: id, phoneme symbols, per-phoneme durations (ms).
#[derive(Debug, Clone)]
pub struct ToyUtterance {
    pub id: String,
    pub symbols: Vec<String>,
    pub durations_ms: Vec<u32>,
}

impl ToyUtterance {
    /// Whitespace-joined IPA-style text line.
    pub fn text(&self) -> String {
        self.symbols.join(" ")
    }
}

/// Parameters of a generated corpus.
#[derive(Debug, Clone, Copy)]
pub struct ToyCorpusSpec {
    pub n_utterances: usize,
    /// Non-silence phonemes per utterance (a leading and trailing `sil`
    /// are always added).
    pub inner_phonemes: usize,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        ToyCorpusSpec {
            n_utterances: 5,
            inner_phonemes: 4,
            seed: 1234,
        }
    }
}

/// Generate a corpus under `dir` and return the utterance list.
pub fn write_toy_corpus(dir: impl AsRef<Path>, spec: &ToyCorpusSpec) -> Result<Vec<ToyUtterance>> {
    let dir = dir.as_ref();
    for sub in ["wav", "lab", "txt"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // vowel-heavy draw: vowels twice, consonants once
    let inner_pool: Vec<&str> = vec!["a", "i", "u", "e", "o", "a", "i", "u", "e", "o", "n", "s"];

    let mut utts = Vec::new();
    for u in 0..spec.n_utterances {
        let mut symbols: Vec<&str> = vec!["sil"];
        for _ in 0..spec.inner_phonemes {
            symbols.push(inner_pool[rng.gen_range(0..inner_pool.len())]);
        }
        symbols.push("sil");

        let durations: Vec<u32> = (0..symbols.len())
            .map(|i| duration_ms(&symbols, i))
            .collect();
        let id = format!("utt{u:03}");
        let waveform = render(&symbols, &durations, spec.seed ^ (u as u64).wrapping_mul(0x9e37));

        wav::write_wav(dir.join("wav").join(format!("{id}.wav")), &waveform)?;

        let mut lab = String::new();
        let mut t = 0u32;
        for (s, d) in symbols.iter().zip(&durations) {
            lab.push_str(&format!("{s}\t{t}\t{}\n", t + d));
            t += d;
        }
        fs::write(dir.join("lab").join(format!("{id}.lab")), lab)
            .map_err(|e| Error::io(dir.join("lab"), e))?;
        fs::write(
            dir.join("txt").join(format!("{id}.txt")),
            symbols.join(" ") + "\n",
        )
        .map_err(|e| Error::io(dir.join("txt"), e))?;

        utts.push(ToyUtterance {
            id,
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            durations_ms: durations,
        });
    }
    Ok(utts)
}

/// Render an utterance waveform. Voiced phonemes carry a slight f0
/// declination inside the phoneme and across the utterance, so f0 is a
/// non-constant but deterministic function of position.
fn render(symbols: &[&str], durations_ms: &[u32], noise_seed: u64) -> Waveform {
    let total_ms: u32 = durations_ms.iter().sum();
    let total = (total_ms as usize * SAMPLE_RATE as usize) / 1000;
    let mut samples = vec![0.0f32; total];
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);

    let fade = SAMPLE_RATE as usize / 100; // 10 ms
    let mut start_ms = 0u32;
    for (&sym, &dur) in symbols.iter().zip(durations_ms) {
        let (_, recipe, _) = PALETTE[palette_index(sym)];
        let start = (start_ms as usize * SAMPLE_RATE as usize) / 1000;
        let len = (dur as usize * SAMPLE_RATE as usize) / 1000;
        let frac = start_ms as f64 / total_ms.max(1) as f64;
        let utterance_decl = 1.04 - 0.08 * frac;

        match recipe {
            Recipe::Silence => {}
            Recipe::Voiced { f0, amp, tilt } => {
                let n_harm = ((7000.0 / (f0 * 1.1)) as usize).clamp(3, 10);
                let mut phase = 0.0f64;
                for j in 0..len {
                    let local = j as f64 / len as f64;
                    let hz = f0 * utterance_decl * (1.0 - 0.05 * local);
                    phase += 2.0 * std::f64::consts::PI * hz / SAMPLE_RATE as f64;
                    let mut v = 0.0;
                    for h in 1..=n_harm {
                        v += (h as f64 * phase).sin() / (h as f64).powf(tilt);
                    }
                    samples[start + j] = (amp * v * edge_fade(j, len, fade)) as f32;
                }
            }
            Recipe::Noise { amp } => {
                for j in 0..len {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    samples[start + j] = (amp * v * edge_fade(j, len, fade)) as f32;
                }
            }
        }
        start_ms += dur;
    }

    // keep headroom in case harmonic stacks approach unity
    let peak = samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()));
    if peak > 0.99 {
        let k = 0.99 / peak;
        for s in &mut samples {
            *s *= k;
        }
    }
    Waveform::new(samples, SAMPLE_RATE).expect("toy render is finite")
}

fn edge_fade(j: usize, len: usize, fade: usize) -> f64 {
    let fade = fade.min(len / 2).max(1);
    if j < fade {
        0.5 * (1.0 - (std::f64::consts::PI * (fade - j) as f64 / fade as f64).cos())
    } else if j + fade > len {
        let r = len - j;
        0.5 * (1.0 - (std::f64::consts::PI * r as f64 / fade as f64).cos())
    } else {
        1.0
    }
}

/// Bandlimited harmonic stack at constant `f0` (test helper).
pub fn harmonic_tone(f0: f64, secs: f64, amp: f64, n_harmonics: usize) -> Waveform {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let mut v = 0.0;
            for h in 1..=n_harmonics {
                v += (2.0 * std::f64::consts::PI * h as f64 * f0 * t).sin() / h as f64;
            }
            (amp * v) as f32
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE).expect("finite")
}

/// Ideal sawtooth at constant `f0` (test helper).
pub fn sawtooth_wave(f0: f64, secs: f64, amp: f64) -> Waveform {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let period = SAMPLE_RATE as f64 / f0;
    let samples: Vec<f32> = (0..n)
        .map(|i| (amp * (2.0 * (i as f64 / period).fract() - 1.0)) as f32)
        .collect();
    Waveform::new(samples, SAMPLE_RATE).expect("finite")
}

/// Seeded uniform white noise (test helper).
pub fn seeded_noise(n: usize, amp: f32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-amp..amp)).collect();
    Waveform::new(samples, SAMPLE_RATE).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic() {
        let spec = ToyCorpusSpec::default();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let u1 = write_toy_corpus(d1.path(), &spec).unwrap();
        let u2 = write_toy_corpus(d2.path(), &spec).unwrap();
        assert_eq!(u1.len(), u2.len());
        for (a, b) in u1.iter().zip(&u2) {
            assert_eq!(a.symbols, b.symbols);
            assert_eq!(a.durations_ms, b.durations_ms);
            let wa = std::fs::read(d1.path().join("wav").join(format!("{}.wav", a.id))).unwrap();
            let wb = std::fs::read(d2.path().join("wav").join(format!("{}.wav", b.id))).unwrap();
            assert_eq!(wa, wb);
        }
    }

    #[test]
    fn durations_are_multiples_of_five() {
        let dir = tempfile::tempdir().unwrap();
        let utts = write_toy_corpus(dir.path(), &ToyCorpusSpec::default()).unwrap();
        for u in &utts {
            for &d in &u.durations_ms {
                assert_eq!(d % 5, 0);
                assert!(d > 0);
            }
        }
    }

    #[test]
    fn alignment_spans_the_audio_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let utts = write_toy_corpus(dir.path(), &ToyCorpusSpec::default()).unwrap();
        for u in &utts {
            let w = wav::read_wav(dir.path().join("wav").join(format!("{}.wav", u.id))).unwrap();
            let total_ms: u32 = u.durations_ms.iter().sum();
            assert_eq!(w.len(), total_ms as usize * 16);
        }
    }
}
