//! Dataset ingestion: phoneme inventories, alignment labels, waveforms, and
//! the cached training targets (durations, f0, BAP, mel).
//!
//! Corpus layout on disk: `wav/<id>.wav`, `lab/<id>.lab`, `txt/<id>.txt`.
//! Label files carry one `phoneme<TAB>start_ms<TAB>end_ms` row per phoneme;
//! boundaries are snapped to the 5 ms frame grid. The feature cache uses the
//! binary format of [`crate::dsp::cache`]; the inventory is a JSON file
//! mapping each symbol to its fixed 128-dimensional embedding plus the seed
//! that generated it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, cache, wav, AcousticTrack, FrameSpec, Waveform};
use crate::{Error, Result};

/// Embedding width of every phoneme symbol.
pub const EMBEDDING_DIM: usize = 128;

/// Fixed, non-learnable phoneme embeddings. Vectors are uniform in
/// [-0.5, 0.5], drawn per symbol from a stream derived from the recorded
/// seed, so the table does not depend on symbol insertion order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhonemeInventory {
    pub seed: u64,
    /// symbol -> 128 floats; BTreeMap keeps serialization deterministic.
    pub embeddings: BTreeMap<String, Vec<f32>>,
}

impl PhonemeInventory {
    /// Build an inventory for `symbols` from `seed`.
    pub fn build(symbols: impl IntoIterator<Item = String>, seed: u64) -> Result<Self> {
        let mut embeddings = BTreeMap::new();
        for sym in symbols {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(sym.as_bytes()));
            let vec: Vec<f32> = (0..EMBEDDING_DIM)
                .map(|_| rng.gen_range(-0.5f64..0.5) as f32)
                .collect();
            embeddings.insert(sym, vec);
        }
        let inv = PhonemeInventory { seed, embeddings };
        inv.check_injective()?;
        Ok(inv)
    }

    /// Symbols in their canonical (sorted) order; ids index this order.
    pub fn symbols(&self) -> Vec<&str> {
        self.embeddings.keys().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.embeddings.keys().position(|s| s == symbol)
    }

    pub fn symbol_of(&self, id: usize) -> Option<&str> {
        self.embeddings.keys().nth(id).map(|s| s.as_str())
    }

    /// Map a symbol sequence to ids, reporting every unknown symbol.
    pub fn ids_for(&self, symbols: &[String]) -> Result<Vec<usize>> {
        let unknown: Vec<&str> = symbols
            .iter()
            .filter(|s| !self.embeddings.contains_key(*s))
            .map(|s| s.as_str())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Data(format!(
                "unknown phoneme(s): {}",
                unknown.join(", ")
            )));
        }
        Ok(symbols
            .iter()
            .map(|s| self.id_of(s).expect("checked above"))
            .collect())
    }

    /// Embedding matrix (N x 128) for an id sequence.
    pub fn embed(&self, ids: &[usize]) -> Array2<f32> {
        let rows: Vec<&Vec<f32>> = self
            .embeddings
            .values()
            .collect::<Vec<_>>();
        let mut out = Array2::zeros((ids.len(), EMBEDDING_DIM));
        for (n, &id) in ids.iter().enumerate() {
            for (c, &v) in rows[id].iter().enumerate() {
                out[[n, c]] = v;
            }
        }
        out
    }

    /// Every pair of embeddings must differ by more than 1e-6 somewhere.
    pub fn check_injective(&self) -> Result<()> {
        let vecs: Vec<(&String, &Vec<f32>)> = self.embeddings.iter().collect();
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                let max_diff = vecs[i]
                    .1
                    .iter()
                    .zip(vecs[j].1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f32, f32::max);
                if max_diff <= 1e-6 {
                    return Err(Error::Data(format!(
                        "embedding collision between '{}' and '{}'",
                        vecs[i].0, vecs[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("inventory serialization: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inv: PhonemeInventory = serde_json::from_str(&json)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        for (sym, v) in &inv.embeddings {
            if v.len() != EMBEDDING_DIM {
                return Err(Error::Data(format!(
                    "{}: embedding for '{sym}' has {} dims",
                    path.display(),
                    v.len()
                )));
            }
        }
        inv.check_injective()?;
        Ok(inv)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One aligned utterance: phoneme symbols with ground-truth durations.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub phonemes: Vec<String>,
    pub durations_ms: Vec<f32>,
}

impl Utterance {
    pub fn total_ms(&self) -> f32 {
        self.durations_ms.iter().sum()
    }
}

/// Parse a label file: `phoneme<TAB>start_ms<TAB>end_ms` per line.
/// Boundaries snap to the 5 ms grid; labels must be contiguous and
/// strictly increasing.
pub fn load_alignment(path: impl AsRef<Path>) -> Result<Utterance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut phonemes = Vec::new();
    let mut durations_ms = Vec::new();
    let mut prev_end: Option<i64> = None;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let mut fields = line.split('\t');
        let (Some(sym), Some(start), Some(end)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(format!(
                "expected 'phoneme<TAB>start_ms<TAB>end_ms', got '{line}'"
            )));
        };
        let start: f64 = start
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad start time '{start}'")))?;
        let end: f64 = end
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad end time '{end}'")))?;

        // snap to the 5 ms grid
        let start = (start / 5.0).round() as i64 * 5;
        let end = (end / 5.0).round() as i64 * 5;
        if let Some(pe) = prev_end {
            if start < pe {
                return Err(parse_err(format!(
                    "non-monotone alignment: segment starts at {start} ms before previous end {pe} ms"
                )));
            }
            if start > pe {
                return Err(parse_err(format!(
                    "gap in alignment: previous segment ended at {pe} ms, next starts at {start} ms"
                )));
            }
        }
        if end <= start {
            return Err(parse_err(format!(
                "zero or negative duration after 5 ms snapping ({start}..{end})"
            )));
        }
        phonemes.push(sym.trim().to_string());
        durations_ms.push((end - start) as f32);
        prev_end = Some(end);
    }

    if phonemes.is_empty() {
        return Err(Error::Data(format!("{}: no labels", path.display())));
    }
    Ok(Utterance {
        id,
        phonemes,
        durations_ms,
    })
}

/// One cached training example.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub id: String,
    pub phoneme_ids: Vec<usize>,
    /// Ground-truth durations in ms (duration-loss targets).
    pub durations_ms: Vec<f32>,
    /// Per-phoneme frame counts reconciled so they sum to `track` frames.
    pub durations_frames: Vec<usize>,
    pub track: AcousticTrack,
    pub waveform: Waveform,
}

impl TrainingExample {
    pub fn n_frames(&self) -> usize {
        self.track.n_frames()
    }
}

/// An in-memory corpus: inventory plus cached examples.
pub struct Corpus {
    pub inventory: PhonemeInventory,
    pub examples: Vec<TrainingExample>,
}

/// Scan `corpus_dir` and list utterance ids that have a label file,
/// sorted for determinism.
pub fn list_utterance_ids(corpus_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let lab_dir = corpus_dir.as_ref().join("lab");
    let entries = fs::read_dir(&lab_dir).map_err(|e| Error::io(&lab_dir, e))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "lab") {
                p.file_stem().map(|s| s.to_string_lossy().into_owned())
            } else {
                None
            }
        })
        .collect();
    ids.sort();
    Ok(ids)
}

/// Reconcile per-phoneme frame counts with the analysis frame count `k`.
/// Each phoneme gets round(duration / 5 ms) frames (at least 1); the final
/// phoneme absorbs the remainder so the counts sum to `k` exactly (the
/// 25 ms analysis window makes `k` about 4 frames shorter than the label
/// total). Falls back to trimming earlier phonemes when the last one
/// cannot absorb the whole difference.
pub fn reconcile_frame_counts(durations_ms: &[f32], k: usize) -> Result<Vec<usize>> {
    let n = durations_ms.len();
    if k < n {
        return Err(Error::Data(format!(
            "cannot fit {n} phonemes into {k} frames"
        )));
    }
    let mut frames: Vec<usize> = durations_ms
        .iter()
        .map(|&ms| ((ms / 5.0).round() as usize).max(1))
        .collect();
    let mut total: isize = frames.iter().sum::<usize>() as isize;
    let want = k as isize;

    // absorb in the last phoneme first, then walk backwards if needed
    let mut idx = n - 1;
    loop {
        let delta = want - total;
        if delta == 0 {
            break;
        }
        if delta > 0 {
            frames[idx] += delta as usize;
            total += delta;
        } else {
            let take = ((-delta) as usize).min(frames[idx] - 1);
            frames[idx] -= take;
            total -= take as isize;
            if total != want {
                if idx == 0 {
                    return Err(Error::Data(format!(
                        "cannot reconcile {n} phonemes with {k} frames"
                    )));
                }
                idx -= 1;
            }
        }
    }
    debug_assert_eq!(frames.iter().sum::<usize>(), k);
    Ok(frames)
}

/// Build all training examples for a corpus directory. Utterances with a
/// missing or unreadable wav are skipped with a warning; an empty result is
/// fatal. Returns examples sorted by utterance id.
pub fn build_examples(
    corpus_dir: impl AsRef<Path>,
    inventory: &PhonemeInventory,
    spec: &FrameSpec,
) -> Result<Vec<TrainingExample>> {
    let corpus_dir = corpus_dir.as_ref();
    let ids = list_utterance_ids(corpus_dir)?;
    let mut examples = Vec::new();
    for id in &ids {
        match build_example(corpus_dir, id, inventory, spec) {
            Ok(ex) => examples.push(ex),
            Err(e) => log::warn!("skipping utterance {id}: {e}"),
        }
    }
    if examples.is_empty() {
        return Err(Error::Data(format!(
            "no valid utterances in {}",
            corpus_dir.display()
        )));
    }
    Ok(examples)
}

/// Build a single utterance's training example.
pub fn build_example(
    corpus_dir: impl AsRef<Path>,
    id: &str,
    inventory: &PhonemeInventory,
    spec: &FrameSpec,
) -> Result<TrainingExample> {
    let corpus_dir = corpus_dir.as_ref();
    let utt = load_alignment(corpus_dir.join("lab").join(format!("{id}.lab")))?;
    let waveform = wav::read_wav(corpus_dir.join("wav").join(format!("{id}.wav")))?;
    let phoneme_ids = inventory.ids_for(&utt.phonemes)?;
    let track = dsp::analyze(&waveform, spec)?;
    let durations_frames = reconcile_frame_counts(&utt.durations_ms, track.n_frames())?;
    Ok(TrainingExample {
        id: id.to_string(),
        phoneme_ids,
        durations_ms: utt.durations_ms,
        durations_frames,
        track,
        waveform,
    })
}

/// Collect the symbol set of a corpus from its label files.
pub fn collect_symbols(corpus_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let corpus_dir = corpus_dir.as_ref();
    let mut symbols = std::collections::BTreeSet::new();
    for id in list_utterance_ids(corpus_dir)? {
        let utt = load_alignment(corpus_dir.join("lab").join(format!("{id}.lab")))?;
        symbols.extend(utt.phonemes);
    }
    Ok(symbols.into_iter().collect())
}

/// Deterministic held-out split. `fraction` of the utterances (rounded,
/// at least one) become the test set.
pub fn split(
    ids: &[String],
    held_out_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&held_out_fraction) || held_out_fraction == 0.0 {
        return Err(Error::Config(format!(
            "held-out fraction must be in (0, 1), got {held_out_fraction}"
        )));
    }
    let n = ids.len();
    let n_test = ((n as f64 * held_out_fraction).round() as usize).clamp(1, n);
    if n_test >= n {
        return Err(Error::Config(format!(
            "held-out fraction {held_out_fraction} leaves an empty training set ({n} utterances)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut test: Vec<String> = order[..n_test].iter().map(|&i| ids[i].clone()).collect();
    let mut train: Vec<String> = order[n_test..].iter().map(|&i| ids[i].clone()).collect();
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Cache file layout for one utterance under a cache directory.
pub struct CachePaths {
    pub mel: PathBuf,
    pub f0: PathBuf,
    pub bap: PathBuf,
    pub voiced: PathBuf,
    pub phoneme_ids: PathBuf,
    pub durations_ms: PathBuf,
    pub durations_frames: PathBuf,
}

impl CachePaths {
    pub fn new(cache_dir: impl AsRef<Path>, id: &str) -> Self {
        let d = cache_dir.as_ref();
        CachePaths {
            mel: d.join(format!("{id}.mel")),
            f0: d.join(format!("{id}.f0")),
            bap: d.join(format!("{id}.bap")),
            voiced: d.join(format!("{id}.voi")),
            phoneme_ids: d.join(format!("{id}.phid")),
            durations_ms: d.join(format!("{id}.durms")),
            durations_frames: d.join(format!("{id}.durfr")),
        }
    }

    pub fn all(&self) -> [&PathBuf; 7] {
        [
            &self.mel,
            &self.f0,
            &self.bap,
            &self.voiced,
            &self.phoneme_ids,
            &self.durations_ms,
            &self.durations_frames,
        ]
    }
}

/// Persist one example into the cache directory.
pub fn write_example_cache(cache_dir: impl AsRef<Path>, ex: &TrainingExample) -> Result<()> {
    let cache_dir = cache_dir.as_ref();
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let paths = CachePaths::new(cache_dir, &ex.id);
    cache::write_features(&paths.mel, &ex.track.mel)?;
    cache::write_column(&paths.f0, &ex.track.f0)?;
    cache::write_column(&paths.bap, &ex.track.bap)?;
    let voiced: Vec<f32> = ex
        .track
        .voiced
        .iter()
        .map(|&v| if v { 1.0 } else { 0.0 })
        .collect();
    cache::write_column(&paths.voiced, &voiced)?;
    let ids: Vec<f32> = ex.phoneme_ids.iter().map(|&i| i as f32).collect();
    cache::write_column(&paths.phoneme_ids, &ids)?;
    cache::write_column(&paths.durations_ms, &ex.durations_ms)?;
    let frames: Vec<f32> = ex.durations_frames.iter().map(|&f| f as f32).collect();
    cache::write_column(&paths.durations_frames, &frames)?;
    Ok(())
}

/// Load one example back from the cache (the waveform is re-read from the
/// corpus directory).
pub fn read_example_cache(
    cache_dir: impl AsRef<Path>,
    corpus_dir: impl AsRef<Path>,
    id: &str,
) -> Result<TrainingExample> {
    let paths = CachePaths::new(cache_dir, id);
    let mel = cache::read_features(&paths.mel)?;
    let f0 = cache::read_column(&paths.f0)?;
    let bap = cache::read_column(&paths.bap)?;
    let voiced: Vec<bool> = cache::read_column(&paths.voiced)?
        .iter()
        .map(|&v| v != 0.0)
        .collect();
    let phoneme_ids: Vec<usize> = cache::read_column(&paths.phoneme_ids)?
        .iter()
        .map(|&v| v as usize)
        .collect();
    let durations_ms = cache::read_column(&paths.durations_ms)?;
    let durations_frames: Vec<usize> = cache::read_column(&paths.durations_frames)?
        .iter()
        .map(|&v| v as usize)
        .collect();
    let waveform = wav::read_wav(corpus_dir.as_ref().join("wav").join(format!("{id}.wav")))?;
    let track = AcousticTrack {
        f0,
        bap,
        voiced,
        mel,
    };
    track.validate()?;
    let ex = TrainingExample {
        id: id.to_string(),
        phoneme_ids,
        durations_ms,
        durations_frames,
        track,
        waveform,
    };
    if ex.durations_frames.iter().sum::<usize>() != ex.n_frames() {
        return Err(Error::Data(format!(
            "cache for {id}: frame counts do not sum to the track length"
        )));
    }
    Ok(ex)
}
