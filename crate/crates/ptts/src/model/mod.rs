//! The text-to-acoustics network.
//!
//! Pipeline: phoneme embeddings -> convolutional text encoder (bank of
//! kernel sizes 1..bank_size, two k=3 projections, residual embedding add,
//! bidirectional GRU) -> per-phoneme duration head, and, after duration-based
//! upsampling with frame-position information, an f0/BAP estimator (three
//! k=5 convolutions with two scalar heads) whose last hidden layer also
//! conditions the mel decoder (bank of 16 kernels, three k=3 projections,
//! bidirectional GRU, 80-band head) together with a 32-dimensional encoding
//! of the rounded f0.

mod tables;

pub use tables::{frames_from_durations_ms, FixedTables, F0_TABLE_MAX_HZ, F0_TABLE_MIN_HZ};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EMBEDDING_DIM;
use crate::dsp::MEL_FLOOR;
use crate::nn::{
    checkpoint, Graph, GruWeights, NodeId, ParamId, ParamStore, Real,
};
use crate::{Error, Result};

/// Architecture hyperparameters. Everything except the encoder bank size
/// (the context study sweeps it) is fixed by the design.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of filters in the text-encoder bank (kernel sizes 1..=n).
    pub encoder_bank_size: usize,
    pub channels: usize,
    pub pos_dim: usize,
    pub f0_enc_dim: usize,
    pub decoder_bank_size: usize,
    pub mel_bins: usize,
    pub vocoder_channels: usize,
    pub vocoder_layers: usize,
    /// Inventory size; baked into the architecture hash because the
    /// embedding table is data, not parameters.
    pub n_symbols: usize,
}

impl ModelConfig {
    pub fn with_defaults(n_symbols: usize) -> Self {
        ModelConfig {
            encoder_bank_size: 8,
            channels: 128,
            pos_dim: 16,
            f0_enc_dim: 32,
            decoder_bank_size: 16,
            mel_bins: 80,
            vocoder_channels: 64,
            vocoder_layers: 8,
            n_symbols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![2, 4, 8, 16].contains(&self.encoder_bank_size) {
            return Err(Error::Config(format!(
                "encoder bank size {} not in {{2, 4, 8, 16}}",
                self.encoder_bank_size
            )));
        }
        if self.channels != 128
            || self.pos_dim != 16
            || self.f0_enc_dim != 32
            || self.decoder_bank_size != 16
            || self.mel_bins != 80
            || self.vocoder_channels != 64
            || self.vocoder_layers != 8
        {
            return Err(Error::Config("non-standard architecture dimensions".into()));
        }
        Ok(())
    }

    /// Effective receptive field of the encoder conv stack: the widest bank
    /// kernel plus two k=3 projections.
    pub fn encoder_receptive_field(&self) -> usize {
        self.encoder_bank_size + 4
    }

    pub fn hash(&self) -> u64 {
        let canon = serde_json::to_string(self).expect("config serializes");
        checkpoint::config_hash(&canon)
    }
}

pub use crate::nn::{BiGru, ConvParams, DenseParams};

/// All text-to-acoustics parameters (the vocoder registers separately).
pub struct SynthesisParams {
    pub enc_bank: Vec<ConvParams>,
    pub enc_proj1: ConvParams,
    pub enc_proj2: ConvParams,
    pub enc_gru: BiGru,
    pub dur_head: DenseParams,
    pub f0_convs: [ConvParams; 3],
    pub f0_head: DenseParams,
    pub bap_head: DenseParams,
    pub dec_bank: Vec<ConvParams>,
    pub dec_projs: [ConvParams; 3],
    pub dec_gru: BiGru,
    pub mel_head: DenseParams,
}

impl SynthesisParams {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        cfg: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let ch = cfg.channels;
        let enc_bank: Vec<ConvParams> = (1..=cfg.encoder_bank_size)
            .map(|k| ConvParams::register(store, &format!("enc.bank{k}"), k, EMBEDDING_DIM, ch, rng))
            .collect();
        let enc_proj1 = ConvParams::register(
            store,
            "enc.proj1",
            3,
            ch * cfg.encoder_bank_size,
            ch,
            rng,
        );
        let enc_proj2 = ConvParams::register(store, "enc.proj2", 3, ch, ch, rng);
        let enc_gru = BiGru::register(store, "enc.gru", ch, ch, ch, rng);
        let dur_head = DenseParams::register(store, "dur.head", ch, 1, rng);

        let up_dim = ch + 2 * cfg.pos_dim;
        let f0_convs = [
            ConvParams::register(store, "f0.conv1", 5, up_dim, ch, rng),
            ConvParams::register(store, "f0.conv2", 5, ch, ch, rng),
            ConvParams::register(store, "f0.conv3", 5, ch, ch, rng),
        ];
        let f0_head = DenseParams::register(store, "f0.head", ch, 1, rng);
        let bap_head = DenseParams::register(store, "bap.head", ch, 1, rng);

        let dec_in = ch + cfg.f0_enc_dim;
        let dec_bank: Vec<ConvParams> = (1..=cfg.decoder_bank_size)
            .map(|k| ConvParams::register(store, &format!("dec.bank{k}"), k, dec_in, ch, rng))
            .collect();
        let dec_projs = [
            ConvParams::register(store, "dec.proj1", 3, ch * cfg.decoder_bank_size, ch, rng),
            ConvParams::register(store, "dec.proj2", 3, ch, ch, rng),
            ConvParams::register(store, "dec.proj3", 3, ch, ch, rng),
        ];
        let dec_gru = BiGru::register(store, "dec.gru", ch, ch, ch, rng);
        let mel_head = DenseParams::register(store, "mel.head", ch, cfg.mel_bins, rng);

        SynthesisParams {
            enc_bank,
            enc_proj1,
            enc_proj2,
            enc_gru,
            dur_head,
            f0_convs,
            f0_head,
            bap_head,
            dec_bank,
            dec_projs,
            dec_gru,
            mel_head,
        }
    }

    /// Conv bank + projections + residual (the pre-recurrence tap), then the
    /// bidirectional GRU. Returns (tap, encoded).
    pub fn encode_text<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        embeddings: NodeId,
    ) -> (NodeId, NodeId) {
        let bank: Vec<NodeId> = self
            .enc_bank
            .iter()
            .map(|conv| {
                let y = conv.apply(g, store, embeddings);
                g.relu(y)
            })
            .collect();
        let stacked = g.concat_cols(&bank);
        let p1 = self.enc_proj1.apply(g, store, stacked);
        let p1 = g.relu(p1);
        let p2 = self.enc_proj2.apply(g, store, p1);
        let p2 = g.relu(p2);
        // residual connection restores the phoneme identity
        let tap = g.add(p2, embeddings);
        let encoded = self.enc_gru.forward(g, store, tap);
        (tap, encoded)
    }

    /// Per-phoneme duration predictions in ms (N x 1, ReLU so never negative).
    pub fn predict_durations<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        encoded: NodeId,
    ) -> NodeId {
        let y = self.dur_head.apply(g, store, encoded);
        g.relu(y)
    }

    /// f0/BAP estimator over the upsampled sequence: returns per-frame
    /// log-f0 (K x 1), BAP (K x 1), and the last hidden conv activations
    /// (K x channels) that condition the decoder.
    pub fn predict_f0_bap<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        upsampled: NodeId,
    ) -> F0BapOutput {
        let mut h = upsampled;
        for conv in &self.f0_convs {
            h = conv.apply(g, store, h);
            h = g.relu(h);
        }
        let log_f0 = self.f0_head.apply(g, store, h);
        let log_f0 = g.relu(log_f0);
        let bap = self.bap_head.apply(g, store, h);
        let bap = g.relu(bap);
        F0BapOutput {
            log_f0,
            bap,
            bottleneck: h,
        }
    }

    /// Mel decoder conditioned on the estimator bottleneck and the f0
    /// encoding rows. Returns (pre-recurrence tap, floored mel).
    pub fn decode_mel<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        bottleneck: NodeId,
        f0_encoding: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let (kb, _) = g.shape(bottleneck);
        let (kf, _) = g.shape(f0_encoding);
        if kb != kf {
            return Err(Error::Shape(format!(
                "decoder inputs disagree: bottleneck {kb} frames, f0 encoding {kf}"
            )));
        }
        let x = g.concat_cols(&[bottleneck, f0_encoding]);
        let bank: Vec<NodeId> = self
            .dec_bank
            .iter()
            .map(|conv| {
                let y = conv.apply(g, store, x);
                g.relu(y)
            })
            .collect();
        let mut h = g.concat_cols(&bank);
        for conv in &self.dec_projs {
            h = conv.apply(g, store, h);
            h = g.relu(h);
        }
        let tap = h;
        let rnn = self.dec_gru.forward(g, store, tap);
        let mel = self.mel_head.apply(g, store, rnn);
        let mel = g.relu(mel);
        let mel = g.floor_clamp(mel, F::from_f64(MEL_FLOOR as f64));
        Ok((tap, mel))
    }
}

/// Output bundle of the f0/BAP estimator.
pub struct F0BapOutput {
    pub log_f0: NodeId,
    pub bap: NodeId,
    pub bottleneck: NodeId,
}

/// Duration-based upsampling: repeat each phoneme's encoding for its frame
/// count and concatenate the fixed position information.
pub struct Upsampled {
    pub node: NodeId,
    pub frames_per_phoneme: Vec<usize>,
    /// Non-decreasing frame -> phoneme index map.
    pub frame_to_phoneme: Vec<usize>,
}

pub fn upsample<F: Real>(
    g: &mut Graph<F>,
    tables: &FixedTables<F>,
    encoded: NodeId,
    frames_per_phoneme: &[usize],
) -> Result<Upsampled> {
    let (n, _) = g.shape(encoded);
    if n != frames_per_phoneme.len() {
        return Err(Error::Shape(format!(
            "{n} encoded phonemes but {} frame counts",
            frames_per_phoneme.len()
        )));
    }
    if frames_per_phoneme.iter().any(|&f| f == 0) {
        return Err(Error::Shape("zero-frame phoneme in upsampling".into()));
    }
    let repeated = g.repeat_rows(encoded, frames_per_phoneme);
    let pos = g.constant(tables.position_info(frames_per_phoneme));
    let node = g.concat_cols(&[repeated, pos]);
    let mut frame_to_phoneme = Vec::new();
    for (p, &c) in frames_per_phoneme.iter().enumerate() {
        frame_to_phoneme.extend(std::iter::repeat(p).take(c));
    }
    Ok(Upsampled {
        node,
        frames_per_phoneme: frames_per_phoneme.to_vec(),
        frame_to_phoneme,
    })
}

// ---- loss builders ----

/// Mean absolute percentage error between predicted durations (N x 1) and
/// targets in ms.
pub fn mape_loss<F: Real>(g: &mut Graph<F>, pred: NodeId, targets_ms: &[f32]) -> NodeId {
    let n = targets_ms.len();
    let t = Array2::from_shape_vec(
        (n, 1),
        targets_ms.iter().map(|&v| F::from_f64(v as f64)).collect(),
    )
    .expect("column");
    let inv_t = t.mapv(|v| F::one() / v);
    let tn = g.constant(t);
    let inv = g.constant(inv_t);
    let d = g.sub(pred, tn);
    let a = g.abs(d);
    let frac = g.mul(a, inv);
    g.mean_all(frac)
}

/// Elementwise mean squared error against a constant target.
pub fn mse_loss<F: Real>(g: &mut Graph<F>, pred: NodeId, target: Array2<F>) -> NodeId {
    let t = g.constant(target);
    let d = g.sub(pred, t);
    let sq = g.mul(d, d);
    g.mean_all(sq)
}

/// MSE in the log domain for already-floored positive matrices.
pub fn log_mse_loss<F: Real>(g: &mut Graph<F>, pred: NodeId, target: Array2<F>) -> NodeId {
    let lp = g.ln(pred);
    let lt = target.mapv(|v| v.ln());
    mse_loss(g, lp, lt)
}
