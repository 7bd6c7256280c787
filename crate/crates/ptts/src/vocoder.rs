//! Non-autoregressive excitation-conditioned vocoder.
//!
//! The predicted mel spectrogram is upsampled to the sample rate by
//! replicating each frame 80 times, concatenated with the excitation as an
//! extra channel, and passed through eight k=3 convolutions (64 channels,
//! ReLU) with a linear scalar head. The whole stack sees 17 samples of
//! context per output sample, so chunked inference with an 8-sample halo is
//! bit-identical to whole-signal inference.
//!
//! Training combines a time-domain sample MSE with a cepstral-domain loss
//! (MSE between log-mel spectrograms of the predicted and reference
//! signals), weighted by lambda.

use ndarray::Array2;
use rand::Rng;
use std::sync::Arc;

use crate::dsp::{self, ExcitationSignal, FrameSpec, Waveform, SAMPLE_RATE};
use crate::nn::{ConvParams, DenseParams, Graph, MelBasis, NodeId, ParamStore, Real};
use crate::{Error, Result};

/// Samples generated per mel frame (16 kHz / 200 frames per second).
pub const UPSAMPLE_FACTOR: usize = 80;
/// One-sided receptive-field halo of the conv stack (8 layers of k=3).
pub const RECEPTIVE_HALO: usize = 8;

/// Vocoder loss weighting; `lambda` trades the time-domain term against
/// the cepstral-domain term.
#[derive(Debug, Clone, Copy)]
pub struct VocoderLossConfig {
    pub lambda: f64,
}

impl Default for VocoderLossConfig {
    fn default() -> Self {
        VocoderLossConfig { lambda: 0.5 }
    }
}

impl VocoderLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Trainable vocoder parameters.
pub struct VocoderParams {
    pub layers: Vec<ConvParams>,
    pub out: DenseParams,
}

impl VocoderParams {
    pub fn register<F: Real>(
        store: &mut ParamStore<F>,
        channels: usize,
        n_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let c_in = if l == 0 { 81 } else { channels };
            layers.push(ConvParams::register(
                store,
                &format!("voc.conv{}", l + 1),
                3,
                c_in,
                channels,
                rng,
            ));
        }
        let out = DenseParams::register(store, "voc.out", channels, 1, rng);
        VocoderParams { layers, out }
    }

    /// Build the vocoder forward graph. `mel` is a (K x 80) node;
    /// `excitation` must hold exactly K * 80 samples. The output is the
    /// unclamped (K*80 x 1) sample column.
    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        mel: NodeId,
        excitation: &[F],
    ) -> Result<NodeId> {
        let (k, bins) = g.shape(mel);
        if bins != 80 {
            return Err(Error::Shape(format!(
                "vocoder mel must be K x 80, got {bins} bins"
            )));
        }
        if excitation.len() != k * UPSAMPLE_FACTOR {
            return Err(Error::Shape(format!(
                "excitation length {} != {} frames x {UPSAMPLE_FACTOR}",
                excitation.len(),
                k
            )));
        }
        let counts = vec![UPSAMPLE_FACTOR; k];
        let mel_up = g.repeat_rows(mel, &counts);
        let exc = g.constant(
            Array2::from_shape_vec((excitation.len(), 1), excitation.to_vec()).expect("column"),
        );
        let mut h = g.concat_cols(&[mel_up, exc]);
        for conv in &self.layers {
            h = conv.apply(g, store, h);
            h = g.relu(h);
        }
        Ok(self.out.apply(g, store, h))
    }

    /// Frozen-graph inference; output clamped to [-1, 1].
    pub fn vocode<F: Real>(
        &self,
        store: &ParamStore<F>,
        mel: &Array2<F>,
        excitation: &ExcitationSignal,
    ) -> Result<Waveform> {
        let mut g: Graph<F> = Graph::frozen();
        let mel_node = g.constant(mel.clone());
        let exc: Vec<F> = excitation
            .samples
            .iter()
            .map(|&s| F::from_f64(s as f64))
            .collect();
        let out = self.forward(&mut g, store, mel_node, &exc)?;
        let samples: Vec<f32> = g
            .value(out)
            .iter()
            .map(|&v| (v.as_f64() as f32).clamp(-1.0, 1.0))
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    /// Chunked inference with a receptive-field halo; bit-equal to
    /// [`VocoderParams::vocode`]. `chunk_frames` mel frames are emitted per
    /// pass while the conv stack sees `RECEPTIVE_HALO` extra samples of real
    /// context on each side.
    pub fn vocode_chunked<F: Real>(
        &self,
        store: &ParamStore<F>,
        mel: &Array2<F>,
        excitation: &ExcitationSignal,
        chunk_frames: usize,
    ) -> Result<Waveform> {
        let k = mel.nrows();
        if chunk_frames == 0 {
            return Err(Error::Config("chunk_frames must be positive".into()));
        }
        let total = k * UPSAMPLE_FACTOR;
        if excitation.samples.len() != total {
            return Err(Error::Shape(format!(
                "excitation length {} != {total}",
                excitation.samples.len()
            )));
        }

        // full 81-channel input built once; the conv stack runs per chunk
        let mut input: Array2<F> = Array2::zeros((total, 81));
        for t in 0..k {
            for i in 0..UPSAMPLE_FACTOR {
                let row = t * UPSAMPLE_FACTOR + i;
                for b in 0..80 {
                    input[[row, b]] = mel[[t, b]];
                }
                input[[row, 80]] = F::from_f64(excitation.samples[row] as f64);
            }
        }

        let mut samples = vec![0.0f32; total];
        let mut start = 0usize;
        while start < total {
            let end = (start + chunk_frames * UPSAMPLE_FACTOR).min(total);
            let lo = start.saturating_sub(RECEPTIVE_HALO);
            let hi = (end + RECEPTIVE_HALO).min(total);
            let slice = input.slice(ndarray::s![lo..hi, ..]).to_owned();
            let mut g: Graph<F> = Graph::frozen();
            let mut h = g.constant(slice);
            for conv in &self.layers {
                h = conv.apply(&mut g, store, h);
                h = g.relu(h);
            }
            let out = self.out.apply(&mut g, store, h);
            let v = g.value(out);
            for row in start..end {
                samples[row] = (v[[row - lo, 0]].as_f64() as f32).clamp(-1.0, 1.0);
            }
            start = end;
        }
        Waveform::new(samples, SAMPLE_RATE)
    }
}

/// Time-domain, cepstral-domain, and combined vocoder losses between a
/// prediction and a reference (pure function; the training path builds the
/// same quantities on the graph).
pub fn vocoder_loss(
    pred: &Waveform,
    reference: &Waveform,
    cfg: &VocoderLossConfig,
) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!(
            "waveform lengths differ: {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    let n = pred.len();
    let l_td = pred
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / n as f64;

    let spec = FrameSpec::default();
    let mel_pred = dsp::compute_mel_spectrogram(pred, &spec)?;
    let mel_ref = dsp::compute_mel_spectrogram(reference, &spec)?;
    let l_cd = mel_pred
        .iter()
        .zip(mel_ref.iter())
        .map(|(&a, &b)| {
            let d = (a as f64).ln() - (b as f64).ln();
            d * d
        })
        .sum::<f64>()
        / mel_pred.len() as f64;

    let l_voc = cfg.lambda * l_td + (1.0 - cfg.lambda) * l_cd;
    Ok((l_td, l_cd, l_voc))
}

/// Graph-side vocoder losses for training: returns (L_td, L_cd, L_vocoder)
/// nodes for an unclamped prediction column against reference samples.
pub fn vocoder_loss_graph<F: Real>(
    g: &mut Graph<F>,
    pred: NodeId,
    reference: &[F],
    lambda: F,
    basis: &Arc<MelBasis<F>>,
) -> Result<(NodeId, NodeId, NodeId)> {
    let (n, _) = g.shape(pred);
    if n != reference.len() {
        return Err(Error::Shape(format!(
            "prediction has {n} samples, reference {}",
            reference.len()
        )));
    }
    let ref_col = Array2::from_shape_vec((n, 1), reference.to_vec()).expect("column");
    let ref_node = g.constant(ref_col);
    let d = g.sub(pred, ref_node);
    let sq = g.mul(d, d);
    let l_td = g.mean_all(sq);

    let lm_pred = g.log_mel(pred, basis)?;
    let lm_ref = g.log_mel(ref_node, basis)?;
    let dm = g.sub(lm_pred, lm_ref);
    let sqm = g.mul(dm, dm);
    let l_cd = g.mean_all(sqm);

    let a = g.scale(l_td, lambda);
    let b = g.scale(l_cd, F::one() - lambda);
    let l_voc = g.add(a, b);
    Ok((l_td, l_cd, l_voc))
}
