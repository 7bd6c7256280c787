//! Fixed, non-learnable encoding tables.
//!
//! Frame positions inside a phoneme are encoded with two 16-dimensional
//! sinusoidal vectors (index from the phoneme start and from its end, both
//! clamped at 255). Rounded f0 values are encoded with a 32-dimensional
//! sinusoidal row from a table covering 1..=1000 Hz, wide enough for
//! factor-scaled contours.

use ndarray::Array2;

use crate::nn::Real;
use crate::{Error, Result};

/// Positions representable before clamping.
pub const MAX_POSITION: usize = 255;
/// f0 table range in integer Hz.
pub const F0_TABLE_MIN_HZ: usize = 1;
pub const F0_TABLE_MAX_HZ: usize = 1000;

/// Transformer-style sinusoidal rows: row p, pair i covers
/// sin(p / 10000^(2i/dim)) and cos(p / 10000^(2i/dim)).
fn sinusoid_table<F: Real>(rows: usize, dim: usize, offset: usize) -> Array2<F> {
    assert!(dim % 2 == 0);
    let mut out = Array2::zeros((rows, dim));
    for r in 0..rows {
        let pos = (r + offset) as f64;
        for i in 0..dim / 2 {
            let rate = 10_000f64.powf(-(2.0 * i as f64) / dim as f64);
            out[[r, 2 * i]] = F::from_f64((pos * rate).sin());
            out[[r, 2 * i + 1]] = F::from_f64((pos * rate).cos());
        }
    }
    out
}

/// All fixed tables a model instance needs.
pub struct FixedTables<F: Real> {
    /// (256 x 16): row p encodes clamped position p.
    pub position: Array2<F>,
    /// (1000 x 32): row h-1 encodes h Hz.
    pub f0: Array2<F>,
}

impl<F: Real> FixedTables<F> {
    pub fn new(pos_dim: usize, f0_dim: usize) -> Self {
        FixedTables {
            position: sinusoid_table(MAX_POSITION + 1, pos_dim, 0),
            f0: sinusoid_table(F0_TABLE_MAX_HZ, f0_dim, F0_TABLE_MIN_HZ),
        }
    }

    /// Per-frame position-information matrix (K x 2*pos_dim) for the given
    /// frames-per-phoneme counts: index-from-start rows concatenated with
    /// index-from-end rows, both clamped.
    pub fn position_info(&self, frames_per_phoneme: &[usize]) -> Array2<F> {
        let dim = self.position.ncols();
        let total: usize = frames_per_phoneme.iter().sum();
        let mut out = Array2::zeros((total, 2 * dim));
        let mut row = 0;
        for &count in frames_per_phoneme {
            for idx in 0..count {
                let from_start = idx.min(MAX_POSITION);
                let from_end = (count - 1 - idx).min(MAX_POSITION);
                for c in 0..dim {
                    out[[row, c]] = self.position[[from_start, c]];
                    out[[row, dim + c]] = self.position[[from_end, c]];
                }
                row += 1;
            }
        }
        out
    }

    /// Encode per-frame f0 values: round to the nearest integer Hz and look
    /// the row up, erroring on values outside the table.
    pub fn encode_f0(&self, f0_hz: &[f32]) -> Result<Array2<F>> {
        let dim = self.f0.ncols();
        let mut out = Array2::zeros((f0_hz.len(), dim));
        for (t, &hz) in f0_hz.iter().enumerate() {
            let rounded = hz.round() as i64;
            if rounded < F0_TABLE_MIN_HZ as i64 || rounded > F0_TABLE_MAX_HZ as i64 {
                return Err(Error::Data(format!(
                    "frame {t}: f0 {hz} Hz rounds to {rounded}, outside the {F0_TABLE_MIN_HZ}..={F0_TABLE_MAX_HZ} Hz encoding table"
                )));
            }
            let row = (rounded - F0_TABLE_MIN_HZ as i64) as usize;
            for c in 0..dim {
                out[[t, c]] = self.f0[[row, c]];
            }
        }
        Ok(out)
    }
}

/// Frames per phoneme from durations in ms: round(d / 5), at least one.
pub fn frames_from_durations_ms(durations_ms: &[f32]) -> Vec<usize> {
    durations_ms
        .iter()
        .map(|&ms| ((ms / 5.0).round() as usize).max(1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn rounding_shares_the_encoding_row() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        let a = t.encode_f0(&[100.4]).unwrap();
        let b = t.encode_f0(&[100.0]).unwrap();
        assert_eq!(a, b);
        let c = t.encode_f0(&[100.6]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unvoiced_sentinel_has_a_valid_row() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        let e = t.encode_f0(&[1.0]).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn out_of_range_f0_errors_with_value() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        let err = t.encode_f0(&[1200.0]).unwrap_err();
        assert!(err.to_string().contains("1200"), "{err}");
        assert!(t.encode_f0(&[0.4]).is_err());
    }

    #[test]
    fn adjacent_f0_values_are_closer_than_distant_ones() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        for hz in (50..900).step_by(25) {
            let near = dist(t.f0.row(hz), t.f0.row(hz + 1));
            let far = dist(t.f0.row(hz), t.f0.row(hz + 50));
            assert!(near < far, "hz {hz}: near {near} far {far}");
        }
    }

    #[test]
    fn position_rows_are_unique_up_to_clamp() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        for a in 0..=MAX_POSITION {
            for b in a + 1..=MAX_POSITION {
                let d = dist(t.position.row(a), t.position.row(b));
                assert!(d > 1e-6, "positions {a} and {b} collide");
            }
        }
    }

    #[test]
    fn position_info_distinguishes_frames_within_a_phoneme() {
        let t: FixedTables<f64> = FixedTables::new(16, 32);
        let info = t.position_info(&[7]);
        assert_eq!(info.nrows(), 7);
        for a in 0..7 {
            for b in a + 1..7 {
                assert!(dist(info.row(a), info.row(b)) > 1e-6);
            }
        }
    }

    #[test]
    fn frame_rounding_rules() {
        assert_eq!(frames_from_durations_ms(&[25.0]), vec![5]);
        assert_eq!(frames_from_durations_ms(&[25.0, 10.0]), vec![5, 2]);
        assert_eq!(frames_from_durations_ms(&[1.0]), vec![1]); // minimum one frame
        assert_eq!(frames_from_durations_ms(&[12.4]), vec![2]);
    }
}
