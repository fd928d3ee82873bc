//! Per-frame image encoder: a small strided conv stack with global average
//! pooling and a linear head.

use ndarray::{Array2, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::nn::{ParamStore, Tape, TapeVars, TensorId};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageEncoderConfig {
    pub height: usize,
    pub width: usize,
    /// Channel widths of the three stride-2 conv stages.
    pub channels: [usize; 3],
    pub feature_dim: usize,
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: [8, 16, 32],
            feature_dim: 64,
        }
    }
}

impl ImageEncoderConfig {
    /// The `tiny` preset used by unit tests and gradient checks.
    pub fn tiny(height: usize, width: usize, feature_dim: usize) -> Self {
        Self {
            height,
            width,
            channels: [2, 3, 4],
            feature_dim,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ImageEncoder {
    pub cfg: ImageEncoderConfig,
}

impl ImageEncoder {
    pub fn new(cfg: ImageEncoderConfig) -> Self {
        Self { cfg }
    }

    pub fn init_params(&self, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) {
        let [c1, c2, c3] = self.cfg.channels;
        store.init_uniform(&format!("{prefix}.conv1.w"), &[c1, 3, 3, 3], 3 * 9, rng);
        store.init_zeros(&format!("{prefix}.conv1.b"), &[c1]);
        store.init_uniform(&format!("{prefix}.conv2.w"), &[c2, c1, 3, 3], c1 * 9, rng);
        store.init_zeros(&format!("{prefix}.conv2.b"), &[c2]);
        store.init_uniform(&format!("{prefix}.conv3.w"), &[c3, c2, 3, 3], c2 * 9, rng);
        store.init_zeros(&format!("{prefix}.conv3.b"), &[c3]);
        store.init_uniform(&format!("{prefix}.head.w"), &[c3, self.cfg.feature_dim], c3, rng);
        store.init_zeros(&format!("{prefix}.head.b"), &[self.cfg.feature_dim]);
    }

    pub fn check_shape(&self, batch: &Array4<f64>) -> Result<(), EncoderError> {
        let (_, c, h, w) = batch.dim();
        if c != 3 || h != self.cfg.height || w != self.cfg.width {
            return Err(EncoderError::WrongShape {
                expected: format!("(B, 3, {}, {})", self.cfg.height, self.cfg.width),
                found: format!("(B, {c}, {h}, {w})"),
            });
        }
        Ok(())
    }

    /// Differentiable forward: (B, 3, H, W) -> (B, d).
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &TapeVars,
        prefix: &str,
        batch: TensorId,
    ) -> TensorId {
        let p = |s: &str| vars.id(&format!("{prefix}.{s}"));
        let mut x = batch;
        for stage in 1..=3 {
            let w = p(&format!("conv{stage}.w"));
            let b = p(&format!("conv{stage}.b"));
            x = tape.conv2d(x, w, 2, 1);
            x = tape.add_channel_bias(x, b);
            x = tape.relu(x);
        }
        let pooled = tape.global_avg_pool(x);
        let out = tape.matmul(pooled, p("head.w"));
        tape.add_row_bias(out, p("head.b"))
    }

    /// Evaluation-only forward.
    pub fn encode_batch(
        &self,
        store: &ParamStore,
        prefix: &str,
        batch: &Array4<f64>,
    ) -> Result<Array2<f64>, EncoderError> {
        self.check_shape(batch)?;
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFiniteInput);
        }
        let mut tape = Tape::new();
        let vars = TapeVars::watch(&mut tape, store);
        let x = tape.leaf(batch.clone().into_dyn());
        let out = self.forward_tape(&mut tape, &vars, prefix, x);
        Ok(tape
            .value(out)
            .clone()
            .into_dimensionality()
            .expect("2-d output"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup() -> (ImageEncoder, ParamStore) {
        let enc = ImageEncoder::new(ImageEncoderConfig {
            height: 16,
            width: 16,
            channels: [4, 6, 8],
            feature_dim: 10,
        });
        let mut store = ParamStore::new();
        enc.init_params(&mut store, "img", &mut ChaCha12Rng::seed_from_u64(1));
        (enc, store)
    }

    #[test]
    fn deterministic_and_correct_dim() {
        let (enc, store) = setup();
        let batch = Array4::from_shape_fn((2, 3, 16, 16), |(b, c, y, x)| {
            ((b + c + y + x) % 7) as f64 / 7.0
        });
        let a = enc.encode_batch(&store, "img", &batch).unwrap();
        let b = enc.encode_batch(&store, "img", &batch).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (2, 10));
    }

    #[test]
    fn zero_image_finite_output() {
        let (enc, store) = setup();
        let batch = Array4::zeros((1, 3, 16, 16));
        let out = enc.encode_batch(&store, "img", &batch).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_shape_rejected() {
        let (enc, store) = setup();
        let batch = Array4::zeros((1, 3, 8, 16));
        assert!(matches!(
            enc.encode_batch(&store, "img", &batch),
            Err(EncoderError::WrongShape { .. })
        ));
    }

    #[test]
    fn probe_gradients_match_finite_differences() {
        let enc = ImageEncoder::new(ImageEncoderConfig::tiny(8, 8, 3));
        let mut store = ParamStore::new();
        enc.init_params(&mut store, "img", &mut ChaCha12Rng::seed_from_u64(2));
        let batch = Array4::from_shape_fn((2, 3, 8, 8), |(b, c, y, x)| {
            0.1 * ((b * 31 + c * 17 + y * 5 + x) % 11) as f64
        });

        let mut tape = Tape::new();
        let vars = TapeVars::watch(&mut tape, &store);
        let x = tape.leaf(batch.clone().into_dyn());
        let out = enc.forward_tape(&mut tape, &vars, "img", x);
        let probe = tape.sum_all(out);
        let grads = tape.backward(probe);
        let by_name = vars.grads(&grads, &store);

        let eval = |st: &ParamStore| -> f64 {
            enc.encode_batch(st, "img", &batch).unwrap().sum()
        };
        crate::nn::check_against_finite_differences(&store, &by_name, eval, 1e-4).unwrap();
    }
}
