//! Per-frame point-cloud encoder: shared per-point MLP over (x, y, z, label)
//! rows, order-invariant max pooling, linear head. Clouds are brought to a
//! fixed row count by farthest-point subsampling or zero padding.

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::nn::{ParamStore, Tape, TapeVars, TensorId};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PointEncoderConfig {
    /// Fixed per-cloud row count after subsample/pad.
    pub n_points: usize,
    pub hidden: [usize; 2],
    pub feature_dim: usize,
}

impl Default for PointEncoderConfig {
    fn default() -> Self {
        Self {
            n_points: 512,
            hidden: [32, 64],
            feature_dim: 64,
        }
    }
}

impl PointEncoderConfig {
    pub fn tiny(n_points: usize, feature_dim: usize) -> Self {
        Self {
            n_points,
            hidden: [4, 6],
            feature_dim,
        }
    }
}

/// Deterministic farthest-point subsampling to `k` rows (or zero padding
/// below `k`). The seed point is the lexicographically smallest row, ties in
/// the max-min-distance step go to the lowest index after lexicographic
/// ordering, so the result does not depend on input order.
pub fn prepare_cloud(points: &[[f64; 4]], k: usize) -> Result<Array2<f64>, EncoderError> {
    if points.is_empty() {
        return Err(EncoderError::EmptyCloud);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Array2::zeros((k, 4));
    if points.len() <= k {
        for (row, &i) in order.iter().enumerate() {
            for c in 0..4 {
                out[(row, c)] = points[i][c];
            }
        }
        // Remaining rows stay zero-padded.
        return Ok(out);
    }
    let d2 = |a: &[f64; 4], b: &[f64; 4]| -> f64 {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    let mut selected = vec![order[0]];
    let mut min_d2: Vec<f64> = order
        .iter()
        .map(|&i| d2(&points[i], &points[order[0]]))
        .collect();
    while selected.len() < k {
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (oi, &_i) in order.iter().enumerate() {
            if min_d2[oi] > best_d {
                best_d = min_d2[oi];
                best = oi;
            }
        }
        let chosen = order[best];
        selected.push(chosen);
        for (oi, &i) in order.iter().enumerate() {
            min_d2[oi] = min_d2[oi].min(d2(&points[i], &points[chosen]));
        }
    }
    for (row, &i) in selected.iter().enumerate() {
        for c in 0..4 {
            out[(row, c)] = points[i][c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct PointEncoder {
    pub cfg: PointEncoderConfig,
}

impl PointEncoder {
    pub fn new(cfg: PointEncoderConfig) -> Self {
        Self { cfg }
    }

    pub fn init_params(&self, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) {
        let [h1, h2] = self.cfg.hidden;
        store.init_uniform(&format!("{prefix}.mlp1.w"), &[4, h1], 4, rng);
        store.init_zeros(&format!("{prefix}.mlp1.b"), &[h1]);
        store.init_uniform(&format!("{prefix}.mlp2.w"), &[h1, h2], h1, rng);
        store.init_zeros(&format!("{prefix}.mlp2.b"), &[h2]);
        store.init_uniform(&format!("{prefix}.head.w"), &[h2, self.cfg.feature_dim], h2, rng);
        store.init_zeros(&format!("{prefix}.head.b"), &[self.cfg.feature_dim]);
    }

    /// Differentiable forward: (B, P, 4) -> (B, d).
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &TapeVars,
        prefix: &str,
        batch: TensorId,
    ) -> TensorId {
        let p = |s: &str| vars.id(&format!("{prefix}.{s}"));
        let shape = tape.value(batch).shape().to_vec();
        let (b, np) = (shape[0], shape[1]);
        let [h1, h2] = self.cfg.hidden;
        let flat = tape.reshape(batch, &[b * np, 4]);
        let x = tape.matmul(flat, p("mlp1.w"));
        let x = tape.add_row_bias(x, p("mlp1.b"));
        let x = tape.relu(x);
        let x = tape.matmul(x, p("mlp2.w"));
        let x = tape.add_row_bias(x, p("mlp2.b"));
        let x = tape.relu(x);
        let _ = h1;
        let per_point = tape.reshape(x, &[b, np, h2]);
        let pooled = tape.max_over_points(per_point);
        let out = tape.matmul(pooled, p("head.w"));
        tape.add_row_bias(out, p("head.b"))
    }

    /// Evaluation-only forward over prepared (B, P, 4) batches.
    pub fn encode_batch(
        &self,
        store: &ParamStore,
        prefix: &str,
        batch: &Array3<f64>,
    ) -> Result<Array2<f64>, EncoderError> {
        let (_, p, c) = batch.dim();
        if p == 0 {
            return Err(EncoderError::EmptyCloud);
        }
        if c != 4 {
            return Err(EncoderError::WrongShape {
                expected: "(B, P, 4)".into(),
                found: format!("(B, {p}, {c})"),
            });
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
