//! Feature-space denoising-diffusion augmentation for LiDAR features: linear
//! beta schedule, closed-form forward noising, a deterministic skip-step
//! reverse sampler, a small noise-prediction MLP, and the DDPM training loss.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::nn::{ParamStore, Tape, TapeVars, TensorId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Per-sample mean over feature dimensions, then batch mean.
    MeanOverDims,
    /// Per-sample sum over feature dimensions, then batch mean.
    SumOverDims,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub total_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Augmentation start steps are drawn uniformly from [m_min, m_max].
    pub m_min: usize,
    pub m_max: usize,
    /// Maximum reverse updates (U).
    pub skip_updates: usize,
    /// Stride divisor (u): stride = max(floor(m_start / u), 1).
    pub stride_divisor: usize,
    pub loss_reduction: LossReduction,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            beta_min: 5e-6,
            beta_max: 2e-3,
            m_min: 200,
            m_max: 400,
            skip_updates: 24,
            stride_divisor: 8,
            loss_reduction: LossReduction::MeanOverDims,
        }
    }
}

/// Beta/alpha tables. `alpha_bar` has `total_steps + 1` entries with
/// `alpha_bar[0] = 1`.
#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn m_total(&self) -> usize {
        self.betas.len()
    }

    /// Beta at 1-based step m.
    pub fn beta(&self, m: usize) -> f64 {
        self.betas[m - 1]
    }

    /// Cumulative product of alphas up to step m (0 <= m <= M).
    pub fn alpha_bar(&self, m: usize) -> f64 {
        self.alpha_bar[m]
    }
}

/// Linear schedule beta_m = beta_min + (m-1)/(M-1) * (beta_max - beta_min).
pub fn make_schedule(
    total_steps: usize,
    beta_min: f64,
    beta_max: f64,
) -> Result<DiffusionSchedule, AugmentError> {
    if total_steps < 2 {
        return Err(AugmentError::InvalidSchedule(
            "need at least 2 steps".into(),
        ));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(AugmentError::InvalidSchedule(format!(
            "require 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let m = total_steps;
    let betas: Vec<f64> = (1..=m)
        .map(|i| beta_min + (i - 1) as f64 / (m - 1) as f64 * (beta_max - beta_min))
        .collect();
    let mut alpha_bar = Vec::with_capacity(m + 1);
    alpha_bar.push(1.0);
    for b in &betas {
        let prev = *alpha_bar.last().expect("non-empty");
        alpha_bar.push(prev * (1.0 - b));
    }
    Ok(DiffusionSchedule { betas, alpha_bar })
}

impl DiffusionConfig {
    pub fn schedule(&self) -> Result<DiffusionSchedule, AugmentError> {
        make_schedule(self.total_steps, self.beta_min, self.beta_max)
    }
}

/// Closed-form forward noising: v_m = sqrt(ab_m) v + sqrt(1 - ab_m) eps.
pub fn forward_noise(
    v: &Array1<f64>,
    m: usize,
    eps: &Array1<f64>,
    schedule: &DiffusionSchedule,
) -> Result<Array1<f64>, AugmentError> {
    if m < 1 || m > schedule.m_total() {
        return Err(AugmentError::StepOutOfRange {
            step: m,
            total: schedule.m_total(),
        });
    }
    if v.len() != eps.len() {
        return Err(AugmentError::DimensionMismatch {
            expected: v.len(),
            found: eps.len(),
        });
    }
    let ab = schedule.alpha_bar(m);
    Ok(v * ab.sqrt() + &(eps * (1.0 - ab).sqrt()))
}

/// Anything that can estimate the injected noise from a noisy feature.
pub trait NoisePredictor {
    fn predict(&self, noisy: &Array1<f64>, m: usize) -> Array1<f64>;
}

/// Test/acceptance predictor that returns the exact noise it was built with.
pub struct OracleNoise(pub Array1<f64>);

impl NoisePredictor for OracleNoise {
    fn predict(&self, _noisy: &Array1<f64>, _m: usize) -> Array1<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone)]
pub struct SkipSampleResult {
    pub feature: Array1<f64>,
    /// Step index the sampler stopped at (0 when fully denoised).
    pub final_step: usize,
    pub updates_used: usize,
}

/// Deterministic skip-step reverse sampler. The stride is fixed from the
/// starting step, stride = max(floor(m/u), 1); each update maps the state at
/// step m to step max(m - stride, 0); sampling stops at step 0 or after
/// `skip_updates` updates, whichever comes first.
pub fn reverse_skip_sample(
    noisy: &Array1<f64>,
    m: usize,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    skip_updates: usize,
    stride_divisor: usize,
) -> Result<SkipSampleResult, AugmentError> {
    if m < 1 || m > schedule.m_total() {
        return Err(AugmentError::StepOutOfRange {
            step: m,
            total: schedule.m_total(),
        });
    }
    let stride = (m / stride_divisor).max(1);
    let mut cur = noisy.clone();
    let mut step = m;
    let mut updates = 0;
    while step > 0 && updates < skip_updates {
        let eps = predictor.predict(&cur, step);
        let next = step.saturating_sub(stride);
        let ab_m = schedule.alpha_bar(step);
        let ab_n = schedule.alpha_bar(next);
        let clean = (&cur - &(&eps * (1.0 - ab_m).sqrt())) / ab_m.sqrt();
        cur = &clean * ab_n.sqrt() + &(&eps * (1.0 - ab_n).sqrt());
        step = next;
        updates += 1;
    }
    Ok(SkipSampleResult {
        feature: cur,
        final_step: step,
        updates_used: updates,
    })
}

pub fn gaussian_vec(d: usize, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| StandardNormal.sample(rng))
}

/// One augmentation view: (start step, noise draw).
#[derive(Debug, Clone)]
pub struct ViewDraw {
    pub m: usize,
    pub eps: Array1<f64>,
}

pub fn draw_view(cfg: &DiffusionConfig, d: usize, rng: &mut impl Rng) -> ViewDraw {
    ViewDraw {
        m: rng.random_range(cfg.m_min..=cfg.m_max),
        eps: gaussian_vec(d, rng),
    }
}

/// Generates one augmented view from an explicit draw.
pub fn view_from_draw(
    v: &Array1<f64>,
    draw: &ViewDraw,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    cfg: &DiffusionConfig,
) -> Result<Array1<f64>, AugmentError> {
    let noisy = forward_noise(v, draw.m, &draw.eps, schedule)?;
    Ok(reverse_skip_sample(
        &noisy,
        draw.m,
        predictor,
        schedule,
        cfg.skip_updates,
        cfg.stride_divisor,
    )?
    .feature)
}

/// Two distinct augmented views of the same feature, each from its own
/// (start step, noise) draw. The input is never mutated.
pub fn two_view_augment(
    v: &Array1<f64>,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    cfg: &DiffusionConfig,
    rng: &mut impl Rng,
) -> Result<(Array1<f64>, Array1<f64>), AugmentError> {
    let d1 = draw_view(cfg, v.len(), rng);
    let d2 = draw_view(cfg, v.len(), rng);
    Ok((
        view_from_draw(v, &d1, predictor, schedule, cfg)?,
        view_from_draw(v, &d2, predictor, schedule, cfg)?,
    ))
}

/// One (step, noise) pair of the DDPM objective.
#[derive(Debug, Clone)]
pub struct DiffusionDraw {
    pub m: usize,
    pub eps: Array1<f64>,
}

/// Steps are uniform over the whole schedule, noise is standard Gaussian.
pub fn draw_loss_batch(
    n: usize,
    d: usize,
    schedule: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Vec<DiffusionDraw> {
    (0..n)
        .map(|_| DiffusionDraw {
            m: rng.random_range(1..=schedule.m_total()),
            eps: gaussian_vec(d, rng),
        })
        .collect()
}

/// DDPM objective || eps - eps_theta(v_m, m) ||^2 evaluated (no gradients)
/// with explicit draws, so finite-difference checks can reuse the same draws.
pub fn diffusion_loss_eval(
    predictor: &dyn NoisePredictor,
    features: &[Array1<f64>],
    draws: &[DiffusionDraw],
    schedule: &DiffusionSchedule,
    reduction: LossReduction,
) -> Result<f64, AugmentError> {
    if features.is_empty() {
        return Err(AugmentError::EmptyBatch);
    }
    assert_eq!(features.len(), draws.len());
    let mut total = 0.0;
    for (v, draw) in features.iter().zip(draws.iter()) {
        let noisy = forward_noise(v, draw.m, &draw.eps, schedule)?;
        let pred = predictor.predict(&noisy, draw.m);
        let se: f64 = draw
            .eps
            .iter()
            .zip(pred.iter())
            .map(|(e, p)| (e - p) * (e - p))
            .sum();
        total += match reduction {
            LossReduction::SumOverDims => se,
            LossReduction::MeanOverDims => se / v.len() as f64,
        };
    }
    Ok(total / features.len() as f64)
}

/// Convenience wrapper drawing fresh (m, eps) pairs from the rng.
pub fn diffusion_loss(
    predictor: &dyn NoisePredictor,
    features: &[Array1<f64>],
    schedule: &DiffusionSchedule,
    reduction: LossReduction,
    rng: &mut impl Rng,
) -> Result<f64, AugmentError> {
    if features.is_empty() {
        return Err(AugmentError::EmptyBatch);
    }
    let d = features[0].len();
    let draws = draw_loss_batch(features.len(), d, schedule, rng);
    diffusion_loss_eval(predictor, features, &draws, schedule, reduction)
}

// ---------------------------------------------------------------------------
// Learned noise predictor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsilonMlpConfig {
    pub feature_dim: usize,
    pub hidden: usize,
    pub step_embed: usize,
}

impl Default for EpsilonMlpConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            hidden: 64,
            step_embed: 16,
        }
    }
}

/// Two-hidden-layer MLP with a sinusoidal step embedding added to the input
/// projection. Parameter names live under a caller-chosen prefix.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonMlp {
    pub cfg: EpsilonMlpConfig,
}

impl EpsilonMlp {
    pub fn new(cfg: EpsilonMlpConfig) -> Self {
        Self { cfg }
    }

    pub fn init_params(&self, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) {
        let c = &self.cfg;
        store.init_uniform(&format!("{prefix}.w_in"), &[c.feature_dim, c.hidden], c.feature_dim, rng);
        store.init_uniform(&format!("{prefix}.w_emb"), &[c.step_embed, c.hidden], c.step_embed, rng);
        store.init_zeros(&format!("{prefix}.b1"), &[c.hidden]);
        store.init_uniform(&format!("{prefix}.w2"), &[c.hidden, c.hidden], c.hidden, rng);
        store.init_zeros(&format!("{prefix}.b2"), &[c.hidden]);
        store.init_uniform(&format!("{prefix}.w_out"), &[c.hidden, c.feature_dim], c.hidden, rng);
        store.init_zeros(&format!("{prefix}.b_out"), &[c.feature_dim]);
    }

    pub fn step_embedding(&self, m: usize) -> Array1<f64> {
        let e = self.cfg.step_embed;
        let mut out = Array1::zeros(e);
        for i in 0..e / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / e as f64);
            out[2 * i] = (m as f64 * freq).sin();
            out[2 * i + 1] = (m as f64 * freq).cos();
        }
        out
    }

    fn embed_batch(&self, steps: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((steps.len(), self.cfg.step_embed));
        for (i, &m) in steps.iter().enumerate() {
            out.row_mut(i).assign(&self.step_embedding(m));
        }
        out
    }

    /// Differentiable forward over a (B, d) batch of noisy features.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &TapeVars,
        prefix: &str,
        noisy: TensorId,
        steps: &[usize],
    ) -> TensorId {
        let emb = tape.leaf2(self.embed_batch(steps));
        let p = |s: &str| vars.id(&format!("{prefix}.{s}"));
        let xin = tape.matmul(noisy, p("w_in"));
        let xemb = tape.matmul(emb, p("w_emb"));
        let h = tape.add(xin, xemb);
        let h = tape.add_row_bias(h, p("b1"));
        let h = tape.relu(h);
        let h = tape.matmul(h, p("w2"));
        let h = tape.add_row_bias(h, p("b2"));
        let h = tape.relu(h);
        let out = tape.matmul(h, p("w_out"));
        tape.add_row_bias(out, p("b_out"))
    }

    /// Evaluation-only forward for a batch.
    pub fn predict_batch(
        &self,
        store: &ParamStore,
        prefix: &str,
        noisy: &Array2<f64>,
        steps: &[usize],
    ) -> Array2<f64> {
        let mut tape = Tape::new();
        let vars = TapeVars::watch(&mut tape, store);
        let x = tape.leaf2(noisy.clone());
        let out = self.forward_tape(&mut tape, &vars, prefix, x, steps);
        tape.value(out)
            .clone()
            .into_dimensionality()
            .expect("2-d output")
    }
}

/// Frozen-weights view of an [`EpsilonMlp`] usable as a [`NoisePredictor`].
pub struct LearnedNoise<'a> {
    pub mlp: &'a EpsilonMlp,
    pub store: &'a ParamStore,
    pub prefix: &'a str,
}

impl NoisePredictor for LearnedNoise<'_> {
    fn predict(&self, noisy: &Array1<f64>, m: usize) -> Array1<f64> {
        let row = noisy.clone().insert_axis(ndarray::Axis(0));
        let out = self.mlp.predict_batch(self.store, self.prefix, &row, &[m]);
        out.row(0).to_owned()
    }
}

/// Differentiable DDPM loss for training eps_theta. Features are treated as
/// constants (the loss trains the sampler, not the encoder).
pub fn diffusion_loss_tape(
    mlp: &EpsilonMlp,
    tape: &mut Tape,
    vars: &TapeVars,
    prefix: &str,
    features: &Array2<f64>,
    draws: &[DiffusionDraw],
    schedule: &DiffusionSchedule,
    reduction: LossReduction,
) -> TensorId {
    let (b, d) = features.dim();
    assert_eq!(b, draws.len());
    let mut noisy = Array2::zeros((b, d));
    let mut eps = Array2::zeros((b, d));
    for (i, draw) in draws.iter().enumerate() {
        let v = features.row(i).to_owned();
        let z = forward_noise(&v, draw.m, &draw.eps, schedule).expect("valid draw");
        noisy.row_mut(i).assign(&z);
        eps.row_mut(i).assign(&draw.eps);
    }
    let steps: Vec<usize> = draws.iter().map(|d| d.m).collect();
    let noisy_id = tape.leaf2(noisy);
    let eps_id = tape.leaf2(eps);
    let pred = mlp.forward_tape(tape, vars, prefix, noisy_id, &steps);
    let diff = tape.sub(eps_id, pred);
    let sq = tape.mul(diff, diff);
    match reduction {
        LossReduction::SumOverDims => {
            let s = tape.sum_all(sq);
            tape.scale(s, 1.0 / b as f64)
        }
        LossReduction::MeanOverDims => tape.mean_all(sq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn paper_schedule() -> DiffusionSchedule {
        make_schedule(1000, 5e-6, 2e-3).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let s = paper_schedule();
        assert_eq!(s.beta(1), 5e-6);
        assert_eq!(s.beta(1000), 2e-3);
        assert!((s.alpha_bar(1) - 0.999995).abs() < 1e-12);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn schedule_monotone() {
        let s = paper_schedule();
        for m in 1..1000 {
            assert!(s.beta(m) <= s.beta(m + 1));
            assert!(s.alpha_bar(m) > s.alpha_bar(m + 1));
        }
    }

    #[test]
    fn alpha_bar_matches_direct_product() {
        let s = paper_schedule();
        for m in [1usize, 2, 10, 137, 500, 999, 1000] {
            // Independent O(M) product per query.
            let direct: f64 = (1..=m).map(|i| 1.0 - s.beta(i)).product();
            let rel = ((s.alpha_bar(m) - direct) / direct).abs();
            assert!(rel < 1e-12, "m={m} rel={rel}");
        }
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(make_schedule(1, 1e-6, 1e-3).is_err());
        assert!(make_schedule(10, 0.0, 1e-3).is_err());
        assert!(make_schedule(10, 1e-3, 1e-6).is_err());
        assert!(make_schedule(10, 1e-3, 1.0).is_err());
    }

    #[test]
    fn forward_noise_zero_eps() {
        let s = paper_schedule();
        let v = Array1::from_vec(vec![1.0, -2.0, 0.5]);
        let z = forward_noise(&v, 300, &Array1::zeros(3), &s).unwrap();
        let ab = s.alpha_bar(300).sqrt();
        for (a, b) in z.iter().zip(v.iter()) {
            assert!((a - ab * b).abs() < 1e-15);
        }
        // Small m: nearly the identity.
        let z1 = forward_noise(&v, 1, &Array1::zeros(3), &s).unwrap();
        for (a, b) in z1.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn forward_noise_dimension_mismatch() {
        let s = paper_schedule();
        let v = Array1::zeros(3);
        let e = Array1::zeros(4);
        assert!(matches!(
            forward_noise(&v, 10, &e, &s),
            Err(AugmentError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn oracle_single_update_is_exact_renoising() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let v = gaussian_vec(8, &mut rng);
        let eps = gaussian_vec(8, &mut rng);
        let m = 320;
        let noisy = forward_noise(&v, m, &eps, &s).unwrap();
        let oracle = OracleNoise(eps.clone());
        let out = reverse_skip_sample(&noisy, m, &oracle, &s, 1, 8).unwrap();
        let next = m - m / 8;
        assert_eq!(out.final_step, next);
        let expect = forward_noise(&v, next, &eps, &s).unwrap();
        for (a, b) in out.feature.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn m_one_reaches_zero_in_one_update() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let v = gaussian_vec(4, &mut rng);
        let eps = gaussian_vec(4, &mut rng);
        let noisy = forward_noise(&v, 1, &eps, &s).unwrap();
        let out = reverse_skip_sample(&noisy, 1, &OracleNoise(eps), &s, 24, 8).unwrap();
        assert_eq!(out.final_step, 0);
        assert_eq!(out.updates_used, 1);
        for (a, b) in out.feature.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_recovery_from_400() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = {
                let g = gaussian_vec(64, &mut rng);
                let n = g.dot(&g).sqrt();
                g / n
            };
            let eps = gaussian_vec(64, &mut rng);
            let noisy = forward_noise(&v, 400, &eps, &s).unwrap();
            let out = reverse_skip_sample(&noisy, 400, &OracleNoise(eps), &s, 24, 8).unwrap();
            assert_eq!(out.final_step, 0);
            let err = (&out.feature - &v).mapv(|x| x * x).sum().sqrt();
            assert!(err <= 1e-2, "relative error {err}");
            let cos = out.feature.dot(&v)
                / (out.feature.dot(&out.feature).sqrt() * v.dot(&v).sqrt());
            assert!(cos >= 0.99);
        }
    }

    #[test]
    fn two_view_deterministic_given_seed() {
        let s = paper_schedule();
        let cfg = DiffusionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let v = gaussian_vec(16, &mut rng);
        let o = OracleNoise(Array1::zeros(16));
        let (a1, b1) =
            two_view_augment(&v, &o, &s, &cfg, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let (a2, b2) =
            two_view_augment(&v, &o, &s, &cfg, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn identical_draws_give_identical_views() {
        let s = paper_schedule();
        let cfg = DiffusionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let v = gaussian_vec(8, &mut rng);
        let eps = gaussian_vec(8, &mut rng);
        let draw = ViewDraw { m: 250, eps };
        let o = OracleNoise(draw.eps.clone());
        let va = view_from_draw(&v, &draw, &o, &s, &cfg).unwrap();
        let vb = view_from_draw(&v, &draw, &o, &s, &cfg).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn two_view_does_not_mutate_input() {
        let s = paper_schedule();
        let cfg = DiffusionConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let v = gaussian_vec(8, &mut rng);
        let before = v.clone();
        let o = OracleNoise(Array1::zeros(8));
        let _ = two_view_augment(&v, &o, &s, &cfg, &mut rng).unwrap();
        assert_eq!(v, before);
    }

    struct ZeroPredictor;
    impl NoisePredictor for ZeroPredictor {
        fn predict(&self, noisy: &Array1<f64>, _m: usize) -> Array1<f64> {
            Array1::zeros(noisy.len())
        }
    }

    #[test]
    fn zero_predictor_loss_near_expected_noise_energy() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let d = 16;
        let feats: Vec<Array1<f64>> = (0..400).map(|_| gaussian_vec(d, &mut rng)).collect();
        let mean = diffusion_loss(
            &ZeroPredictor,
            &feats,
            &s,
            LossReduction::MeanOverDims,
            &mut rng,
        )
        .unwrap();
        assert!((mean - 1.0).abs() < 0.15, "mean-over-dims loss {mean}");
        let sum = diffusion_loss(
            &ZeroPredictor,
            &feats,
            &s,
            LossReduction::SumOverDims,
            &mut rng,
        )
        .unwrap();
        assert!((sum - d as f64).abs() < 0.15 * d as f64, "sum loss {sum}");
    }

    #[test]
    fn oracle_predictor_loss_is_zero_and_nonnegative() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let v = gaussian_vec(6, &mut rng);
        let draws = vec![DiffusionDraw {
            m: 123,
            eps: gaussian_vec(6, &mut rng),
        }];
        let oracle = OracleNoise(draws[0].eps.clone());
        let loss = diffusion_loss_eval(
            &oracle,
            &[v.clone()],
            &draws,
            &s,
            LossReduction::MeanOverDims,
        )
        .unwrap();
        assert!(loss.abs() < 1e-24);
        let z = diffusion_loss_eval(
            &ZeroPredictor,
            &[v],
            &draws,
            &s,
            LossReduction::MeanOverDims,
        )
        .unwrap();
        assert!(z >= 0.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let s = paper_schedule();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        assert!(matches!(
            diffusion_loss(&ZeroPredictor, &[], &s, LossReduction::MeanOverDims, &mut rng),
            Err(AugmentError::EmptyBatch)
        ));
    }

    #[test]
    fn mlp_diffusion_loss_gradients_match_finite_differences() {
        let s = make_schedule(50, 1e-4, 1e-2).unwrap();
        let cfg = EpsilonMlpConfig {
            feature_dim: 3,
            hidden: 4,
            step_embed: 4,
        };
        let mlp = EpsilonMlp::new(cfg);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        mlp.init_params(&mut store, "eps", &mut rng);
        let feats = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let draws = draw_loss_batch(2, 3, &s, &mut rng);

        let mut tape = Tape::new();
        let vars = TapeVars::watch(&mut tape, &store);
        let loss = diffusion_loss_tape(
            &mlp,
            &mut tape,
            &vars,
            "eps",
            &feats,
            &draws,
            &s,
            LossReduction::MeanOverDims,
        );
        let grads = tape.backward(loss);
        let by_name = vars.grads(&grads, &store);

        let eval = |st: &ParamStore| -> f64 {
            let feats_arr: Vec<Array1<f64>> = (0..2).map(|i| feats.row(i).to_owned()).collect();
            let learned = LearnedNoise {
                mlp: &mlp,
                store: st,
                prefix: "eps",
            };
            diffusion_loss_eval(&learned, &feats_arr, &draws, &s, LossReduction::MeanOverDims)
                .unwrap()
        };
        crate::nn::check_against_finite_differences(&store, &by_name, eval, 1e-4).unwrap();
    }
}
