//! Adaptive-moment optimizer with decoupled weight decay.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::params::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update with the given learning rate. Decay is decoupled: the
    /// shrinkage term multiplies the parameter, not the gradient.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &BTreeMap<String, ArrayD<f64>>,
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            *m = &*m * self.beta1 + &(g * (1.0 - self.beta1));
            *v = &*v * self.beta2 + &(g.mapv(|x| x * x) * (1.0 - self.beta2));
            let p = store.get_mut(name);
            for ((pi, mi), vi) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *pi -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * *pi);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn converges_on_quadratic() {
        // Minimize 0.5 * ||w - target||^2.
        let target = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0, -2.0, 0.5]).unwrap();
        let mut store = ParamStore::new();
        store.init_zeros("w", &[3]);
        let mut opt = AdamW::new(0.0);
        for _ in 0..2000 {
            let g = store.get("w") - &target;
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), g);
            opt.step(&mut store, &grads, 0.01);
        }
        for (w, t) in store.get("w").iter().zip(target.iter()) {
            assert!((w - t).abs() < 1e-3);
        }
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut store = ParamStore::new();
        store.insert("w", ArrayD::from_elem(IxDyn(&[1]), 1.0));
        let mut opt = AdamW::new(0.1);
        let zero_grad: BTreeMap<String, ArrayD<f64>> =
            [("w".to_string(), ArrayD::zeros(IxDyn(&[1])))].into();
        for _ in 0..10 {
            opt.step(&mut store, &zero_grad, 0.1);
        }
        let w = store.get("w")[[0]];
        assert!(w < 1.0 && w > 0.0);
    }
}
