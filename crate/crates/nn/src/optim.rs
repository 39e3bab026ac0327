//! Adam and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::params::{ParamKind, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every trainable parameter with the
    /// gradients currently held in the store.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.kind)).collect();
        for (k, (id, kind)) in ids.into_iter().enumerate() {
            if kind != ParamKind::Trainable {
                continue;
            }
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, &g), mi), vi) in p.value.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
    }
}

/// Cosine decay from `lr0` at step 0 to zero at `total_steps`; zero beyond.
pub fn cosine_decay(lr0: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return 0.0;
    }
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::Trainable, Tensor::new(vec![values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store(&[1.0, -2.0, 3.5]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            adam.step(&mut s, 0.01);
        }
        assert_eq!(s.get(s.find("w").unwrap()).value.data, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut s = ParamStore::new();
        let id = s.add("running", ParamKind::Buffer, Tensor::filled(&[2], 1.0));
        s.get_mut(id).grad = vec![5.0, 5.0];
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.step(&mut s, 0.1);
        assert_eq!(s.get(id).value.data, vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn first_step_is_lr_times_sign(g in prop::sample::select(vec![-1.0, 1.0]).prop_flat_map(|s| (1e-3f64..1e3).prop_map(move |m| s * m)), lr in 1e-5f64..1e-1) {
            let mut s = store(&[0.0]);
            let id = s.find("w").unwrap();
            s.get_mut(id).grad = vec![g];
            let cfg = AdamConfig::default();
            let mut adam = Adam::new(cfg, &s);
            adam.step(&mut s, lr);
            let delta = s.get(id).value.data[0];
            let expected = -lr * g / (g.abs() + cfg.eps);
            prop_assert!((delta - expected).abs() <= 1e-12 * lr);
            prop_assert!((delta + lr * g.signum()).abs() <= 1e-5 * lr);
        }

        #[test]
        fn cosine_is_monotone_and_bounded(lr0 in 1e-6f64..1.0, total in 1u64..10_000, a in 0u64..12_000, b in 0u64..12_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            let (x, y) = (cosine_decay(lr0, lo, total), cosine_decay(lr0, hi, total));
            prop_assert!(y <= x + 1e-15);
            prop_assert!((0.0..=lr0).contains(&x));
        }
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_decay(1e-3, 0, 100), 1e-3);
        assert!((cosine_decay(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
        assert_eq!(cosine_decay(1e-3, 100, 100), 0.0);
        assert_eq!(cosine_decay(1e-3, 250, 100), 0.0);
    }
}
