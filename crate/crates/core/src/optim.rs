//! Adam with linear warmup, decoupled weight decay and global-norm clipping.

use crate::model::ParameterStore;
use crate::tensor::{Mat, Real};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables.
    pub weight_decay: f64,
    /// Fraction of total steps spent warming the learning rate up linearly;
    /// constant afterwards.
    pub warmup_ratio: f64,
    /// Planned total steps, used only for the warmup horizon.
    pub total_steps: usize,
    /// Global gradient-norm clip threshold; 0 disables.
    pub grad_clip: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            warmup_ratio: 0.1,
            total_steps: 0,
            grad_clip: 0.0,
        }
    }
}

impl OptimConfig {
    fn lr_at(&self, step: usize) -> f64 {
        let warmup = (self.warmup_ratio * self.total_steps as f64).ceil() as usize;
        if warmup > 0 && step < warmup {
            self.lr * (step + 1) as f64 / warmup as f64
        } else {
            self.lr
        }
    }
}

/// Adam state aligned with one parameter store's tensor order.
pub struct Adam<F: Real> {
    m: Vec<Mat<F>>,
    v: Vec<Mat<F>>,
    step: usize,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParameterStore<F>) -> Self {
        let m = (0..store.len())
            .map(|i| {
                let (r, c) = store.tensor(i).data.shape();
                Mat::zeros(r, c)
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        Adam { m, v, step: 0 }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update over every unfrozen tensor with a gradient. Clipping, when
    /// enabled, rescales the provided gradients by the global norm first.
    pub fn step(
        &mut self,
        store: &mut ParameterStore<F>,
        grads: &[Option<Mat<F>>],
        cfg: &OptimConfig,
    ) {
        assert_eq!(grads.len(), store.len(), "gradient slots vs tensors");
        let mut clip_scale = 1.0f64;
        if cfg.grad_clip > 0.0 {
            let norm = grads
                .iter()
                .flatten()
                .map(Mat::squared_norm)
                .sum::<f64>()
                .sqrt();
            if norm > cfg.grad_clip {
                clip_scale = cfg.grad_clip / norm;
            }
        }
        let lr = cfg.lr_at(self.step);
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (idx, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let tensor = store.tensor_mut(idx);
            if tensor.frozen {
                continue;
            }
            let m = self.m[idx].as_mut_slice();
            let v = self.v[idx].as_mut_slice();
            let p = tensor.data.as_mut_slice();
            for i in 0..p.len() {
                let g = grad.as_slice()[i].to_f64c() * clip_scale;
                let mi = cfg.beta1 * m[i].to_f64c() + (1.0 - cfg.beta1) * g;
                let vi = cfg.beta2 * v[i].to_f64c() + (1.0 - cfg.beta2) * g * g;
                m[i] = F::from_f64c(mi);
                v[i] = F::from_f64c(vi);
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let mut x = p[i].to_f64c();
                x -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * x);
                p[i] = F::from_f64c(x);
            }
        }
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_tensors_never_move() {
        let mut store: ParameterStore<f32> = ParameterStore::new();
        store.insert("a", Mat::from_vec(1, 2, vec![1.0, 2.0]), true);
        store.insert("b", Mat::from_vec(1, 2, vec![3.0, 4.0]), false);
        let mut adam = Adam::new(&store);
        let grads = vec![
            Some(Mat::from_vec(1, 2, vec![1.0, 1.0])),
            Some(Mat::from_vec(1, 2, vec![1.0, 1.0])),
        ];
        adam.step(&mut store, &grads, &OptimConfig::default());
        assert_eq!(store.get("a").unwrap().as_slice(), &[1.0, 2.0]);
        assert_ne!(store.get("b").unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn warmup_scales_lr_linearly() {
        let cfg = OptimConfig {
            lr: 1.0,
            warmup_ratio: 0.5,
            total_steps: 10,
            ..Default::default()
        };
        assert!((cfg.lr_at(0) - 0.2).abs() < 1e-12);
        assert!((cfg.lr_at(4) - 1.0).abs() < 1e-12);
        assert!((cfg.lr_at(9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_bounds_effective_gradient() {
        // With a huge gradient and clip=1, the first Adam update magnitude
        // stays ~lr regardless of gradient scale.
        let mut store: ParameterStore<f32> = ParameterStore::new();
        store.insert("a", Mat::from_vec(1, 1, vec![0.0]), false);
        let mut adam = Adam::new(&store);
        let cfg = OptimConfig {
            lr: 0.1,
            grad_clip: 1.0,
            warmup_ratio: 0.0,
            ..Default::default()
        };
        adam.step(&mut store, &[Some(Mat::from_vec(1, 1, vec![1e9]))], &cfg);
        let moved = store.get("a").unwrap().as_slice()[0].abs();
        assert!(moved <= 0.11, "moved {moved}");
    }
}
