use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 4e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Bias-corrected Adam moments, one pair of buffers per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let m: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.get(id).numel()]).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One update of every parameter that carries a gradient. Parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if self.m.len() != params.len() {
            bail!(
                Dimension,
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                params.len()
            );
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            let p = params.get_mut(id);
            if self.m[id.0].len() != p.numel() {
                bail!(
                    Dimension,
                    "optimizer moment of length {} for parameter of {} values",
                    self.m[id.0].len(),
                    p.numel()
                );
            }
            if !p.requires_grad() {
                continue;
            }
            let grad = p.grad().map(<[f64]>::to_vec);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let values = p.values_mut();
            for i in 0..values.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(values: &[f64], grad: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::new(&[values.len()], values.to_vec()).unwrap()).unwrap();
        s.get_mut(id).accumulate_grad(grad).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = store_with(&[1.0, -2.0, 0.5], &[0.3, -7.0, 1e-3]);
        let cfg = AdamConfig {
            eps: 1e-15,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &s);
        adam.step(&mut s).unwrap();
        let got = s.by_name("w").unwrap().values();
        let want = [1.0 - 4e-4, -2.0 + 4e-4, 0.5 - 4e-4];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store_with(&[1.0, 2.0], &[0.0, 0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        assert_eq!(s.by_name("w").unwrap().values(), &[1.0, 2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn two_steps_match_unrolled_recurrence() {
        let g = 0.25;
        let mut s = store_with(&[0.0], &[g]);
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        };
        let mut adam = AdamState::new(cfg, &s);
        adam.step(&mut s).unwrap();
        adam.step(&mut s).unwrap();

        // hand-unrolled: m1 = .1g, v1 = .02g², m2 = .19g, v2 = .0396g²
        let upd = |m: f64, v: f64, t: i32| {
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.98f64.powi(t));
            0.01 * mh / (vh.sqrt() + 1e-8)
        };
        let want = -upd(0.1 * g, 0.02 * g * g, 1) - upd(0.19 * g, 0.0396 * g * g, 2);
        assert!((adam.m[0][0] - 0.19 * g).abs() < 1e-15);
        assert!((adam.v[0][0] - 0.0396 * g * g).abs() < 1e-15);
        assert!((s.by_name("w").unwrap().values()[0] - want).abs() < 1e-14);
    }

    #[test]
    fn mismatched_state_is_a_dimension_error() {
        let mut s = store_with(&[1.0], &[1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &ParamStore::new());
        assert!(matches!(adam.step(&mut s), Err(crate::Error::Dimension(_))));
    }
}
