use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer. Moment buffers are created
/// lazily, keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter. Frozen parameters are
    /// left untouched; a trainable parameter without a gradient is an error.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some((name, _)) = store.iter().find(|(_, p)| p.trainable && p.grad.is_none()) {
            return Err(Error::MissingGrad(name.to_string()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(
            "w",
            Tensor::new(vec![values.len()], values.to_vec()).unwrap(),
        )
        .unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store(&[1.0, -2.0, 3.0]);
        s.accumulate_grad("w", &[0.0; 3]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut s).unwrap();
        assert_eq!(s.value("w").unwrap().data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = store(&[0.5, 0.5, 0.5]);
        s.accumulate_grad("w", &[2.0, -0.3, 7.0]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut s).unwrap();
        let w = s.value("w").unwrap().data();
        let expect = [0.5 - 1e-3, 0.5 + 1e-3, 0.5 - 1e-3];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut s = store(&[1.0]);
        s.insert("other", Tensor::zeros(&[2])).unwrap();
        s.accumulate_grad("w", &[1.0]).unwrap();
        let err = Adam::new(AdamConfig::default()).step(&mut s).unwrap_err();
        assert!(matches!(err, Error::MissingGrad(n) if n == "other"));
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut s = store(&[1.0]);
        s.set_trainable("w", false);
        Adam::new(AdamConfig::default()).step(&mut s).unwrap();
        assert_eq!(s.value("w").unwrap().data(), &[1.0]);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut s = store(&[0.1, 0.2, 0.3]);
            let mut opt = Adam::new(AdamConfig::default());
            for k in 0..5 {
                s.zero_grad();
                s.accumulate_grad("w", &[k as f64 * 0.3 - 0.5, 0.2, -1.0])
                    .unwrap();
                opt.step(&mut s).unwrap();
            }
            s.value("w").unwrap().clone()
        };
        assert_eq!(run(), run());
    }
}
