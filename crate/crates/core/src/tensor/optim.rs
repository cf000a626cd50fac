use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            lr,
            ..Self::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            lr,
            ..Self::default()
        }
    }
}

/// Applies accumulated gradients to a [`ParamSet`]. Holds Adam moments.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Updates every parameter from its gradient buffer, then zeroes the
    /// buffers. Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        let mut sq_norm = 0.0;
        for (_, p) in params.iter() {
            if !p.grad.all_finite() {
                return Err(Error::Training(format!("non-finite gradient in parameter {}", p.name)));
            }
            sq_norm += p.grad.data().iter().map(|g| g * g).sum::<f64>();
        }
        let norm = sq_norm.sqrt();
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        if self.first.len() != params.len() {
            self.first = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let cfg = self.config;
        let bias1 = 1.0 - cfg.beta1.powi(self.steps as i32);
        let bias2 = 1.0 - cfg.beta2.powi(self.steps as i32);
        for (i, p) in params.params_mut().iter_mut().enumerate() {
            let grads = p.grad.data().to_vec();
            let values = p.value.data_mut();
            match cfg.algorithm {
                Algorithm::Sgd => {
                    for (v, g) in values.iter_mut().zip(&grads) {
                        *v -= cfg.lr * g * clip;
                    }
                }
                Algorithm::Adam => {
                    let (m, s) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (v, g)) in values.iter_mut().zip(&grads).enumerate() {
                        let g = g * clip;
                        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                        s[j] = cfg.beta2 * s[j] + (1.0 - cfg.beta2) * g * g;
                        let m_hat = m[j] / bias1;
                        let s_hat = s[j] / bias2;
                        *v -= cfg.lr * m_hat / (s_hat.sqrt() + cfg.eps);
                    }
                }
            }
            p.grad.data_mut().fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::new(&[1], vec![value]).unwrap()).unwrap();
        ps.params_mut()[0].grad = Tensor::new(&[1], vec![grad]).unwrap();
        ps
    }

    #[test]
    fn sgd_definition() {
        let mut ps = single(1.0, 1.0);
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut ps).unwrap();
        assert!((ps.value(crate::tensor::ParamId(0)).item() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(0.1)] {
            let mut ps = single(0.37, 0.0);
            Optimizer::new(cfg).step(&mut ps).unwrap();
            assert_eq!(ps.value(crate::tensor::ParamId(0)).item(), 0.37);
        }
    }

    #[test]
    fn adam_first_step_is_lr_regardless_of_scale() {
        for g in [1.0, 1e-3, 250.0] {
            let mut ps = single(0.0, g);
            let mut cfg = OptimizerConfig::adam(0.01);
            cfg.clip_norm = None;
            Optimizer::new(cfg).step(&mut ps).unwrap();
            let moved = ps.value(crate::tensor::ParamId(0)).item();
            assert!((moved + 0.01).abs() < 1e-7, "g={g} moved {moved}");
        }
    }

    #[test]
    fn global_norm_clipping() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::zeros(&[1])).unwrap();
        ps.add("b", Tensor::zeros(&[1])).unwrap();
        ps.params_mut()[0].grad = Tensor::new(&[1], vec![30.0]).unwrap();
        ps.params_mut()[1].grad = Tensor::new(&[1], vec![40.0]).unwrap();
        Optimizer::new(OptimizerConfig::sgd(1.0)).step(&mut ps).unwrap();
        let a = ps.value(crate::tensor::ParamId(0)).item();
        let b = ps.value(crate::tensor::ParamId(1)).item();
        assert!((a + 3.0).abs() < 1e-12 && (b + 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut ps = single(1.0, f64::NAN);
        let err = Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut ps).unwrap_err();
        assert!(matches!(&err, Error::Training(m) if m.contains("parameter p")), "{err}");
        assert_eq!(ps.value(crate::tensor::ParamId(0)).item(), 1.0);
    }
}
