use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameter update rule. Gradients are read, never cleared; call
/// [`ParamStore::zero_grads`] before the next accumulation.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Self {
        match config {
            OptimizerConfig::Sgd => Optimizer::Sgd,
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let zeros: Vec<Vec<f64>> = store
                    .ids()
                    .map(|id| vec![0.0; store.value(id).len()])
                    .collect();
                Optimizer::Adam {
                    beta1,
                    beta2,
                    eps,
                    t: 0,
                    m: zeros.clone(),
                    v: zeros,
                }
            }
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        {
            let (values, grads) = store.values_and_grads_mut();
            match self {
                Optimizer::Sgd => {
                    for (p, g) in values.iter_mut().zip(grads) {
                        for (pv, gv) in p.iter_mut().zip(g) {
                            *pv -= lr * gv;
                        }
                    }
                }
                Optimizer::Adam {
                    beta1,
                    beta2,
                    eps,
                    t,
                    m,
                    v,
                } => {
                    *t += 1;
                    let bc1 = 1.0 - beta1.powi(*t as i32);
                    let bc2 = 1.0 - beta2.powi(*t as i32);
                    for ((p, g), (mt, vt)) in values
                        .iter_mut()
                        .zip(grads)
                        .zip(m.iter_mut().zip(v.iter_mut()))
                    {
                        for i in 0..p.len() {
                            let gi = g[i];
                            mt[i] = *beta1 * mt[i] + (1.0 - *beta1) * gi;
                            vt[i] = *beta2 * vt[i] + (1.0 - *beta2) * gi * gi;
                            let mhat = mt[i] / bc1;
                            let vhat = vt[i] / bc2;
                            p[i] -= lr * mhat / (vhat.sqrt() + *eps);
                        }
                    }
                }
            }
        }
        store.bump_step();
    }
}

/// `(pred − target)²` and its derivative w.r.t. `pred`.
#[inline]
pub fn squared_error(pred: f64, target: f64) -> (f64, f64) {
    let e = pred - target;
    (e * e, 2.0 * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_store(p: f64, g: f64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let id = s.add("p", 1, 1, Init::Zeros, &mut rng);
        s.value_mut(id)[0] = p;
        s.grad_mut(id)[0] = g;
        s
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut s = scalar_store(1.0, 2.0);
        let mut opt = Optimizer::new(OptimizerConfig::Sgd, &s);
        opt.step(&mut s, 0.1);
        assert!((s.scalar(0) - 0.8).abs() < 1e-15);
        assert_eq!(s.steps(), 1);
        // gradients untouched
        assert_eq!(s.grad_scalar(0), 2.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::Sgd, OptimizerConfig::default()] {
            let mut s = scalar_store(1.5, 0.0);
            let mut opt = Optimizer::new(cfg, &s);
            opt.step(&mut s, 0.1);
            assert_eq!(s.scalar(0), 1.5);
        }
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = scalar_store(0.3, -0.7);
        let mut b = scalar_store(0.3, -0.7);
        let mut oa = Optimizer::new(OptimizerConfig::default(), &a);
        let mut ob = Optimizer::new(OptimizerConfig::default(), &b);
        for _ in 0..5 {
            oa.step(&mut a, 0.01);
            ob.step(&mut b, 0.01);
        }
        assert!(a.values_bit_equal(&b));
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut s = scalar_store(0.0, 4.0);
        let mut opt = Optimizer::new(OptimizerConfig::default(), &s);
        opt.step(&mut s, 0.01);
        assert!((s.scalar(0) + 0.01).abs() < 1e-9);
    }

    #[test]
    fn squared_error_hand_derivative() {
        // loss = (w·x − y)², w = 1, x = 2, y = 0 → dL/dw = 2·(2)·x = 8
        let (loss, dpred) = squared_error(1.0 * 2.0, 0.0);
        assert_eq!(loss, 4.0);
        assert_eq!(dpred * 2.0, 8.0);
    }
}
