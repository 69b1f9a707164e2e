use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `value ← value · (1 − lr · weight_decay)` before the
    /// Adam update, on parameters flagged for decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            config,
            t: 0,
            first: zeros(),
            second: zeros(),
        }
    }
}

/// One Adam step with bias correction over every parameter of `params`.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) {
    assert_eq!(
        params.len(),
        state.first.len(),
        "optimizer state built for another store"
    );
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params
        .iter_mut()
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        let decay = if p.decay {
            1.0 - lr * weight_decay
        } else {
            1.0
        };
        let grad = p.grad.as_ref().expect("gradients allocated");
        for (((w, &g), mi), vi) in p
            .value
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w *= decay;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.add("p", DenseMatrix::filled(1, 1, v), true).unwrap();
        ps
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut ps = scalar_store(1.5);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg, &ps);
        for k in 1..=3 {
            adam_step(&mut ps, &mut st);
            assert_eq!(st.t, k);
        }
        assert_eq!(ps.iter().next().unwrap().value[(0, 0)], 1.5);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut ps = scalar_store(0.7);
        let id = ps.ids().next().unwrap();
        ps.accumulate(id, &DenseMatrix::filled(1, 1, 3.0)).unwrap();
        let mut st = AdamState::new(
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            },
            &ps,
        );
        adam_step(&mut ps, &mut st);
        assert_eq!(ps.value(id)[(0, 0)], 0.7);
    }

    #[test]
    fn two_steps_match_hand_arithmetic() {
        // p0 = 1, g1 = 0.5, g2 = -0.2, lr = 0.1, betas (0.9, 0.999), eps 1e-8
        let mut ps = scalar_store(1.0);
        let id = ps.ids().next().unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut st = AdamState::new(cfg, &ps);

        ps.zero_grads();
        ps.accumulate(id, &DenseMatrix::filled(1, 1, 0.5)).unwrap();
        adam_step(&mut ps, &mut st);
        // m1 = 0.05, v1 = 0.00025; m̂ = 0.5, v̂ = 0.25 → step = 0.1 · 0.5 / (0.5 + 1e-8)
        let p1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((ps.value(id)[(0, 0)] - p1).abs() < 1e-12);

        ps.zero_grads();
        ps.accumulate(id, &DenseMatrix::filled(1, 1, -0.2)).unwrap();
        adam_step(&mut ps, &mut st);
        // m2 = 0.9·0.05 − 0.1·0.2 = 0.025, v2 = 0.999·0.00025 + 0.001·0.04 = 0.00028975
        let m_hat = 0.025 / (1.0 - 0.81);
        let v_hat: f64 = 0.000_289_75 / (1.0 - 0.998_001);
        let p2 = p1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((ps.value(id)[(0, 0)] - p2).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_scales_before_update() {
        let mut ps = scalar_store(2.0);
        let id = ps.ids().next().unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut st = AdamState::new(cfg, &ps);
        adam_step(&mut ps, &mut st);
        assert!((ps.value(id)[(0, 0)] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }
}
