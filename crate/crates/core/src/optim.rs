//! AdamW with decoupled weight decay.

use alloc::vec::Vec;

use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Hyperparameters. The paper only pins the initial learning rate; the
/// remaining defaults are the conventional ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First/second moment buffers, one pair per parameter, plus the step count.
#[derive(Debug, Clone)]
pub struct AdamWState<E> {
    pub step: u64,
    pub m: Vec<Tensor<E>>,
    pub v: Vec<Tensor<E>>,
}

impl<E: Scalar> AdamWState<E> {
    pub fn new(store: &ParamStore<E>) -> Self {
        let m = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let v = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamWState { step: 0, m, v }
    }
}

/// One optimizer step over every parameter in the store. Decoupled decay is
/// applied to the parameter before the moment-based update term. A store
/// with no parameters is a no-op (the step count does not advance).
pub fn adamw_step<E: Scalar>(store: &mut ParamStore<E>, state: &mut AdamWState<E>, hp: &AdamW) {
    if store.is_empty() {
        return;
    }
    state.step += 1;
    let t = state.step;
    let lr = E::from_f64(hp.lr);
    let b1 = E::from_f64(hp.beta1);
    let b2 = E::from_f64(hp.beta2);
    let one_m_b1 = E::from_f64(1.0 - hp.beta1);
    let one_m_b2 = E::from_f64(1.0 - hp.beta2);
    let eps = E::from_f64(hp.eps);
    let decay = E::from_f64(hp.lr * hp.weight_decay);
    let bc1 = E::from_f64(1.0 - hp.beta1.powi(t as i32));
    let bc2 = E::from_f64(1.0 - hp.beta2.powi(t as i32));

    for idx in 0..store.len() {
        let id = crate::params::ParamId(idx);
        let p = store.get(id);
        let shape = p.value.shape().to_vec();
        let mut theta: Vec<E> = p.value.data().to_vec();
        let grad = p.grad.data();
        let mut m: Vec<E> = state.m[idx].data().to_vec();
        let mut v: Vec<E> = state.v[idx].data().to_vec();
        for i in 0..theta.len() {
            theta[i] = theta[i] - decay * theta[i];
            m[i] = b1 * m[i] + one_m_b1 * grad[i];
            v[i] = b2 * v[i] + one_m_b2 * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        state.m[idx] = Tensor::from_vec(shape.clone(), m).expect("moment shape");
        state.v[idx] = Tensor::from_vec(shape.clone(), v).expect("moment shape");
        store
            .set_value(id, Tensor::from_vec(shape, theta).expect("param shape"))
            .expect("param shape unchanged");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_leaves_param_unchanged() {
        let mut store = ParamStore::<f64>::new();
        let id = store.create("theta".into(), Tensor::scalar(1.5));
        let mut state = AdamWState::new(&store);
        let hp = AdamW { weight_decay: 0.0, ..AdamW::default() };
        adamw_step(&mut store, &mut state, &hp);
        assert_eq!(store.get(id).value.item(), 1.5);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_grad_decay_only_scales_param() {
        let mut store = ParamStore::<f64>::new();
        let id = store.create("theta".into(), Tensor::scalar(2.0));
        let mut state = AdamWState::new(&store);
        let hp = AdamW { lr: 1e-3, weight_decay: 0.1, ..AdamW::default() };
        adamw_step(&mut store, &mut state, &hp);
        assert!((store.get(id).value.item() - 2.0 * (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn scalar_step_matches_hand_computed_update() {
        // theta = 1, g = 1, lr = 0.1, wd = 0, first step:
        //   m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
        //   theta' = 1 - 0.1 * 1 / (1 + 1e-8)
        let mut store = ParamStore::<f64>::new();
        let id = store.create("theta".into(), Tensor::scalar(1.0));
        store.set_grad(id, Tensor::scalar(1.0)).unwrap();
        let mut state = AdamWState::new(&store);
        let hp = AdamW { lr: 0.1, weight_decay: 0.0, ..AdamW::default() };
        adamw_step(&mut store, &mut state, &hp);
        let expect = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((store.get(id).value.item() - expect).abs() < 1e-16);
        assert!((state.m[0].item() - 0.1).abs() < 1e-16);
        assert!((state.v[0].item() - 0.001).abs() < 1e-16);
    }

    #[test]
    fn empty_store_is_a_noop() {
        let mut store = ParamStore::<f64>::new();
        let mut state = AdamWState::new(&store);
        adamw_step(&mut store, &mut state, &AdamW::default());
        assert_eq!(state.step, 0);
    }
}
