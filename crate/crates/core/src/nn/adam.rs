use crate::nn::{Gradients, Mlp};
use crate::{Error, Result};

/// Adam moments for one network. No weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl AdamState {
    /// β = (0.9, 0.99), ε = 1e-8.
    pub fn new(param_count: usize) -> Self {
        Self::with_betas(param_count, 0.9, 0.99, 1e-8)
    }

    pub fn with_betas(param_count: usize, beta1: f32, beta2: f32, eps: f32) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn for_net(net: &Mlp) -> Self {
        Self::new(net.param_count())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update of `weights` in place. On a non-finite
/// gradient nothing is modified.
pub fn adam_step(weights: &mut [f32], grads: &Gradients, state: &mut AdamState, lr: f32) -> Result<()> {
    let g = grads.as_slice();
    if weights.len() != g.len() || weights.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam shapes disagree: {} weights, {} grads, {} moments",
            weights.len(),
            g.len(),
            state.m.len()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - (state.beta1 as f64).powi(t);
    let bc2 = 1.0 - (state.beta2 as f64).powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps as f64);
    for i in 0..weights.len() {
        let gi = g[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * gi;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * gi * gi;
        let m_hat = state.m[i] as f64 / bc1;
        let v_hat = state.v[i] as f64 / bc2;
        weights[i] -= (lr as f64 * m_hat / (v_hat.sqrt() + eps)) as f32;
    }
    Ok(())
}

/// Exponential moving average of a parameter vector.
#[derive(Debug, Clone)]
pub struct Ema {
    decay: f32,
    shadow: Vec<f32>,
}

impl Ema {
    pub fn new(decay: f32, params: &[f32]) -> Self {
        Self {
            decay,
            shadow: params.to_vec(),
        }
    }

    pub fn update(&mut self, params: &[f32]) {
        let d = self.decay;
        for (s, &p) in self.shadow.iter_mut().zip(params) {
            *s = d * *s + (1.0 - d) * p;
        }
    }

    pub fn weights(&self) -> &[f32] {
        &self.shadow
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = vec![0.5f32, -1.0, 2.0];
        let mut st = AdamState::new(3);
        adam_step(&mut w, &Gradients(vec![0.0; 3]), &mut st, 1e-2).unwrap();
        assert_eq!(w, vec![0.5, -1.0, 2.0]);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = vec![1.0f32];
        let mut st = AdamState::new(1);
        adam_step(&mut w, &Gradients(vec![1.0]), &mut st, 1e-4).unwrap();
        let expected = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((w[0] as f64 - expected).abs() < 1e-7);
    }

    #[test]
    fn repeated_gradient_does_not_grow_step() {
        let mut w = vec![0.0f32];
        let mut st = AdamState::new(1);
        adam_step(&mut w, &Gradients(vec![0.3]), &mut st, 1e-3).unwrap();
        let first = w[0].abs();
        let before = w[0];
        adam_step(&mut w, &Gradients(vec![0.3]), &mut st, 1e-3).unwrap();
        let second = (w[0] - before).abs();
        assert!(second <= first * (1.0 + 1e-6), "{second} > {first}");
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut w = vec![0.5f32, 0.25];
        let mut st = AdamState::new(2);
        let err = adam_step(&mut w, &Gradients(vec![f32::NAN, 1.0]), &mut st, 1e-2);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(w, vec![0.5, 0.25]);
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = vec![0.5f32];
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut w, &Gradients(vec![0.0, 0.0]), &mut st, 1e-2).is_err());
    }

    #[test]
    fn ema_tracks_towards_params() {
        let mut ema = Ema::new(0.5, &[0.0]);
        ema.update(&[1.0]);
        ema.update(&[1.0]);
        assert!((ema.weights()[0] - 0.75).abs() < 1e-7);
    }
}
