//! AdamW with decoupled weight decay, and a linear warmup/decay schedule.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> AdamW<T> {
    /// betas (0.9, 0.999), eps 1e-8.
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            weight_decay: T::lit(weight_decay),
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update with learning rate `lr * lr_scale`.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr_scale: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let lr = self.lr * lr_scale;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            params[i] -= lr * self.weight_decay * params[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Learning-rate multiplier: rises linearly from 0 over `warmup_steps`,
/// then falls linearly to 0 at `total_steps`. `step` counts from 0.
pub fn linear_warmup_decay(step: usize, warmup_steps: usize, total_steps: usize) -> f64 {
    if step < warmup_steps {
        return step as f64 / warmup_steps.max(1) as f64;
    }
    let remaining = total_steps.saturating_sub(step) as f64;
    (remaining / total_steps.saturating_sub(warmup_steps).max(1) as f64).max(0.0)
}

/// Warmup length for a fractional warmup, rounded up.
pub fn warmup_steps(fraction: f64, total_steps: usize) -> usize {
    (fraction * total_steps as f64).ceil() as usize
}
