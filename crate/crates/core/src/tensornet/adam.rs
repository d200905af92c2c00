//! Adam with bias correction.

use crate::tensornet::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One optimizer step over every parameter, reading each `Param`'s gradient
/// slot. `t` is the 1-based step count used for bias correction.
pub fn adam_step(params: &mut [&mut Param], opt: &AdamParams, t: usize) {
    assert!(t >= 1, "adam step count is 1-based");
    let bc1 = 1.0 - opt.beta1.powi(t as i32);
    let bc2 = 1.0 - opt.beta2.powi(t as i32);
    for p in params.iter_mut() {
        let n = p.len();
        for idx in 0..n {
            let g = p.tensor.grad().expect("param grad")[idx];
            let m = opt.beta1 * p.adam_m[idx] + (1.0 - opt.beta1) * g;
            let v = opt.beta2 * p.adam_v[idx] + (1.0 - opt.beta2) * g * g;
            p.adam_m[idx] = m;
            p.adam_v[idx] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            p.tensor.data_mut()[idx] -= opt.learning_rate * m_hat / (v_hat.sqrt() + opt.epsilon);
        }
    }
}
