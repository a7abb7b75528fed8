//! Adam optimizer with bias correction; moments live alongside the
//! parameter order of the [`ParamSet`] they were created for.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::neural::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, ..Default::default() }
    }
}

/// Optimizer state: first and second moments per parameter scalar plus the
/// step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> Self {
        Adam {
            hyper,
            m: (0..params.len()).map(|i| vec![0.0; params.tensor_at(i).len()]).collect(),
            v: (0..params.len()).map(|i| vec![0.0; params.tensor_at(i).len()]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Raw moment buffers in parameter order, for checkpointing.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restores optimizer state saved by [`Adam::moments`].
    pub fn restore(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }

    /// One update using the gradients stored in `params`; gradients are left
    /// untouched (zero them before the next accumulation).
    pub fn step(&mut self, params: &mut ParamSet) {
        adam_step(params, self, ());
    }
}

/// Standard Adam update with bias correction; advances the step counter.
/// The unit argument keeps the signature shaped as (params, state, hyper)
/// with the hyperparameters carried inside the state.
pub fn adam_step(params: &mut ParamSet, state: &mut Adam, _hyper: ()) {
    state.t += 1;
    let h = state.hyper;
    let bc1 = 1.0 - math::powi(h.beta1, state.t as i32);
    let bc2 = 1.0 - math::powi(h.beta2, state.t as i32);
    for p in 0..params.len() {
        let grad = params.grad_at(p).data().to_vec();
        let m = &mut state.m[p];
        let v = &mut state.v[p];
        let data = params.tensor_at_mut(p).data_mut();
        for j in 0..data.len() {
            let g = grad[j];
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= h.lr * m_hat / (math::sqrt(v_hat) + h.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn one_param(values: Vec<f64>) -> ParamSet {
        let mut p = ParamSet::new();
        let n = values.len();
        p.add("w", Tensor::new(vec![1, n], values).unwrap());
        p
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // Bias correction makes the very first update lr * g/(|g| + eps').
        let mut params = one_param(vec![1.0, -2.0, 0.5]);
        params.grad_at_mut(0).data_mut().copy_from_slice(&[0.3, -4.0, 1e-3]);
        let mut adam = Adam::new(&params, AdamHyper::with_lr(1e-3));
        let before = params.tensor_at(0).data().to_vec();
        adam.step(&mut params);
        for j in 0..3 {
            let step = params.tensor_at(0).data()[j] - before[j];
            assert!((step.abs() - 1e-3).abs() < 1e-5, "step {step}");
            // Update opposes the gradient sign.
            assert!(step.signum() == -params.grad_at(0).data()[j].signum());
        }
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut params = one_param(vec![0.7, -0.3]);
        let mut adam = Adam::new(&params, AdamHyper::default());
        let before = params.clone();
        for _ in 0..10 {
            adam.step(&mut params);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn deterministic_across_reruns() {
        let run = || {
            let mut params = one_param(vec![0.1, 0.2, 0.3, 0.4]);
            let mut adam = Adam::new(&params, AdamHyper::with_lr(0.01));
            for step in 0..100u64 {
                let g: Vec<f64> = (0..4).map(|j| ((step as f64) * 0.01 + j as f64).sin()).collect();
                params.grad_at_mut(0).data_mut().copy_from_slice(&g);
                adam.step(&mut params);
            }
            params.tensor_at(0).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize 0.5*(w - 3)^2; gradient w - 3.
        let mut params = one_param(vec![0.0]);
        let mut adam = Adam::new(&params, AdamHyper::with_lr(0.05));
        for _ in 0..2000 {
            let w = params.tensor_at(0).data()[0];
            params.grad_at_mut(0).data_mut()[0] = w - 3.0;
            adam.step(&mut params);
        }
        assert!((params.tensor_at(0).data()[0] - 3.0).abs() < 1e-3);
    }
}
