//! Adaptive-moment stochastic gradient optimizer with global-norm clipping.

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;

/// Optimizer state: step count plus per-parameter first/second moment
/// accumulators.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled so their global L2 norm never exceeds this.
    pub clip_norm: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Defaults: lr 1e-3, decays (0.9, 0.999), eps 1e-8, clip 10.
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        let v = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 10.0,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients, then zero them.
    ///
    /// A NaN/Inf gradient aborts the step before any parameter is touched
    /// and reports the offending parameter by name.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for (_, p) in store.iter() {
            if let Some(bad) = p.grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite gradient {bad} in parameter `{}`; step aborted",
                    p.name
                )));
            }
        }

        let sq_norm: f64 = store
            .iter()
            .map(|(_, p)| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum();
        let norm = sq_norm.sqrt();
        let scale = if norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = store.get_mut(id);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for k in 0..p.values.len() {
                let g = p.grad[k] * scale;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p.values[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad.fill(0.0);
        }

        debug_assert!(
            store
                .iter()
                .all(|(_, p)| p.values.iter().all(|x| x.is_finite())),
            "parameters must stay finite after an optimizer step"
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let p = store.add("x", (2, 1), vec![1.0, -2.0]);
        let mut opt = Adam::new(&store, 1e-3);
        opt.step(&mut store).unwrap();
        assert_eq!(store.values(p), &[1.0, -2.0]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_displacement_equals_learning_rate() {
        // Constant gradient 1.0 from moment-zero state: bias correction makes
        // m_hat = 1, v_hat = 1, so the update is lr / (1 + eps) ~ lr.
        let mut store = ParamStore::new();
        let p = store.add("x", (1, 1), vec![0.0]);
        let lr = 0.05;
        let mut opt = Adam::new(&store, lr);
        store.accumulate_grad(p, &[1.0]);
        opt.step(&mut store).unwrap();
        let moved = store.values(p)[0].abs();
        assert!((moved - lr).abs() < 1e-6, "moved {moved}, lr {lr}");
    }

    #[test]
    fn quadratic_converges_and_matches_independent_recurrence() {
        // Minimize (x - 3)^2 from x0 = 0.
        let mut store = ParamStore::new();
        let p = store.add("x", (1, 1), vec![0.0]);
        let mut opt = Adam::new(&store, 0.1);

        // Independent scalar re-implementation of the same update rule.
        let (mut x_ref, mut m_ref, mut v_ref) = (0.0f64, 0.0f64, 0.0f64);
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);

        for t in 1..=500 {
            let x = store.values(p)[0];
            store.accumulate_grad(p, &[2.0 * (x - 3.0)]);
            opt.step(&mut store).unwrap();

            let g = 2.0 * (x_ref - 3.0);
            m_ref = b1 * m_ref + (1.0 - b1) * g;
            v_ref = b2 * v_ref + (1.0 - b2) * g * g;
            let m_hat = m_ref / (1.0 - b1.powi(t));
            let v_hat = v_ref / (1.0 - b2.powi(t));
            x_ref -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let x = store.values(p)[0];
        assert!((x - 3.0).abs() < 1e-2, "x = {x}");
        assert!((x - x_ref).abs() < 1e-9, "impl {x} vs reference {x_ref}");
    }

    #[test]
    fn nan_gradient_aborts_and_names_parameter() {
        let mut store = ParamStore::new();
        let p = store.add("theta", (1, 1), vec![0.5]);
        let mut opt = Adam::new(&store, 1e-3);
        store.accumulate_grad(p, &[f64::NAN]);
        let err = opt.step(&mut store).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("theta"), "{msg}");
        // Parameter untouched.
        assert_eq!(store.values(p), &[0.5]);
    }

    #[test]
    fn huge_gradients_are_clipped_to_global_norm() {
        let mut store = ParamStore::new();
        let p = store.add("x", (2, 1), vec![0.0, 0.0]);
        let mut opt = Adam::new(&store, 1e-3);
        store.accumulate_grad(p, &[3e7, 4e7]);
        opt.step(&mut store).unwrap();
        assert!(store.values(p).iter().all(|x| x.is_finite()));
    }
}
