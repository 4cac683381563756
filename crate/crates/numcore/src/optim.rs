//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::NumError;
use crate::real::Real;
use crate::store::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig<F: Real> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
}

impl<F: Real> AdamConfig<F> {
    pub fn with_lr(lr: F) -> Self {
        AdamConfig {
            lr,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
        }
    }
}

/// First/second moment accumulators per parameter plus the shared step count.
#[derive(Debug, Clone)]
pub struct AdamState<F: Real> {
    pub cfg: AdamConfig<F>,
    m: BTreeMap<String, Tensor<F>>,
    v: BTreeMap<String, Tensor<F>>,
    step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(cfg: AdamConfig<F>) -> Self {
        AdamState {
            cfg,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every named gradient.
    ///
    /// The step is rejected before any mutation if a gradient is non-finite
    /// or shaped differently from its parameter.
    pub fn step(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &BTreeMap<String, Tensor<F>>,
    ) -> Result<(), NumError> {
        for (name, grad) in grads {
            let param = params.get(name)?;
            if param.shape() != grad.shape() {
                return Err(NumError::shapes("adam_step", param.shape(), grad.shape()));
            }
            if !grad.is_finite() {
                return Err(NumError::NonFinite {
                    context: format!("gradient of {name:?}"),
                });
            }
        }

        self.step += 1;
        let t = self.step;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        // 1 − βᵗ computed in f64 to keep long-run bias correction exact.
        let bc1 = F::from_f64(1.0 - self.cfg.beta1.as_f64().powi(t as i32));
        let bc2 = F::from_f64(1.0 - self.cfg.beta2.as_f64().powi(t as i32));

        for (name, grad) in grads {
            let shape = grad.shape().to_vec();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(shape.clone()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(shape.clone()));
            let param = params.get_mut(name)?;
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = b1 * md[i] + (F::one() - b1) * g;
                vd[i] = b2 * vd[i] + (F::one() - b2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }

    /// Copies moments and step count into `store` under `prefix` for
    /// checkpointing.
    pub fn export_into(&self, store: &mut ParamStore<F>, prefix: &str) -> Result<(), NumError> {
        for (name, t) in &self.m {
            store.insert(&format!("{prefix}.m.{name}"), t.clone())?;
        }
        for (name, t) in &self.v {
            store.insert(&format!("{prefix}.v.{name}"), t.clone())?;
        }
        store.insert(
            &format!("{prefix}.step"),
            Tensor::scalar(F::from_f64(self.step as f64)),
        )?;
        Ok(())
    }

    /// Restores moments and step count saved by [`AdamState::export_into`].
    pub fn import_from(&mut self, store: &ParamStore<F>, prefix: &str) -> Result<(), NumError> {
        self.m.clear();
        self.v.clear();
        let m_prefix = format!("{prefix}.m.");
        let v_prefix = format!("{prefix}.v.");
        for (name, t) in store.iter() {
            if let Some(stripped) = name.strip_prefix(&m_prefix) {
                self.m.insert(stripped.to_string(), t.clone());
            } else if let Some(stripped) = name.strip_prefix(&v_prefix) {
                self.v.insert(stripped.to_string(), t.clone());
            }
        }
        self.step = store.get(&format!("{prefix}.step"))?.item().as_f64() as u64;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, vals: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::from_vec(vec![vals.len()], vals).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = store_with("p", vec![1.5, -2.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1));
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::zeros(vec![2]));
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params.get("p").unwrap().data(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With bias correction, m̂ = g and v̂ = g², so the first update is
        // −lr·g/(|g|+ε) ≈ −lr·sign(g).
        let mut params = store_with("p", vec![1.0, 1.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.05));
        let mut grads = BTreeMap::new();
        grads.insert(
            "p".to_string(),
            Tensor::from_vec(vec![2], vec![3.0, -0.25]).unwrap(),
        );
        adam.step(&mut params, &grads).unwrap();
        let p = params.get("p").unwrap().data();
        assert!((p[0] - (1.0 - 0.05)).abs() < 1e-6, "{p:?}");
        assert!((p[1] - (1.0 + 0.05)).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let mut params = store_with("p", vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1));
        let mut grads = BTreeMap::new();
        grads.insert(
            "p".to_string(),
            Tensor::from_vec(vec![1], vec![f64::NAN]).unwrap(),
        );
        assert!(adam.step(&mut params, &grads).is_err());
        assert_eq!(params.get("p").unwrap().data(), &[1.0]);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn step_counter_increments_once_per_update() {
        let mut params = store_with("p", vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1));
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::from_vec(vec![1], vec![0.5]).unwrap());
        for expect in 1..=5u64 {
            adam.step(&mut params, &grads).unwrap();
            assert_eq!(adam.step_count(), expect);
        }
    }
}
