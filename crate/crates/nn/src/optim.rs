use crate::params::ParamStore;
use crate::{NnError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows(), t.cols());
        Self {
            config,
            step: 0,
            first: params.iter().map(|(_, t)| zeros(t)).collect(),
            second: params.iter().map(|(_, t)| zeros(t)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Restores a previously saved state.
    pub fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Result<()> {
        if first.len() != self.first.len() || second.len() != self.second.len() {
            return Err(NnError::Shape("adam state length mismatch".into()));
        }
        for (old, new) in self
            .first
            .iter()
            .zip(&first)
            .chain(self.second.iter().zip(&second))
        {
            if old.shape() != new.shape() {
                return Err(NnError::Shape(format!(
                    "adam moment {:?} vs {:?}",
                    old.shape(),
                    new.shape()
                )));
            }
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    /// Applies one update. Fails without touching any parameter if a gradient
    /// is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(NnError::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(NnError::Shape(format!(
                    "gradient for {} has shape {:?}",
                    params.name(id),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGrad(params.name(id).to_string()));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(value));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = single(1.5);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(params.get(params.ids().next().unwrap()).item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
        let g = 0.3;
        let cfg = AdamConfig::default();
        let mut params = single(1.0);
        let mut adam = Adam::new(cfg, &params);
        adam.step(&mut params, &[Tensor::scalar(g)]).unwrap();
        let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
        let got = params.get(params.ids().next().unwrap()).item();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn descends_a_quadratic() {
        // f(w) = (w - 3)^2
        let f = |w: f64| (w - 3.0).powi(2);
        let mut params = single(0.0);
        let id = params.ids().next().unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let start = f(params.get(id).item());
        for _ in 0..2 {
            let w = params.get(id).item();
            adam.step(&mut params, &[Tensor::scalar(2.0 * (w - 3.0))])
                .unwrap();
        }
        assert!(f(params.get(id).item()) < start);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = single(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let err = adam
            .step(&mut params, &[Tensor::scalar(f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGrad(ref n) if n == "w"));
        assert_eq!(adam.steps_taken(), 0);
    }
}
