//! Adam with bias correction and stepped learning-rate decay.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate is multiplied by `decay_factor` every `decay_every`
    /// epochs; with the defaults it drops 1e-3 -> 1e-4 entering epoch 30.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_every: 30,
            decay_factor: 0.1,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.epsilon > 0.0
            && self.decay_every >= 1
            && self.decay_factor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Checkpoint(format!(
                "invalid optimizer constants: {self:?}"
            )))
        }
    }
}

/// Per-parameter first/second moment state plus the step and epoch counters.
#[derive(Debug, Clone)]
pub struct OptimState {
    cfg: AdamConfig,
    step_count: u64,
    epoch: usize,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimState {
    pub fn new(cfg: AdamConfig, param_count: usize) -> Result<Self, NnError> {
        cfg.validate()?;
        Ok(OptimState {
            cfg,
            step_count: 0,
            epoch: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        })
    }

    /// Tell the optimizer which epoch it is in; drives the stepped decay.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn effective_learning_rate(&self) -> f64 {
        self.cfg.learning_rate
            * self
                .cfg
                .decay_factor
                .powi((self.epoch / self.cfg.decay_every) as i32)
    }

    /// One Adam update. Rejects non-finite gradients with a diagnostic.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::GradientShape {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = self.effective_learning_rate();
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);

        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.first_moment[i] + (1.0 - b1) * g;
            let v = b2 * self.second_moment[i] + (1.0 - b2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude_is_alpha() {
        // Hand-derived first step: m_hat = g, v_hat = g^2, so the update is
        // alpha * g / (|g| + eps) — within float noise of alpha * |g| /
        // (|g| + eps * sqrt(1 - beta2)) and of alpha itself.
        let cfg = AdamConfig::default();
        let g = 0.37;
        let mut params = vec![1.0];
        let mut opt = OptimState::new(cfg.clone(), 1).unwrap();
        opt.step(&mut params, &[g]).unwrap();
        let update = 1.0 - params[0];
        let exact = cfg.learning_rate * g / (g + cfg.epsilon);
        assert!((update - exact).abs() < 1e-15, "update {update} vs {exact}");
        let alt = cfg.learning_rate * g / (g + cfg.epsilon * (1.0 - cfg.beta2).sqrt());
        assert!((update - alt).abs() / alt < 1e-5);
        assert!((update - cfg.learning_rate).abs() / cfg.learning_rate < 1e-5);
    }

    #[test]
    fn zero_gradients_leave_params_untouched() {
        let mut params = vec![0.5, -1.5, 2.0];
        let mut opt = OptimState::new(AdamConfig::default(), 3).unwrap();
        for _ in 0..10 {
            opt.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(params, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn decay_boundary_drops_learning_rate_tenfold() {
        let mut opt = OptimState::new(AdamConfig::default(), 1).unwrap();
        opt.set_epoch(29);
        assert!((opt.effective_learning_rate() - 1e-3).abs() < 1e-18);
        opt.set_epoch(30);
        assert!((opt.effective_learning_rate() - 1e-4).abs() < 1e-18);
        opt.set_epoch(60);
        assert!((opt.effective_learning_rate() - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut params = vec![1.0, 2.0];
        let mut opt = OptimState::new(AdamConfig::default(), 2).unwrap();
        let err = opt.step(&mut params, &[0.1, f64::NAN]).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient(1)));
    }

    #[test]
    fn bad_constants_rejected() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(OptimState::new(cfg, 1).is_err());
    }
}
