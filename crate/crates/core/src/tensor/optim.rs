use super::{NamedTensor, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are indexed like the parameter
/// slice handed to [`Adam::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[NamedTensor]) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::invalid("adam", format!("learning rate {} must be positive", config.lr)));
        }
        let zeros = || params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Ok(Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        })
    }

    /// Restores a state previously taken apart with [`Adam::moments`].
    pub fn from_parts(config: AdamConfig, step: u64, m: Vec<Vec<Real>>, v: Vec<Vec<Real>>) -> Self {
        Adam { config, step, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<Real>], &[Vec<Real>]) {
        (&self.m, &self.v)
    }

    /// One update. Parameters whose gradient is `None` are left alone and
    /// keep their moments. A non-finite gradient aborts before anything moves.
    pub fn step(&mut self, params: &mut [NamedTensor], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid(
                "adam",
                format!(
                    "optimizer tracks {} parameters, got {} parameters and {} gradients",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                p.value.expect_same_shape(g, "adam")?;
                if g.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(p.name.clone()));
                }
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
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
