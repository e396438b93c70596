//! Adam optimizer with bias correction, operating on the classifier's
//! canonical tensor list.

use crate::error::{Error, Result};

use super::classifier::ClassifierParams;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &ClassifierParams) -> AdamState {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam update. `grads` must have the same tensor layout as `params`.
pub fn adam_step(
    params: &mut ClassifierParams,
    grads: &ClassifierParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if param_tensors.len() != state.m.len() || grad_tensors.len() != state.m.len() {
        return Err(Error::Dimension(
            "optimizer state does not match parameter layout".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for ((theta, g), (m, v)) in param_tensors
        .iter_mut()
        .zip(&grad_tensors)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if theta.len() != g.len() {
            return Err(Error::Dimension(format!(
                "gradient tensor length {} != parameter length {}",
                g.len(),
                theta.len()
            )));
        }
        for k in 0..theta.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            theta[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::cell::CellKind;
    use crate::rng::Rng;

    fn tiny_params(seed: u64) -> ClassifierParams {
        let mut rng = Rng::seed_from_u64(seed);
        ClassifierParams::init(CellKind::Rnn, 2, 2, 1, false, 0.0, &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = tiny_params(1);
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::for_params(&params);
        for _ in 0..5 {
            adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // bias-corrected first step: m_hat = g, v_hat = g^2,
        // update = lr * g / (|g| + eps) ~ lr * sign(g)
        let mut params = tiny_params(2);
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads.head_b = 0.37;
        let mut state = AdamState::for_params(&params);
        let cfg = AdamConfig::with_lr(1e-3);
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let delta = before.head_b - params.head_b;
        assert!((delta - 1e-3).abs() < 1e-9, "delta {delta}");
        // untouched tensors stay put
        assert_eq!(params.head_w, before.head_w);
    }

    #[test]
    fn identical_calls_identical_results() {
        let run = || {
            let mut params = tiny_params(3);
            let mut grads = params.zeros_like();
            grads.head_w[0] = -0.2;
            grads.head_b = 0.1;
            let mut state = AdamState::for_params(&params);
            for _ in 0..10 {
                adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }
}
