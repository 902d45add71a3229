//! SGD with classical momentum: `v <- m v + g`, `p <- p - lr v`.

use crate::error::{Error, Result};

use super::{Gradients, Network};

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64) -> Result<Self> {
        if learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        let mut velocity = Vec::new();
        net.visit_params(|_, slice| velocity.push(vec![0.0; slice.len()]));
        Ok(Self { learning_rate, momentum, velocity })
    }
}

/// One SGD step over all parameters, in network traversal order.
pub fn sgd_step(net: &mut Network, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    let grad_slices = grads.flat_slices();
    let mut param_slices = net.param_slices_mut();
    if grad_slices.len() != state.velocity.len() || param_slices.len() != state.velocity.len() {
        return Err(Error::Contract("optimizer state does not match network".into()));
    }
    for ((params, grad), vel) in param_slices.iter_mut().zip(grad_slices).zip(state.velocity.iter_mut()) {
        if params.len() != grad.len() || params.len() != vel.len() {
            return Err(Error::Contract("velocity buffer shape mismatch".into()));
        }
        for i in 0..grad.len() {
            vel[i] = state.momentum * vel[i] + grad[i];
            params[i] -= state.learning_rate * vel[i];
        }
    }
    Ok(())
}
