use serde::{Deserialize, Serialize};

use super::net::{Gradients, Network};
use crate::error::{contract, shape_err, Result};
use crate::numerics::Matrix;

/// RMSprop state: one running mean of squared gradients per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    /// `(psi_w, psi_b)` for every parameterized layer, `None` for pooling.
    pub accumulators: Vec<Option<(Matrix, Matrix)>>,
    pub decay: f64,
    pub epsilon: f64,
}

impl OptState {
    pub fn new(net: &Network, decay: f64, epsilon: f64) -> Self {
        assert!((0.0..1.0).contains(&decay), "decay must lie in [0, 1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        let accumulators = net
            .layers()
            .iter()
            .map(|l| {
                l.params()
                    .map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), Matrix::zeros(b.rows(), b.cols())))
            })
            .collect();
        Self {
            accumulators,
            decay,
            epsilon,
        }
    }
}

/// One RMSprop update of every weight and bias:
/// `psi <- decay*psi + (1-decay)*g^2`, `p <- p - lr * g / sqrt(psi + epsilon)`.
pub fn rmsprop_step(net: &mut Network, grads: &Gradients, opt: &mut OptState, lr: f64) -> Result<()> {
    let n = net.layers().len();
    if grads.layers.len() != n || opt.accumulators.len() != n {
        return Err(contract("gradient/optimizer state does not match the network"));
    }
    let (beta, eps) = (opt.decay, opt.epsilon);
    for ((layer, g), acc) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(opt.accumulators.iter_mut())
    {
        match (layer.params_mut(), g, acc) {
            (Some((w, b)), Some(g), Some((pw, pb))) => {
                update(w, &g.dw, pw, beta, eps, lr)?;
                update(b, &g.db, pb, beta, eps, lr)?;
            }
            (None, None, None) => {}
            _ => return Err(contract("gradient/optimizer state does not match the network")),
        }
    }
    Ok(())
}

fn update(param: &mut Matrix, g: &Matrix, psi: &mut Matrix, beta: f64, eps: f64, lr: f64) -> Result<()> {
    if param.shape() != g.shape() || psi.shape() != g.shape() {
        return Err(shape_err("rmsprop_step", param.shape_str(), g.shape_str()));
    }
    for ((p, &gv), s) in param.data_mut().iter_mut().zip(g.data()).zip(psi.data_mut()) {
        *s = beta * *s + (1.0 - beta) * gv * gv;
        *p -= lr * gv / (*s + eps).sqrt();
    }
    Ok(())
}
