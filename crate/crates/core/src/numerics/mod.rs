//! Random streams, dense matrices, initializers and activations.

mod activation;
mod init;
mod matrix;
mod rng;

pub use activation::{activate, activate_derivative, ActivationKind};
pub use init::{truncated_normal, xavier_init, xavier_scale, TRUNCATION};
pub(crate) use init::xavier_values;
pub use matrix::Matrix;
pub(crate) use matrix::gemm_into;
pub use rng::{Rng, RNG_ALGORITHM};

use crate::error::{shape_err, Result};

/// `W x + b`, with `b` broadcast across the columns of `x`.
pub fn affine(w: &Matrix, x: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.shape() != (w.rows(), 1) {
        return Err(shape_err("affine bias", w.shape_str(), b.shape_str()));
    }
    let mut z = w.matmul(x)?;
    let k = z.cols();
    for (r, row) in z.data_mut().chunks_mut(k.max(1)).enumerate() {
        let bias = b.get(r, 0);
        row.iter_mut().for_each(|v| *v += bias);
    }
    Ok(z)
}
