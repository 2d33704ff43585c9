use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    #[serde(rename = "relu")]
    ReLU,
    Linear,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::ReLU,
        ActivationKind::Linear,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::ReLU => z.max(0.0),
            ActivationKind::Linear => z,
        }
    }

    /// Derivative at `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Linear => 1.0,
        }
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: ActivationKind, z: &Matrix) -> Matrix {
    z.map(|v| kind.apply(v))
}

pub fn activate_derivative(kind: ActivationKind, z: &Matrix) -> Matrix {
    z.map(|v| kind.derivative(v))
}
