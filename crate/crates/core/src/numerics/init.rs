use super::{Matrix, Rng};

/// Truncation point of the initializer's normal, in standard deviations.
pub const TRUNCATION: f64 = 2.0;

/// Glorot scale `sqrt(2 / (fan_in + fan_out))`.
pub fn xavier_scale(fan_in: usize, fan_out: usize) -> f64 {
    (2.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Standard normal draw, resampled until it lands inside `±TRUNCATION`.
pub fn truncated_normal(rng: &mut Rng) -> f64 {
    loop {
        let z = rng.standard_normal();
        if z.abs() <= TRUNCATION {
            return z;
        }
    }
}

/// `fan_out x fan_in` weights drawn from a truncated normal scaled by the
/// Glorot factor.
pub fn xavier_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    assert!(fan_in >= 1 && fan_out >= 1, "fan sizes must be positive");
    let scale = xavier_scale(fan_in, fan_out);
    let data = xavier_values(fan_out * fan_in, scale, rng);
    Matrix::from_vec(fan_out, fan_in, data).expect("length matches")
}

pub(crate) fn xavier_values(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| scale * truncated_normal(rng)).collect()
}
