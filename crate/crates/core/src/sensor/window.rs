//! Four-term Blackman-Harris window.

use std::f64::consts::TAU;

use super::SensorError;

const A0: f64 = 0.35875;
const A1: f64 = 0.48829;
const A2: f64 = 0.14128;
const A3: f64 = 0.01168;

/// Symmetric window of length `n`. A single-point window is `[1.0]`.
pub fn blackman_harris(n: usize) -> Result<Vec<f64>, SensorError> {
    match n {
        0 => Err(SensorError::EmptyWindow),
        1 => Ok(vec![1.0]),
        _ => {
            let denom = (n - 1) as f64;
            Ok((0..n)
                .map(|k| {
                    let x = TAU * k as f64 / denom;
                    A0 - A1 * x.cos() + A2 * (2.0 * x).cos() - A3 * (3.0 * x).cos()
                })
                .collect())
        }
    }
}
