//! Error measures reported for every snapshot.

use nalgebra::DVector;

/// Mean squared error to `θ*` and the disagreement `‖Θ − 1θ̄ᵀ‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// `(1/N) Σ_v ‖θ_v − θ*‖²`.
    pub mse: f64,
    /// Frobenius norm of `Y = QΘ`, `Q = I − (1/N)11ᵀ`.
    pub consensus_error: f64,
}

/// Average of the agents' weights, `θ̄`.
pub fn mean_theta(thetas: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(thetas[0].len());
    for t in thetas {
        acc += t;
    }
    acc / thetas.len() as f64
}

pub fn error_metrics(thetas: &[DVector<f64>], theta_star: &DVector<f64>) -> ErrorMetrics {
    let n = thetas.len() as f64;
    let mean = mean_theta(thetas);
    let mse = thetas.iter().map(|t| (t - theta_star).norm_squared()).sum::<f64>() / n;
    let consensus_error = thetas.iter().map(|t| (t - &mean).norm_squared()).sum::<f64>().sqrt();
    ErrorMetrics { mse, consensus_error }
}
