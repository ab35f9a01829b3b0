//! Problem builders for the bundled applications. Each builder wires the local
//! costs, the shared regularizer and feasible set, the ground truth when one
//! exists, and the surrogates that suit the cost structure.

pub mod cartography;
pub mod flow_control;
pub mod localization;
pub mod sparse_ml;

use thiserror::Error;

use crate::problem::ProblemError;
use crate::surrogate::SurrogateError;

pub use cartography::{build_cartography, CartographyConfig, CartographyInstance};
pub use flow_control::{build_flow_control, FlowControlConfig, FlowControlInstance, Sigmoid};
pub use localization::{
    build_localization, LocalizationConfig, LocalizationCost, LocalizationInstance,
    LocalizationSurrogate,
};
pub use sparse_ml::{
    build_sparse_ml, generate_sparse_ml, Likelihood, SparseMlConfig, SparseMlInstance,
    StudentTCost,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// Mean of the squared entries.
pub fn mean_square(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// Common noise variance `σ²` for which the smallest per-node SNR
/// `P_i / σ²` equals `snr_db`, where `P_i` is node `i`'s mean squared
/// noiseless measurement. `+∞` dB means no noise.
pub fn noise_variance_for_min_snr(signal_powers: &[f64], snr_db: f64) -> Result<f64, AppError> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(AppError::Invalid(format!("SNR of {snr_db} dB")));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let weakest = signal_powers.iter().copied().fold(f64::INFINITY, f64::min);
    if !(weakest.is_finite() && weakest > 0.0) {
        return Err(AppError::Invalid(
            "every node needs a positive noiseless signal power to calibrate the SNR".into(),
        ));
    }
    Ok(weakest / 10f64.powf(snr_db / 10.0))
}

/// `min_i 10 log10(P_i / σ²)`.
pub fn min_snr_db(signal_powers: &[f64], variance: f64) -> f64 {
    signal_powers
        .iter()
        .map(|p| 10.0 * (p / variance).log10())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_hits_the_requested_snr() {
        let powers = [0.3, 2.0, 0.05, 7.0];
        for db in [-20.0, 0.0, 3.0, 17.5] {
            let v = noise_variance_for_min_snr(&powers, db).unwrap();
            assert!((min_snr_db(&powers, v) - db).abs() < 1e-9);
        }
        assert_eq!(noise_variance_for_min_snr(&powers, f64::INFINITY).unwrap(), 0.0);
        assert!(noise_variance_for_min_snr(&powers, f64::NEG_INFINITY).is_err());
        assert!(noise_variance_for_min_snr(&[0.0, 1.0], 3.0).is_err());
    }
}
