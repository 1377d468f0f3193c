//! Shared fixtures for the integration suites.

use bimr::ModelParams;

/// Five variants, both causal directions at 0.6, pleiotropy on variants
/// 1, 3, 4, a confounder loaded on both phenotypes, unit variances all
/// around. Variants 0 and 2 are the only valid instruments, both for the
/// x-to-y direction.
pub fn reference_params() -> ModelParams {
    ModelParams {
        beta_xy: 0.6,
        beta_yx: 0.6,
        gamma_x: vec![1.0, 1.0, 1.0, 1.8, 1.2],
        gamma_y: vec![0.0, 0.5, 0.0, 0.6, 0.3],
        gamma_u: vec![0.0; 5],
        gamma_xu: 1.0,
        gamma_yu: 1.0,
        variant_variances: vec![1.0; 5],
        noise_variances: [1.0, 1.0, 1.0],
    }
}
