//! Single-level denoising autoencoder used as an ablation of the diffusion
//! module. It reuses the denoiser network, pinned to step `T`, and corrupts
//! with additive noise of standard deviation `√(1−ᾱ_T)`.

use super::loss::check_pair;
use super::{DenoiserParams, DenoiserTrace, DiffusionLoss, DiffusionSchedule};
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

pub fn dae_noise_std(schedule: &DiffusionSchedule) -> f64 {
    (1.0 - schedule.alpha_bar(schedule.steps())).sqrt()
}

/// `(1/n) Σ_i ‖f(source_i + σ·noise_i) − target_i‖²`.
pub fn dae_loss(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
    target: &DenseMatrix,
    noise: &DenseMatrix,
) -> Result<DiffusionLoss> {
    check_pair(source, target, params.dim())?;
    if noise.shape() != source.shape() {
        return Err(Error::shape(
            "dae noise",
            format!("{:?}", source.shape()),
            format!("{:?}", noise.shape()),
        ));
    }
    let n = source.rows();
    let mut corrupted = source.clone();
    corrupted.axpy(dae_noise_std(schedule), noise)?;
    let times = vec![schedule.steps(); n];
    let (pred, trace) = params.predict_traced(&corrupted, &times)?;
    let diff = pred.sub(target)?;
    let loss = diff.frobenius_sq() / n as f64;
    let mut grad_params = params.zeros_like();
    let grad_source = params.backward(&trace, &diff.scale(2.0 / n as f64), &mut grad_params)?;
    Ok(DiffusionLoss {
        loss,
        times,
        grad_params,
        grad_source,
    })
}

/// Inference pass on clean input.
pub fn dae_denoise_traced(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
) -> Result<(DenseMatrix, DenoiserTrace)> {
    params.predict_traced(source, &vec![schedule.steps(); source.rows()])
}
