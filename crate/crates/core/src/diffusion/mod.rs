//! Diffusion over node embeddings.
//!
//! The forward process corrupts a table toward Gaussian noise following a
//! schedule built from a linear sequence `b = (1, b̄_max, …, b̄_min)` with
//! `β_t = 1 − b_t/b_{t−1}`. A time-conditioned denoiser predicts the clean
//! table directly. Training pairs a corrupted auxiliary-view table with the
//! clean target-view table; inference corrupts the auxiliary view to a
//! small step and walks the posterior mean back to step 0.

mod dae;
mod denoiser;
mod forward;
mod loss;
mod reverse;
mod schedule;

pub use dae::{dae_denoise_traced, dae_loss, dae_noise_std};
pub use denoiser::{denoise_predict, sinusoidal_table, Denoiser, DenoiserParams, DenoiserTrace};
pub use forward::{q_sample, q_step, Noise};
pub use loss::{diffusion_loss, diffusion_loss_at, DiffusionLoss};
pub use reverse::{
    reverse_denoise, reverse_denoise_backward, reverse_denoise_traced, ReverseTrace,
};
pub use schedule::{build_schedule, DiffusionConfig, DiffusionSchedule};
