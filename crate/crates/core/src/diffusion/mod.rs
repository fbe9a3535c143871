//! Mixed-type denoising diffusion.
//!
//! Continuous columns follow the Gaussian process
//! `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`; categorical columns follow
//! the multinomial process `x_t ~ Cat(abar_t x_0 + (1 - abar_t) / K)`. A single
//! dense denoiser predicts the Gaussian noise and the logits of `x_0`.

mod forward;
mod model;
mod schedule;

pub use forward::{
    categorical_marginal, categorical_posterior, check_one_hot, one_step_kernel,
    q_sample_categorical, q_sample_categorical_seeded, q_sample_continuous,
};
pub use model::{
    sinusoidal_embedding, DiffusionMode, DiffusionModel, TrainConfig, CHECKPOINT_FORMAT,
};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind};
