//! Car-following trajectory simulation and noise injection.

mod generate;
mod models;
mod noise;

pub use generate::{generate_dataset, regenerate_targets, target_expression, GenerateConfig};
pub use models::{step_ghr, step_gm, step_krauss, CarFollowingModel, VehicleParams};
pub use noise::{add_noise, NoiseSpec, MAX_NOISE_LEVEL};
