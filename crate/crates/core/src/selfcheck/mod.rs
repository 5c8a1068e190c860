//! Gradient and oracle suites shared by the `selfcheck` command and the
//! acceptance tests.

mod composite;
mod oracles;
mod primitives;

pub use composite::{jepa_gradient_error, reasoner_gradient_error, toy_grid, toy_model_config};
pub use oracles::{ema_law_error, mask_oracle_failures, physics_error};
pub use primitives::primitive_gradient_errors;
