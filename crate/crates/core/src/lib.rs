//! Knockoff feature selection with an estimated latent-factor covariate model.

pub mod data;
pub mod error;
pub mod factor;
pub mod forecast;
pub mod forest;
pub mod inference;
pub mod knockoff;
pub mod lasso;
pub mod pipeline;
pub mod seed;
pub mod simlab;

pub use error::{IpadError, Result};
pub use seed::SeedSpec;
