//! Path-lasso penalized autoencoders.
//!
//! A path-lasso penalty groups every path between an input and a latent
//! node, so a connection is either cut completely or kept. The proximal
//! step shrinks those groups and translates the shrunk path sums back into
//! individual link weights through a seed-bounded non-negative matrix
//! factorization.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod network;
pub mod penalties;
pub mod trainer;

pub use error::{Error, Result};
pub use evaluation::MetricReport;
pub use network::{Activation, Network};
pub use penalties::ConnectionMatrix;
pub use trainer::{Autoencoder, AutoencoderSpec, TrainConfig, TrainReport};
